#include "splatstream/error.hpp"
#include "splatstream/rasterizer.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <numeric>
#include <random>

using namespace splatstream;

namespace {

Camera axis_camera(int w = 16, int h = 16, float focal = 16.0f) {
    // At the origin looking down +z.
    Camera c;
    c.width = w;
    c.height = h;
    c.fx = c.fy = focal;
    c.cx = 0.5f * w;
    c.cy = 0.5f * h;
    return c;
}

double max_image_difference(const Image& a, const Image& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.pixels[i]) - b.pixels[i]));
    return worst;
}

} // namespace

TEST_CASE("project: covariance matches a finite-difference Jacobian of the perspective map") {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const Camera camera = fixtures::random_camera(rng, 64, 48, 50.0f);
        const Scene scene = fixtures::random_scene(rng, 1, 0.5f);
        const auto a = activate(scene.splats[0]);
        const auto p = project(a, camera, 0, kDefaultCullMargin);
        REQUIRE(p.has_value());

        auto pixel = [&](const Eigen::Vector3d& world) {
            const Eigen::Vector3d v = camera.rotation.cast<double>() * world + camera.translation.cast<double>();
            return Eigen::Vector2d(camera.fx * v.x() / v.z() + camera.cx, camera.fy * v.y() / v.z() + camera.cy);
        };
        const Eigen::Vector3d mean = a.position.cast<double>();
        Eigen::Matrix<double, 2, 3> jacobian;
        const double h = 1e-5;
        for (int k = 0; k < 3; ++k) {
            Eigen::Vector3d step = Eigen::Vector3d::Zero();
            step[k] = h;
            jacobian.col(k) = (pixel(mean + step) - pixel(mean - step)) / (2.0 * h);
        }
        Eigen::Matrix2d expected = jacobian * a.covariance.cast<double>() * jacobian.transpose();
        expected += 0.3 * Eigen::Matrix2d::Identity();
        const double tolerance = 1e-3 * std::max(1.0, expected.cwiseAbs().maxCoeff());
        CHECK((p->cov2d.cast<double>() - expected).cwiseAbs().maxCoeff() < tolerance);
        CHECK((p->mean2d.cast<double>() - pixel(mean)).norm() < 1e-3);

        const Eigen::Matrix2d inverse = p->cov2d.cast<double>().inverse();
        CHECK(std::abs(p->conic[0] - inverse(0, 0)) < 1e-4 * std::max(1.0, std::abs(inverse(0, 0))));
        CHECK(std::abs(p->conic[1] - inverse(0, 1)) < 1e-4 * std::max(1.0, std::abs(inverse(0, 0))));
        CHECK(std::abs(p->conic[2] - inverse(1, 1)) < 1e-4 * std::max(1.0, std::abs(inverse(1, 1))));
    }
}

TEST_CASE("project: culls behind the camera and outside the widened view") {
    const Camera camera = axis_camera();
    Gaussian g;
    g.position = {0.0f, 0.0f, -1.0f};
    CHECK_FALSE(project(activate(g), camera, 0, 0.3f).has_value());
    // Half-width 8 px at focal 16 and depth 1 covers x in [-0.5, 0.5];
    // the 30% margin per side reaches 0.5 + 0.3 * 16 / 16 = 0.8.
    g.position = {0.79f, 0.0f, 1.0f};
    CHECK(project(activate(g), camera, 0, 0.3f).has_value());
    g.position = {0.81f, 0.0f, 1.0f};
    CHECK_FALSE(project(activate(g), camera, 0, 0.3f).has_value());
    CHECK(project(activate(g), camera, 0, 0.5f).has_value());
}

TEST_CASE("render: one splat on the axis composites alpha * colour over the background") {
    const Camera camera = axis_camera();
    Scene scene;
    const float dc = fixtures::dc_for(0.8f);
    scene.splats.push_back(fixtures::splat_at(0.0f, 0.0f, 2.0f, std::log(0.5f), 0.0f, {dc, dc, dc}));
    RenderOptions options;
    options.background = {0.0f, 0.0f, 1.0f};
    options.track_top_k = 4;
    const auto out = render(scene, camera, options);

    // Pixel (7, 7) has its center 0.5 px from the projected mean along x and y.
    const auto p = *project(activate(scene.splats[0]), camera, 0, kDefaultCullMargin);
    const float dx = 7.5f - p.mean2d.x();
    const float dy = 7.5f - p.mean2d.y();
    const float power = -0.5f * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) - p.conic[1] * dx * dy;
    const float alpha = 0.5f * std::exp(power);
    CHECK(out.image.at(7, 7, 0) == doctest::Approx(0.8f * alpha).epsilon(1e-6));
    CHECK(out.image.at(7, 7, 2) == doctest::Approx(0.8f * alpha + (1.0f - alpha)).epsilon(1e-6));
    CHECK(out.final_transmittance[7 * 16 + 7] == doctest::Approx(1.0f - alpha).epsilon(1e-6));
}

TEST_CASE("render: nearer splat occludes the farther one") {
    const Camera camera = axis_camera();
    const float red = fixtures::dc_for(1.0f);
    const float off = fixtures::dc_for(0.0f);
    Scene scene;
    scene.splats.push_back(fixtures::splat_at(0.0f, 0.0f, 3.0f, std::log(1.0f), 8.0f, {off, red, off}));
    scene.splats.push_back(fixtures::splat_at(0.0f, 0.0f, 2.0f, std::log(1.0f), 8.0f, {red, off, off}));
    const auto out = render(scene, camera);
    // Near splat is red with alpha 0.99; the green one gets 1% of the rest.
    CHECK(out.image.at(8, 8, 0) > 0.98f);
    CHECK(out.image.at(8, 8, 1) < 0.011f);
}

TEST_CASE("render: empty scene and fully culled scene give background only") {
    const Camera camera = axis_camera(20, 12);
    RenderOptions options;
    options.background = {0.25f, 0.5f, 0.75f};
    Scene scene;
    auto out = render(scene, camera, options);
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(out.image.at(x, y, c) == options.background[c]);
    scene.splats.push_back(fixtures::splat_at(0.0f, 0.0f, -2.0f, 0.0f, 5.0f));
    CHECK(render(scene, camera, options).image == out.image);
}

TEST_CASE("render: tiled output equals the brute-force oracle, including partial tiles") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Scene scene = fixtures::random_scene(rng, 60);
        const Camera camera = fixtures::random_camera(rng, 40, 23, 30.0f);
        RenderOptions options;
        options.track_top_k = 1000;
        options.background = {0.1f, 0.2f, 0.3f};
        const auto tiled = render(scene, camera, options);
        const auto oracle = fixtures::oracle_render(scene, camera, options.background);
        CHECK(max_image_difference(tiled.image, oracle.image) <= 1e-5);

        std::vector<std::vector<ContributionEntry>> lists(tiled.image.pixel_count());
        for (const auto& pc : tiled.contributions)
            lists[static_cast<std::size_t>(pc.y) * camera.width + pc.x] = pc.entries;
        for (std::size_t i = 0; i < lists.size(); ++i) {
            auto expected = oracle.lists[i];
            std::sort(expected.begin(), expected.end(), heavier);
            REQUIRE(lists[i].size() == expected.size());
            for (std::size_t k = 0; k < expected.size(); ++k) {
                CHECK(lists[i][k].splat_index == expected[k].splat_index);
                CHECK(std::abs(lists[i][k].weight - expected[k].weight) <= 1e-6f);
            }
        }
    }
}

TEST_CASE("render: weights and final transmittance sum to one per pixel") {
    std::mt19937 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const Scene scene = fixtures::random_scene(rng, 80);
        const Camera camera = fixtures::random_camera(rng, 32, 32, 28.0f);
        RenderOptions options;
        options.track_top_k = 1000;
        const auto out = render(scene, camera, options);
        std::vector<double> total(out.final_transmittance.begin(), out.final_transmittance.end());
        for (const auto& pc : out.contributions)
            for (const auto& e : pc.entries)
                total[static_cast<std::size_t>(pc.y) * camera.width + pc.x] += e.weight;
        for (double t : total)
            CHECK(std::abs(t - 1.0) <= 1e-5);
    }
}

TEST_CASE("render: permuting the input leaves the image bit-identical") {
    std::mt19937 rng(51);
    Scene scene = fixtures::random_scene(rng, 120);
    // Coincident copies with different colours exercise the depth tie-break.
    for (int i = 0; i < 10; ++i) {
        Gaussian twin = scene.splats[i];
        twin.sh_dc[0] += 0.5f;
        twin.normal = {1.0f, 2.0f, 3.0f};
        scene.splats.push_back(twin);
    }
    const Camera camera = fixtures::random_camera(rng, 48, 40, 40.0f);
    const Image reference = render(scene, camera).image;
    for (int trial = 0; trial < 5; ++trial) {
        Scene shuffled = scene;
        std::shuffle(shuffled.splats.begin(), shuffled.splats.end(), rng);
        for (auto& g : shuffled.splats)
            g.normal = {0.0f, 0.0f, 0.0f};
        CHECK(render(shuffled, camera).image == reference);
    }
}

TEST_CASE("render: result does not depend on the thread count") {
    std::mt19937 rng(61);
    const Scene scene = fixtures::random_scene(rng, 200);
    const Camera camera = fixtures::random_camera(rng, 64, 64, 50.0f);
    RenderOptions one;
    one.threads = 1;
    one.track_top_k = 20;
    RenderOptions many = one;
    many.threads = 7;
    const auto a = render(scene, camera, one);
    const auto b = render(scene, camera, many);
    CHECK(a.image == b.image);
    CHECK(a.final_transmittance == b.final_transmittance);
    REQUIRE(a.contributions.size() == b.contributions.size());
    for (std::size_t i = 0; i < a.contributions.size(); ++i)
        CHECK(a.contributions[i].entries == b.contributions[i].entries);
}

TEST_CASE("render: top-K keeps the K heaviest entries") {
    std::mt19937 rng(71);
    const Scene scene = fixtures::random_scene(rng, 100);
    const Camera camera = fixtures::random_camera(rng, 16, 16, 14.0f);
    RenderOptions full;
    full.track_top_k = 1000;
    RenderOptions top3;
    top3.track_top_k = 3;
    const auto a = render(scene, camera, full);
    const auto b = render(scene, camera, top3);
    REQUIRE(a.contributions.size() == b.contributions.size());
    for (std::size_t i = 0; i < a.contributions.size(); ++i) {
        const auto& all = a.contributions[i].entries;
        const auto& top = b.contributions[i].entries;
        CHECK(top.size() == std::min<std::size_t>(3, all.size()));
        for (std::size_t k = 0; k < top.size(); ++k)
            CHECK(top[k] == all[k]);
    }
}

TEST_CASE("render: invalid K and invalid camera are rejected") {
    Scene scene;
    RenderOptions options;
    options.track_top_k = 0;
    try {
        render(scene, axis_camera(), options);
        FAIL("expected InvalidK");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidK);
    }
    Camera bad = axis_camera();
    bad.rotation(0, 0) = 2.0f;
    try {
        render(scene, bad);
        FAIL("expected InvalidCamera");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidCamera);
    }
}

TEST_CASE("accumulate_top_k: sums per-pixel top-K weights like the oracle") {
    std::mt19937 rng(81);
    const Scene scene = fixtures::random_scene(rng, 40);
    std::vector<Camera> cameras;
    for (int i = 0; i < 3; ++i)
        cameras.push_back(fixtures::random_camera(rng, 16, 16, 15.0f));
    const auto prepared = prepare(scene);
    std::vector<double> scores(scene.count(), 0.0);
    for (const auto& camera : cameras)
        accumulate_top_k(prepared, camera, 5, scores, kDefaultCullMargin, 0);
    const auto expected = fixtures::oracle_tally(scene, cameras, 5);
    for (std::size_t i = 0; i < scores.size(); ++i)
        CHECK(std::abs(scores[i] - expected[i]) <= 1e-5);
}
