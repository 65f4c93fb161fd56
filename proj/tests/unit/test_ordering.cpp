#include "splatstream/error.hpp"
#include "splatstream/ordering.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

using namespace splatstream;

namespace {

ContributionTally tally_of(std::vector<double> scores) {
    ContributionTally t;
    t.scores = std::move(scores);
    return t;
}

std::vector<std::uint32_t> perm(std::initializer_list<std::uint32_t> v) {
    return v;
}

Scene scene_at(const std::vector<std::array<float, 3>>& positions) {
    Scene scene;
    for (const auto& p : positions)
        scene.splats.push_back(fixtures::splat_at(p[0], p[1], p[2], 0.0f, 0.0f));
    return scene;
}

// A single-pixel splat: tiny scale so the low-pass filter dominates.
Camera pixel_camera() {
    Camera c;
    c.width = c.height = 1;
    c.fx = c.fy = 1.0f;
    c.cx = c.cy = 0.5f;
    return c;
}

} // namespace

TEST_CASE("order_by_contribution: worked examples") {
    CHECK(order_by_contribution(tally_of({0.1, 5.0, 0.1})).permutation == perm({1, 0, 2}));
    CHECK(order_by_contribution(tally_of({2.0, 2.0, 2.0, 2.0})).permutation == perm({0, 1, 2, 3}));
    CHECK(order_by_contribution(tally_of({1.0, 2.0, 3.0})).permutation == perm({2, 1, 0}));
    const auto o = order_by_contribution(tally_of({0.0, 3.0, 1.0}));
    CHECK(o.strategy == Strategy::Contribution);
    CHECK(o.scores == std::vector<float>{3.0f, 1.0f, 0.0f});
}

TEST_CASE("order_by_contribution: invariant to positive scaling and zero scores go last") {
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> scores(50);
        for (auto& s : scores)
            s = u(rng) < 0.2 ? 0.0 : std::floor(u(rng) * 8.0); // plenty of ties
        const auto base = order_by_contribution(tally_of(scores));
        for (double factor : {1e-3, 0.5, 7.0, 1e6}) {
            auto scaled = scores;
            for (auto& s : scaled)
                s *= factor;
            CHECK(order_by_contribution(tally_of(scaled)).permutation == base.permutation);
        }
        bool seen_zero = false;
        for (auto index : base.permutation) {
            if (scores[index] == 0.0)
                seen_zero = true;
            else
                CHECK_FALSE(seen_zero);
        }
    }
}

TEST_CASE("tally_contributions: single pixel, linearity over views, occlusion") {
    Scene scene;
    // alpha at the pixel center is opacity * exp(0) = 0.5.
    scene.splats.push_back(fixtures::splat_at(0.0f, 0.0f, 1.0f, std::log(1e-4f), 0.0f));
    const Camera camera = pixel_camera();
    const std::vector<Camera> one{camera};
    const std::vector<Camera> three{camera, camera, camera};
    CHECK(tally_contributions(scene, one).scores[0] == doctest::Approx(0.5).epsilon(1e-6));
    const auto t3 = tally_contributions(scene, three);
    CHECK(t3.scores[0] == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(t3.views_used == 3);
    CHECK(t3.k_used == kDefaultTopK);

    // An opaque occluder in front drives the transmittance below the cut-off.
    Scene occluded = scene;
    occluded.splats.push_back(fixtures::splat_at(0.0f, 0.0f, 0.5f, std::log(1e-4f), 40.0f));
    occluded.splats.push_back(fixtures::splat_at(0.0f, 0.0f, 0.6f, std::log(1e-4f), 40.0f));
    const auto t = tally_contributions(occluded, one);
    CHECK(t.scores[0] == 0.0);
    CHECK(t.scores[1] == doctest::Approx(0.99).epsilon(1e-6));

    CHECK_THROWS_AS(tally_contributions(scene, one, 0), Error);
    CHECK_THROWS_AS(tally_contributions(scene, std::vector<Camera>{}), Error);
}

TEST_CASE("tally_contributions: matches the oracle with top-20 truncation") {
    std::mt19937 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const Scene scene = fixtures::random_scene(rng, 50);
        std::vector<Camera> cameras;
        for (int v = 0; v < 4; ++v)
            cameras.push_back(fixtures::random_camera(rng, 24, 16, 20.0f));
        const auto tally = tally_contributions(scene, cameras);
        const auto expected = fixtures::oracle_tally(scene, cameras, 20);
        for (std::size_t i = 0; i < scene.count(); ++i) {
            CHECK(tally.scores[i] >= 0.0);
            CHECK(std::abs(tally.scores[i] - expected[i]) <= 1e-5);
        }
        CHECK(tally_contributions(scene, cameras, 20, 1).scores == tally.scores);
    }
}

TEST_CASE("order_antimatter: worked examples and key formula") {
    Scene scene;
    scene.splats.push_back(fixtures::splat_at(0, 0, 0, 0.0f, -2.0f));
    scene.splats.push_back(fixtures::splat_at(0, 0, 0, 0.0f, 2.0f));
    CHECK(order_antimatter(scene).permutation == perm({1, 0}));

    Scene sizes;
    Gaussian small;
    small.log_scale = {-1.0f, 0.0f, 0.0f};
    Gaussian large;
    large.log_scale = {0.5f, 0.25f, 0.25f};
    sizes.splats = {small, large};
    CHECK(order_antimatter(sizes).permutation == perm({1, 0}));

    Scene unit;
    unit.splats.resize(1);
    CHECK(order_antimatter(unit).scores[0] == doctest::Approx(0.5f).epsilon(1e-7));

    std::mt19937 rng(3);
    const Scene random = fixtures::random_scene(rng, 300);
    const auto o = order_antimatter(random);
    CHECK(is_permutation_of(o.permutation, random.count()));
    for (std::size_t k = 0; k < o.size(); ++k) {
        const auto& g = random.splats[o.permutation[k]];
        const double key = std::exp(double(g.log_scale[0]) + g.log_scale[1] + g.log_scale[2]) /
                           (1.0 + std::exp(-double(g.opacity_logit)));
        CHECK(o.scores[k] == doctest::Approx(key).epsilon(1e-5));
        if (k > 0)
            CHECK(o.scores[k - 1] >= o.scores[k]);
    }
}

TEST_CASE("order_center_distance: worked examples") {
    CHECK(order_center_distance(scene_at({{1, 0, 0}, {0, 0, 0}, {0, 2, 0}})).permutation == perm({1, 0, 2}));
    CHECK(order_center_distance(scene_at({{0, 0, 1}, {1, 0, 0}, {0, -1, 0}})).permutation == perm({0, 1, 2}));
    CHECK(order_center_distance(scene_at({{3, 0, 0}, {1, 1, 1}}), {3.0f, 0.0f, 0.0f}).permutation == perm({0, 1}));
}

TEST_CASE("build_octree: leaves partition the splats and tile the box") {
    std::mt19937 rng(4);
    for (int depth = 0; depth <= 4; ++depth) {
        const Scene scene = fixtures::random_scene(rng, 500, 2.0f);
        const Octree tree = build_octree(scene, depth);
        std::vector<int> seen(scene.count(), 0);
        double volume = 0.0;
        for (const auto& leaf : tree.leaves) {
            CHECK(leaf.depth <= depth);
            if (!leaf.members.empty())
                CHECK(leaf.depth == depth);
            for (auto i : leaf.members) {
                ++seen[i];
                const auto& p = scene.splats[i].position;
                for (int a = 0; a < 3; ++a) {
                    CHECK(p[a] >= leaf.min[a]);
                    CHECK(p[a] <= leaf.max[a]);
                }
            }
            volume += (leaf.max - leaf.min).cast<double>().prod();
        }
        for (int s : seen)
            CHECK(s == 1);
        const double box = (tree.max - tree.min).cast<double>().prod();
        CHECK(volume == doctest::Approx(box).epsilon(1e-4));
    }
    CHECK_THROWS_AS(build_octree(Scene{}, -1), Error);
}

TEST_CASE("refine_octree: depth 0 equals contribution order") {
    std::mt19937 rng(5);
    const Scene scene = fixtures::random_scene(rng, 100);
    std::vector<double> scores(scene.count());
    std::uniform_int_distribution<int> s(0, 9);
    for (auto& v : scores)
        v = s(rng);
    const auto tally = tally_of(scores);
    CHECK(refine_octree(scene, tally, 0).permutation == order_by_contribution(tally).permutation);
}

TEST_CASE("refine_octree: two-leaf hand trace gives A10, B1, A9") {
    // Depth 1 splits along every axis; x = 0 and x = 1 land in different cells.
    const Scene scene = scene_at({{0, 0, 0}, {0, 0, 0}, {1, 1, 1}});
    const auto tally = tally_of({10.0, 9.0, 1.0});
    CHECK(refine_octree(scene, tally, 1).permutation == perm({0, 2, 1}));
    CHECK(refine_octree(scene, tally, 1).strategy == Strategy::ContributionOctree);
}

TEST_CASE("refine_octree: after r rounds each leaf with population >= r contributes r splats") {
    std::mt19937 rng(6);
    const Scene scene = fixtures::random_scene(rng, 400, 1.0f);
    std::vector<double> scores(scene.count());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : scores)
        v = u(rng);
    const auto tally = tally_of(scores);
    const int depth = 2;
    const Octree tree = build_octree(scene, depth);
    std::map<std::uint32_t, std::size_t> leaf_of;
    std::vector<std::size_t> population;
    for (const auto& leaf : tree.leaves) {
        if (leaf.members.empty())
            continue;
        for (auto i : leaf.members)
            leaf_of[i] = population.size();
        population.push_back(leaf.members.size());
    }
    const auto order = refine_octree(scene, tally, depth);
    CHECK(is_permutation_of(order.permutation, scene.count()));

    std::size_t prefix = 0;
    for (std::size_t r = 1; prefix < scene.count(); ++r) {
        std::size_t round_size = 0;
        for (auto p : population)
            round_size += p >= r ? 1 : 0;
        prefix += round_size;
        std::vector<std::size_t> taken(population.size(), 0);
        for (std::size_t k = 0; k < prefix; ++k)
            ++taken[leaf_of[order.permutation[k]]];
        for (std::size_t l = 0; l < population.size(); ++l)
            CHECK(taken[l] == std::min(population[l], r));
    }
}

TEST_CASE("in_frustum: behind the camera is out") {
    Camera c;
    c.width = c.height = 16;
    c.fx = c.fy = 16.0f;
    c.cx = c.cy = 8.0f;
    CHECK_FALSE(in_frustum(c, fixtures::splat_at(0, 0, -5, 0, 0)));
    CHECK(in_frustum(c, fixtures::splat_at(0, 0, 5, 0, 0)));
}

TEST_CASE("prioritize_frustum: worked examples and stable merge") {
    Camera c;
    c.width = c.height = 16;
    c.fx = c.fy = 16.0f;
    c.cx = c.cy = 8.0f;
    // Even indices in front of the camera, odd ones behind it.
    Scene scene;
    for (int i = 0; i < 20; ++i)
        scene.splats.push_back(fixtures::splat_at(0.0f, 0.0f, i % 2 == 0 ? 3.0f : -3.0f, 0.0f, 0.0f));
    std::vector<double> scores(20);
    for (int i = 0; i < 20; ++i)
        scores[i] = 20 - i;
    const Ordering base = order_by_contribution(tally_of(scores));

    const auto outside_first = prioritize_frustum(base, scene, c, {0.3f, 0.0, 4});
    CHECK(outside_first.permutation == perm({1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 0, 2, 4, 6, 8, 10, 12, 14, 16, 18}));

    const auto half = prioritize_frustum(base, scene, c, {0.3f, 0.5, 4});
    CHECK(half.permutation == perm({0, 2, 1, 3, 4, 6, 5, 7, 8, 10, 9, 11, 12, 14, 13, 15, 16, 18, 17, 19}));

    // ceil(0.9 * 4) = 4 inside per block until the inside splats run out.
    const auto mostly = prioritize_frustum(base, scene, c, {0.3f, 0.9, 4});
    CHECK(mostly.permutation == perm({0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 1, 3, 5, 7, 9, 11, 13, 15, 17, 19}));
    CHECK(mostly.strategy == Strategy::Frustum);
    for (std::size_t k = 0; k < mostly.size(); ++k)
        CHECK(mostly.scores[k] == static_cast<float>(scores[mostly.permutation[k]]));

    Scene all_inside = scene;
    for (auto& g : all_inside.splats)
        g.position[2] = 4.0f;
    CHECK(prioritize_frustum(base, all_inside, c, {0.3f, 0.2, 3}).permutation == base.permutation);

    CHECK_THROWS_AS(prioritize_frustum(base, scene, c, {0.3f, 1.5, 4}), Error);
    CHECK_THROWS_AS(prioritize_frustum(base, scene, c, {-0.1f, 0.5, 4}), Error);
    CHECK_THROWS_AS(prioritize_frustum(base, scene, c, {0.3f, 0.5, 0}), Error);
}

TEST_CASE("prioritize_frustum: block quota holds on random scenes") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const Scene scene = fixtures::random_scene(rng, 300, 3.0f);
        const Camera camera = fixtures::random_camera(rng, 32, 24, 20.0f);
        std::vector<double> scores(scene.count());
        std::iota(scores.begin(), scores.end(), 0.0);
        const Ordering base = order_by_contribution(tally_of(scores));
        const double fraction = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const std::size_t block = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
        const auto out = prioritize_frustum(base, scene, camera, {0.3f, fraction, block});
        CHECK(is_permutation_of(out.permutation, scene.count()));

        std::vector<std::uint32_t> in_base, out_base, in_new, out_new;
        for (auto i : base.permutation)
            (in_frustum(camera, scene.splats[i]) ? in_base : out_base).push_back(i);
        for (auto i : out.permutation)
            (in_frustum(camera, scene.splats[i]) ? in_new : out_new).push_back(i);
        CHECK(in_new == in_base);
        CHECK(out_new == out_base);

        const auto quota = static_cast<std::size_t>(std::ceil(fraction * block - 1e-9));
        std::size_t used_in = 0, used_out = 0;
        for (std::size_t start = 0; start < out.size(); start += block) {
            std::size_t in_block = 0;
            const std::size_t end = std::min(out.size(), start + block);
            for (std::size_t k = start; k < end; ++k)
                in_block += in_frustum(camera, scene.splats[out.permutation[k]]) ? 1 : 0;
            const bool both_last = used_in + quota <= in_base.size() && used_out + (block - quota) <= out_base.size();
            if (both_last && end - start == block)
                CHECK(in_block == quota);
            used_in += in_block;
            used_out += (end - start) - in_block;
        }
    }
}

TEST_CASE("order_object: worked examples and additivity") {
    const Scene scene = scene_at({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 0}});
    const auto tally = tally_of({0.5, 3.0, 1.0, 2.0, 0.25});
    const std::vector<std::uint32_t> all{0, 1, 2, 3, 4};
    const auto whole = order_object(scene, tally, all);
    CHECK(whole.ordering.permutation == order_by_contribution(tally).permutation);
    CHECK(whole.object_score == doctest::Approx(6.75));

    const std::vector<std::uint32_t> single{3};
    const auto one = order_object(scene, tally, single);
    CHECK(one.ordering.permutation == perm({3}));
    CHECK(one.object_score == 2.0);

    const std::vector<std::uint32_t> a{0, 2}, b{1, 4}, both{0, 1, 2, 4};
    CHECK(order_object(scene, tally, a).object_score + order_object(scene, tally, b).object_score ==
          doctest::Approx(order_object(scene, tally, both).object_score));

    const std::vector<std::uint32_t> bad{5};
    try {
        order_object(scene, tally, bad);
        FAIL("expected InvalidMask");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidMask);
    }
}

TEST_CASE("order_by_objects: objects by score, then the rest") {
    const Scene scene = scene_at({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 0}, {5, 0, 0}});
    const auto tally = tally_of({0.5, 3.0, 1.0, 2.0, 0.25, 4.0});
    const std::vector<std::vector<std::uint32_t>> masks{{0, 4}, {2, 3}};
    const auto o = order_by_objects(scene, tally, masks);
    CHECK(o.permutation == perm({3, 2, 0, 4, 5, 1}));
    CHECK(o.strategy == Strategy::Object);
}

TEST_CASE("parse_mask: whitespace and JSON forms") {
    CHECK(parse_mask("3\n1\n\n2 7\n") == perm({3, 1, 2, 7}));
    CHECK(parse_mask("[4, 0, 9]") == perm({4, 0, 9}));
    CHECK_THROWS_AS(parse_mask("1 x 2"), Error);
    CHECK_THROWS_AS(parse_mask("[1, -2]"), Error);
}

TEST_CASE("ordering files: binary and JSON round trips") {
    Ordering o;
    o.strategy = Strategy::Antimatter;
    o.permutation = {2, 0, 1};
    o.scores = {0.75f, std::nextafter(0.5f, 1.0f), 1e-30f};
    const Bytes bytes = encode_ordering(o);
    REQUIRE(bytes.size() == 4 + 2 + 1 + 1 + 4 + 3 * 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SORD");
    CHECK(bytes[6] == 3);
    const auto back = decode_ordering(bytes);
    CHECK(back.permutation == o.permutation);
    CHECK(back.scores == o.scores);
    CHECK(back.strategy == o.strategy);

    const auto from_json = ordering_from_json(ordering_to_json(o));
    CHECK(from_json.permutation == o.permutation);
    CHECK(from_json.scores == o.scores);
    CHECK(from_json.strategy == o.strategy);

    Bytes truncated(bytes.begin(), bytes.end() - 1);
    CHECK_THROWS_AS(decode_ordering(truncated), Error);
    Ordering broken = o;
    broken.permutation = {0, 0, 1};
    CHECK_THROWS_AS(decode_ordering(encode_ordering(broken)), Error);

    const auto dir = fixtures::temp_dir("ordering");
    save_ordering(dir / "o.bin", o);
    save_ordering(dir / "o.json", o);
    CHECK(load_ordering(dir / "o.bin").permutation == o.permutation);
    CHECK(load_ordering(dir / "o.json").scores == o.scores);
    std::filesystem::remove_all(dir);
}

TEST_CASE("strategy names round trip") {
    for (auto s : {Strategy::Contribution, Strategy::ContributionOctree, Strategy::Frustum, Strategy::Antimatter,
                   Strategy::CenterDistance, Strategy::Object})
        CHECK(parse_strategy(to_string(s)) == s);
    CHECK(parse_strategy("center") == Strategy::CenterDistance);
    CHECK(parse_strategy("octree") == Strategy::ContributionOctree);
    CHECK_THROWS_AS(parse_strategy("random"), Error);
}

TEST_CASE("dominant splat: first by contribution, not first by center distance") {
    const auto f = fixtures::dominance_fixture();
    const auto tally = tally_contributions(f.scene, f.cameras);
    const auto contribution = order_by_contribution(tally);
    const std::set<std::uint32_t> dominant(f.dominant.begin(), f.dominant.end());
    for (std::size_t k = 0; k < dominant.size(); ++k)
        CHECK(dominant.count(contribution.permutation[k]) == 1);
    const auto center = order_center_distance(f.scene);
    CHECK(dominant.count(center.permutation[0]) == 0);
}
