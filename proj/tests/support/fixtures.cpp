#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace fixtures {

using namespace splatstream;

Scene random_scene(std::mt19937& rng, std::size_t count, float extent) {
    std::uniform_real_distribution<float> pos(-extent, extent);
    std::uniform_real_distribution<float> log_scale(-3.0f, -1.2f);
    std::normal_distribution<float> quat(0.0f, 1.0f);
    std::uniform_real_distribution<float> logit(-3.0f, 4.0f);
    std::uniform_real_distribution<float> dc(-1.5f, 1.5f);
    std::uniform_real_distribution<float> rest(-0.3f, 0.3f);

    Scene scene;
    scene.splats.resize(count);
    for (auto& g : scene.splats) {
        g.position = {pos(rng), pos(rng), pos(rng)};
        g.normal = {0.0f, 0.0f, 0.0f};
        g.log_scale = {log_scale(rng), log_scale(rng), log_scale(rng)};
        g.rotation = {quat(rng), quat(rng), quat(rng), quat(rng)};
        g.opacity_logit = logit(rng);
        g.sh_dc = {dc(rng), dc(rng), dc(rng)};
        for (auto& v : g.sh_rest)
            v = rest(rng);
    }
    return scene;
}

Camera random_camera(std::mt19937& rng, int width, int height, float focal) {
    std::normal_distribution<float> dir(0.0f, 1.0f);
    std::uniform_real_distribution<float> radius(3.0f, 4.0f);
    Eigen::Vector3f eye(dir(rng), dir(rng), dir(rng));
    while (eye.norm() < 1e-3f || std::abs(eye.normalized().y()) > 0.95f)
        eye = Eigen::Vector3f(dir(rng), dir(rng), dir(rng));
    eye = eye.normalized() * radius(rng);
    return look_at(eye, Eigen::Vector3f::Zero(), Eigen::Vector3f::UnitY(), width, height, focal);
}

std::vector<Camera> ring_cameras(std::size_t count, float radius, int width, int height, float focal,
                                 float height_offset) {
    std::vector<Camera> cameras;
    for (std::size_t i = 0; i < count; ++i) {
        const double angle = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(count);
        const Eigen::Vector3f eye(radius * static_cast<float>(std::cos(angle)), height_offset,
                                  radius * static_cast<float>(std::sin(angle)));
        Camera camera = look_at(eye, Eigen::Vector3f::Zero(), Eigen::Vector3f::UnitY(), width, height, focal);
        camera.name = "view_" + std::to_string(i);
        cameras.push_back(camera);
    }
    return cameras;
}

Gaussian splat_at(float x, float y, float z, float log_scale, float opacity_logit, std::array<float, 3> dc) {
    Gaussian g;
    g.position = {x, y, z};
    g.log_scale = {log_scale, log_scale, log_scale};
    g.opacity_logit = opacity_logit;
    g.sh_dc = dc;
    return g;
}

float dc_for(float value) {
    return static_cast<float>((value - 0.5) / kShC0);
}

std::vector<std::uint8_t> ply_bytes(const std::vector<std::string>& names, const std::vector<std::vector<float>>& rows,
                                    const std::vector<std::string>& comments) {
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n";
    for (const auto& c : comments)
        header << "comment " << c << '\n';
    header << "element vertex " << rows.size() << '\n';
    for (const auto& name : names)
        header << "property float " << name << '\n';
    header << "end_header\n";
    const std::string text = header.str();
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    for (const auto& row : rows) {
        for (float v : row) {
            std::uint8_t raw[4];
            std::uint32_t bits = 0;
            std::memcpy(&bits, &v, 4);
            for (int b = 0; b < 4; ++b)
                raw[b] = static_cast<std::uint8_t>(bits >> (8 * b));
            bytes.insert(bytes.end(), raw, raw + 4);
        }
    }
    return bytes;
}

std::vector<std::string> canonical_names(int rest_count, bool normals) {
    std::vector<std::string> names{"x", "y", "z"};
    if (normals)
        names.insert(names.end(), {"nx", "ny", "nz"});
    for (int i = 0; i < 3; ++i)
        names.push_back("f_dc_" + std::to_string(i));
    for (int i = 0; i < rest_count; ++i)
        names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i)
        names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i)
        names.push_back("rot_" + std::to_string(i));
    return names;
}

OracleOutput oracle_render(const Scene& scene, const Camera& camera, std::array<float, 3> background,
                           float cull_margin) {
    std::vector<ProjectedGaussian> projected;
    for (std::size_t i = 0; i < scene.count(); ++i)
        if (auto p = project(activate(scene.splats[i]), camera, static_cast<std::uint32_t>(i), cull_margin))
            projected.push_back(*p);
    std::sort(projected.begin(), projected.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.splat_index < b.splat_index;
    });

    OracleOutput out;
    out.image = Image(camera.width, camera.height);
    out.transmittance.assign(out.image.pixel_count(), 1.0f);
    out.lists.resize(out.image.pixel_count());
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const std::size_t pixel = static_cast<std::size_t>(y) * camera.width + x;
            float t = 1.0f;
            std::array<float, 3> color{0.0f, 0.0f, 0.0f};
            for (const auto& p : projected) {
                const float dx = static_cast<float>(x) + 0.5f - p.mean2d.x();
                const float dy = static_cast<float>(y) + 0.5f - p.mean2d.y();
                const float power = -0.5f * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) - p.conic[1] * dx * dy;
                if (power > 0.0f)
                    continue;
                const float alpha = std::min(0.99f, p.opacity * std::exp(power));
                if (alpha < 1.0f / 255.0f)
                    continue;
                if (t * (1.0f - alpha) < 1e-4f)
                    break;
                const float w = alpha * t;
                for (int c = 0; c < 3; ++c)
                    color[c] += p.rgb[c] * w;
                out.lists[pixel].push_back({p.splat_index, w});
                t *= 1.0f - alpha;
            }
            for (int c = 0; c < 3; ++c)
                out.image.at(x, y, c) = std::clamp(color[c] + t * background[c], 0.0f, 1.0f);
            out.transmittance[pixel] = t;
        }
    }
    return out;
}

std::vector<double> oracle_tally(const Scene& scene, const std::vector<Camera>& cameras, int top_k) {
    std::vector<double> scores(scene.count(), 0.0);
    for (const auto& camera : cameras) {
        auto out = oracle_render(scene, camera);
        for (auto& list : out.lists) {
            std::sort(list.begin(), list.end(), heavier);
            if (list.size() > static_cast<std::size_t>(top_k))
                list.resize(static_cast<std::size_t>(top_k));
            for (const auto& e : list)
                scores[e.splat_index] += e.weight;
        }
    }
    return scores;
}

namespace {

void add_faint_cluster(Scene& scene, std::size_t count, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> pos(-0.5f, 0.5f);
    std::uniform_real_distribution<float> gray(0.1f, 0.3f);
    for (std::size_t i = 0; i < count; ++i) {
        const float c = dc_for(gray(rng));
        scene.splats.push_back(splat_at(pos(rng), pos(rng), pos(rng), std::log(0.05f), -2.0f, {c, c, c}));
    }
}

} // namespace

DominanceFixture dominance_fixture() {
    DominanceFixture f;
    f.cameras = ring_cameras(5, 6.0f, 32, 32, 32.0f);
    f.scene.has_normals = false;
    add_faint_cluster(f.scene, 195, 7);
    for (std::size_t i = 0; i < f.cameras.size(); ++i) {
        const Eigen::Vector3f p = f.cameras[i].center().normalized() * 3.5f;
        const std::array<float, 3> dc{dc_for(0.9f), dc_for(0.2f + 0.15f * i), dc_for(0.6f)};
        f.dominant.push_back(static_cast<std::uint32_t>(f.scene.count()));
        f.scene.splats.push_back(splat_at(p.x(), p.y(), p.z(), std::log(0.6f), 4.0f, dc));
    }
    return f;
}

DominanceFixture antimatter_fixture() {
    DominanceFixture f;
    f.cameras = ring_cameras(5, 6.0f, 32, 32, 32.0f);
    f.scene.has_normals = false;
    add_faint_cluster(f.scene, 150, 11);
    for (std::size_t i = 0; i < f.cameras.size(); ++i) {
        const Eigen::Vector3f p = f.cameras[i].center().normalized() * 3.5f;
        const std::array<float, 3> dc{dc_for(0.95f), dc_for(0.85f), dc_for(0.1f + 0.2f * i)};
        f.dominant.push_back(static_cast<std::uint32_t>(f.scene.count()));
        f.scene.splats.push_back(splat_at(p.x(), p.y(), p.z(), std::log(0.3f), 4.0f, dc));
    }
    // Large opaque splats straight above the ring, outside every view.
    for (int i = 0; i < 45; ++i) {
        const double angle = 2.0 * M_PI * i / 45.0;
        const float r = 2.0f;
        const float c = dc_for(0.8f);
        f.scene.splats.push_back(splat_at(r * static_cast<float>(std::cos(angle)), 60.0f + static_cast<float>(i % 3),
                                          r * static_cast<float>(std::sin(angle)), std::log(2.0f), 4.0f, {c, c, c}));
    }
    return f;
}

std::filesystem::path temp_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    const auto dir = std::filesystem::temp_directory_path() /
                     ("splatstream_" + tag + "_" + std::to_string(rng() % 1000000000ull));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace fixtures
