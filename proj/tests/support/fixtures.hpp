#pragma once

#include "splatstream/image.hpp"
#include "splatstream/rasterizer.hpp"
#include "splatstream/splat_model.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

using splatstream::Camera;
using splatstream::Gaussian;
using splatstream::Scene;

/// Random splats in a cube of half-size `extent` around the origin.
Scene random_scene(std::mt19937& rng, std::size_t count, float extent = 1.0f);

/// Camera on a sphere of radius in [3, 4] looking at the origin.
Camera random_camera(std::mt19937& rng, int width, int height, float focal);

/// `count` cameras evenly spaced on a horizontal ring, looking at the origin.
std::vector<Camera> ring_cameras(std::size_t count, float radius, int width, int height, float focal,
                                 float height_offset = 0.0f);

Gaussian splat_at(float x, float y, float z, float log_scale, float opacity_logit,
                  std::array<float, 3> dc = {0.0f, 0.0f, 0.0f});

/// DC coefficient giving color channel `value` for a degree-0 splat.
float dc_for(float value);

/// PLY bytes written property by property from the given names, independent
/// of the library writer. Every property is a float; values[i] holds one
/// row per splat in the same order as `names`.
std::vector<std::uint8_t> ply_bytes(const std::vector<std::string>& names,
                                    const std::vector<std::vector<float>>& rows,
                                    const std::vector<std::string>& comments = {});

/// Canonical 3DGS property names with normals and the given rest count.
std::vector<std::string> canonical_names(int rest_count, bool normals = true);

/// Exact-depth-order brute-force renderer: no tiles, no extents, every
/// projected splat tested at every pixel.
struct OracleOutput {
    splatstream::Image image;
    std::vector<float> transmittance;
    std::vector<std::vector<splatstream::ContributionEntry>> lists; // per pixel, all contributors
};

OracleOutput oracle_render(const Scene& scene, const Camera& camera, std::array<float, 3> background = {0, 0, 0},
                           float cull_margin = splatstream::kDefaultCullMargin);

/// Sum over views and pixels of the `top_k` heaviest weights per pixel.
std::vector<double> oracle_tally(const Scene& scene, const std::vector<Camera>& cameras, int top_k);

/// Five opaque splats close to the cameras, one per view, plus faint small
/// splats clustered at the origin. Used by the ordering-dominance checks.
struct DominanceFixture {
    Scene scene;
    std::vector<Camera> cameras;
    std::vector<std::uint32_t> dominant;
};
DominanceFixture dominance_fixture();

/// Small unoccluded important splats, large opaque decoys outside every view.
DominanceFixture antimatter_fixture();

/// A fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

} // namespace fixtures
