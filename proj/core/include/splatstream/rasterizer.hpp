#pragma once

#include "splatstream/image.hpp"
#include "splatstream/splat_model.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace splatstream {

inline constexpr float kLowPassVariance = 0.3f;
inline constexpr float kMinAlpha = 1.0f / 255.0f;
inline constexpr float kMaxAlpha = 0.99f;
inline constexpr float kMinTransmittance = 1e-4f;
inline constexpr float kDefaultCullMargin = 0.3f;
inline constexpr int kTileSize = 16;
inline constexpr int kDefaultTopK = 20;

/// A splat projected into one view.
struct ProjectedGaussian {
    std::uint32_t splat_index = 0;
    Eigen::Vector2f mean2d = Eigen::Vector2f::Zero();
    Eigen::Matrix2f cov2d = Eigen::Matrix2f::Identity(); // includes the low-pass term
    std::array<float, 3> conic{};                         // inverse cov2d as (a, b, c)
    float depth = 0.0f;
    float opacity = 0.0f;
    std::array<float, 3> rgb{};
    float extent = 0.0f; // pixel radius outside of which alpha < kMinAlpha
};

/// True iff a view-space point lies in front of the near plane and projects
/// inside the image expanded by `margin` x width (height) on every side.
bool in_expanded_view(const Camera& camera, const Eigen::Vector3f& world_point, float margin);

/// EWA projection of one activated splat. Returns nullopt if the mean is
/// behind the near plane or outside the image expanded by `cull_margin`.
std::optional<ProjectedGaussian> project(const ActivatedGaussian& g, const Camera& camera,
                                         std::uint32_t splat_index = 0,
                                         float cull_margin = kDefaultCullMargin);

struct ContributionEntry {
    std::uint32_t splat_index = 0;
    float weight = 0.0f; // T * alpha

    friend bool operator==(const ContributionEntry&, const ContributionEntry&) = default;
};

/// Strict weak order of top-K lists: heavier first, then lower index.
inline bool heavier(const ContributionEntry& a, const ContributionEntry& b) noexcept {
    return a.weight > b.weight || (a.weight == b.weight && a.splat_index < b.splat_index);
}

struct PixelContribution {
    int x = 0;
    int y = 0;
    std::vector<ContributionEntry> entries; // sorted by `heavier`, at most K
};

struct RenderOptions {
    std::optional<int> track_top_k;
    std::array<float, 3> background{0.0f, 0.0f, 0.0f};
    float cull_margin = kDefaultCullMargin;
    unsigned threads = 0;
};

struct RenderOutput {
    Image image;
    std::vector<float> final_transmittance;          // one per pixel, row-major
    std::vector<PixelContribution> contributions;    // row-major, non-empty pixels only
};

/// Splats activated once so that several views can share the work.
struct PreparedScene {
    std::span<const Gaussian> stored;
    std::vector<ActivatedGaussian> activated;
};

PreparedScene prepare(const Scene& scene);

/// Tile-based front-to-back compositing of the whole scene. Splats are
/// sorted by view-space depth of their mean; exact depth ties fall back to
/// the stored parameters so the image does not depend on input order.
RenderOutput render(const Scene& scene, const Camera& camera, const RenderOptions& options = {});
RenderOutput render(const PreparedScene& scene, const Camera& camera, const RenderOptions& options = {});

/// Adds every pixel's top-K weights of one view into `scores` (indexed by
/// splat). Same compositing as `render`, without materializing per-pixel
/// lists. The summation order is fixed, so results are reproducible.
void accumulate_top_k(const PreparedScene& scene, const Camera& camera, int top_k, std::span<double> scores,
                      float cull_margin = kDefaultCullMargin, unsigned threads = 0);

} // namespace splatstream
