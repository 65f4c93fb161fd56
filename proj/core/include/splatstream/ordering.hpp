#pragma once

#include "splatstream/file_io.hpp"
#include "splatstream/rasterizer.hpp"
#include "splatstream/splat_model.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace splatstream {

/// Per-splat sum of top-K T*alpha weights over every pixel of every view.
struct ContributionTally {
    std::vector<double> scores;
    std::size_t views_used = 0;
    int k_used = kDefaultTopK;
};

enum class Strategy : std::uint8_t {
    Contribution = 0,
    ContributionOctree = 1,
    Frustum = 2,
    Antimatter = 3,
    CenterDistance = 4,
    Object = 5,
};

std::string_view to_string(Strategy strategy) noexcept;
/// Accepts the canonical names plus "center" and "octree" shorthands.
Strategy parse_strategy(std::string_view name);

/// A priority order over splat indices with aligned per-entry scores.
struct Ordering {
    std::vector<std::uint32_t> permutation;
    std::vector<float> scores;
    Strategy strategy = Strategy::Contribution;

    std::size_t size() const noexcept { return permutation.size(); }
};

ContributionTally tally_contributions(const Scene& scene, std::span<const Camera> cameras,
                                      int top_k = kDefaultTopK, unsigned threads = 0);

Ordering order_by_contribution(const ContributionTally& tally);

/// Priority exp(sum of stored log-scales) * sigmoid(stored opacity logit),
/// largest first.
Ordering order_antimatter(const Scene& scene);

/// Ascending Euclidean distance of the stored mean to `center`.
Ordering order_center_distance(const Scene& scene, const Eigen::Vector3f& center = Eigen::Vector3f::Zero());

struct OctreeLeaf {
    int depth = 0;
    std::array<std::uint32_t, 3> cell{}; // integer coordinates at `depth`
    Eigen::Vector3f min = Eigen::Vector3f::Zero();
    Eigen::Vector3f max = Eigen::Vector3f::Zero();
    std::vector<std::uint32_t> members;
};

/// Uniform octree over splat means. Only occupied cells are split, so
/// occupied leaves all sit at `max_depth` and empty leaves may be shallower;
/// together the leaves tile the root box.
struct Octree {
    Eigen::Vector3f min = Eigen::Vector3f::Zero();
    Eigen::Vector3f max = Eigen::Vector3f::Zero();
    int max_depth = 0;
    std::vector<OctreeLeaf> leaves;
};

Octree build_octree(const Scene& scene, int max_depth);

/// Round-robin over occupied leaves: each round takes the best remaining
/// splat of every leaf, rounds ordered by candidate score.
Ordering refine_octree(const Scene& scene, const ContributionTally& tally, int max_depth = 3);

struct FrustumOptions {
    float margin = kDefaultCullMargin;
    double in_fraction = 0.9;
    std::size_t granularity = 1;
};

bool in_frustum(const Camera& camera, const Gaussian& g, float margin = kDefaultCullMargin);

/// Stable merge of the in-frustum and out-of-frustum subsequences of
/// `ordering` with ceil(in_fraction * granularity) in-frustum splats per
/// block while both last.
Ordering prioritize_frustum(const Ordering& ordering, const Scene& scene, const Camera& camera,
                            const FrustumOptions& options = {});

/// Same merge with varying block sizes (e.g. one block per chunk); the last
/// size repeats once `blocks` is exhausted.
Ordering prioritize_frustum_blocks(const Ordering& ordering, const Scene& scene, const Camera& camera, float margin,
                                   double in_fraction, std::span<const std::uint32_t> blocks);

struct ObjectOrdering {
    Ordering ordering;
    double object_score = 0.0;
};

ObjectOrdering order_object(const Scene& scene, const ContributionTally& tally, std::span<const std::uint32_t> mask);

/// Objects by descending object_score (ties by first mask position), each
/// internally by contribution, then every unmasked splat by contribution.
/// Splats in several masks go with the first object that claims them.
Ordering order_by_objects(const Scene& scene, const ContributionTally& tally,
                          std::span<const std::vector<std::uint32_t>> masks);

/// Reads newline/whitespace separated indices or a JSON array.
std::vector<std::uint32_t> parse_mask(std::string_view text);

/// Throws InvalidPermutation unless `ordering` is a bijection on [0, count).
void check_ordering(const Ordering& ordering, std::size_t count);

/// Binary form: "SORD", u16 version, u8 strategy, u8 reserved, u32 count,
/// count x u32 indices, count x f32 scores (all little-endian).
Bytes encode_ordering(const Ordering& ordering);
Ordering decode_ordering(std::span<const std::uint8_t> bytes);
std::string ordering_to_json(const Ordering& ordering);
Ordering ordering_from_json(std::string_view text);

/// Picks binary or JSON by extension (".json" means JSON).
void save_ordering(const std::filesystem::path& path, const Ordering& ordering);
Ordering load_ordering(const std::filesystem::path& path);

} // namespace splatstream
