#include "splatstream/ordering.hpp"

#include "splatstream/byte_io.hpp"
#include "splatstream/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

namespace splatstream {

std::string_view to_string(Strategy strategy) noexcept {
    switch (strategy) {
        case Strategy::Contribution: return "contribution";
        case Strategy::ContributionOctree: return "contribution-octree";
        case Strategy::Frustum: return "frustum";
        case Strategy::Antimatter: return "antimatter";
        case Strategy::CenterDistance: return "center-distance";
        case Strategy::Object: return "object";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    if (name == "contribution")
        return Strategy::Contribution;
    if (name == "contribution-octree" || name == "octree")
        return Strategy::ContributionOctree;
    if (name == "frustum")
        return Strategy::Frustum;
    if (name == "antimatter")
        return Strategy::Antimatter;
    if (name == "center-distance" || name == "center")
        return Strategy::CenterDistance;
    if (name == "object")
        return Strategy::Object;
    fail(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

namespace {

// Sorts indices by key descending, ties by index ascending.
std::vector<std::uint32_t> sort_descending(std::vector<std::uint32_t> indices, std::span<const double> key) {
    std::sort(indices.begin(), indices.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (key[a] != key[b])
            return key[a] > key[b];
        return a < b;
    });
    return indices;
}

std::vector<std::uint32_t> iota_indices(std::size_t n) {
    std::vector<std::uint32_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0u);
    return indices;
}

Ordering make_ordering(std::vector<std::uint32_t> permutation, std::span<const double> key, Strategy strategy) {
    Ordering ordering;
    ordering.strategy = strategy;
    ordering.scores.reserve(permutation.size());
    for (auto index : permutation)
        ordering.scores.push_back(static_cast<float>(key[index]));
    ordering.permutation = std::move(permutation);
    return ordering;
}

void check_tally(const ContributionTally& tally, std::size_t count) {
    if (tally.scores.size() != count)
        fail(ErrorCode::InvalidArgument, "tally has " + std::to_string(tally.scores.size()) +
                                             " scores for a scene of " + std::to_string(count) + " splats");
}

} // namespace

ContributionTally tally_contributions(const Scene& scene, std::span<const Camera> cameras, int top_k,
                                      unsigned threads) {
    if (top_k < 1)
        fail(ErrorCode::InvalidK, "K must be at least 1");
    if (cameras.empty())
        fail(ErrorCode::InvalidArgument, "at least one camera is required");

    const PreparedScene prepared = prepare(scene);
    ContributionTally tally;
    tally.scores.assign(scene.count(), 0.0);
    tally.k_used = top_k;
    std::vector<double> view_scores(scene.count());
    for (const auto& camera : cameras) {
        std::fill(view_scores.begin(), view_scores.end(), 0.0);
        accumulate_top_k(prepared, camera, top_k, view_scores, kDefaultCullMargin, threads);
        for (std::size_t i = 0; i < view_scores.size(); ++i)
            tally.scores[i] += view_scores[i];
        ++tally.views_used;
    }
    return tally;
}

Ordering order_by_contribution(const ContributionTally& tally) {
    return make_ordering(sort_descending(iota_indices(tally.scores.size()), tally.scores), tally.scores,
                         Strategy::Contribution);
}

Ordering order_antimatter(const Scene& scene) {
    std::vector<double> key(scene.count());
    for (std::size_t i = 0; i < scene.count(); ++i) {
        const auto& g = scene.splats[i];
        const double log_volume = static_cast<double>(g.log_scale[0]) + g.log_scale[1] + g.log_scale[2];
        key[i] = std::exp(log_volume) / (1.0 + std::exp(-static_cast<double>(g.opacity_logit)));
        if (std::isnan(key[i]))
            key[i] = -std::numeric_limits<double>::infinity();
    }
    return make_ordering(sort_descending(iota_indices(scene.count()), key), key, Strategy::Antimatter);
}

Ordering order_center_distance(const Scene& scene, const Eigen::Vector3f& center) {
    std::vector<double> distance(scene.count());
    for (std::size_t i = 0; i < scene.count(); ++i) {
        const auto& p = scene.splats[i].position;
        const double dx = static_cast<double>(p[0]) - center.x();
        const double dy = static_cast<double>(p[1]) - center.y();
        const double dz = static_cast<double>(p[2]) - center.z();
        distance[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (std::isnan(distance[i]))
            distance[i] = std::numeric_limits<double>::infinity();
    }
    auto indices = iota_indices(scene.count());
    std::sort(indices.begin(), indices.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (distance[a] != distance[b])
            return distance[a] < distance[b];
        return a < b;
    });
    return make_ordering(std::move(indices), distance, Strategy::CenterDistance);
}

namespace {

// Boundary `i` of the finest grid along axis `a`; the outer ones are exact.
float grid_boundary(const Octree& tree, int a, std::uint32_t i) {
    const std::uint32_t cells = 1u << tree.max_depth;
    if (i == 0)
        return tree.min[a];
    if (i == cells)
        return tree.max[a];
    const double extent = static_cast<double>(tree.max[a]) - tree.min[a];
    return static_cast<float>(tree.min[a] + extent * i / cells);
}

void split_cell(const Octree& tree, const std::vector<std::array<std::uint32_t, 3>>& finest, int depth,
                std::array<std::uint32_t, 3> cell, std::vector<std::uint32_t> members,
                std::vector<OctreeLeaf>& leaves) {
    if (members.empty() || depth == tree.max_depth) {
        OctreeLeaf leaf;
        leaf.depth = depth;
        leaf.cell = cell;
        const int shift = tree.max_depth - depth;
        for (int a = 0; a < 3; ++a) {
            leaf.min[a] = grid_boundary(tree, a, cell[a] << shift);
            leaf.max[a] = grid_boundary(tree, a, (cell[a] + 1) << shift);
        }
        leaf.members = std::move(members);
        leaves.push_back(std::move(leaf));
        return;
    }
    const int shift = tree.max_depth - depth - 1;
    std::array<std::vector<std::uint32_t>, 8> children;
    for (std::uint32_t index : members) {
        const auto& f = finest[index];
        const unsigned child = ((f[0] >> shift) & 1u) | (((f[1] >> shift) & 1u) << 1) | (((f[2] >> shift) & 1u) << 2);
        children[child].push_back(index);
    }
    for (unsigned child = 0; child < 8; ++child) {
        const std::array<std::uint32_t, 3> sub = {cell[0] * 2 + (child & 1u), cell[1] * 2 + ((child >> 1) & 1u),
                                                  cell[2] * 2 + ((child >> 2) & 1u)};
        split_cell(tree, finest, depth + 1, sub, std::move(children[child]), leaves);
    }
}

} // namespace

Octree build_octree(const Scene& scene, int max_depth) {
    if (max_depth < 0 || max_depth > 20)
        fail(ErrorCode::InvalidArgument, "octree depth must be in [0, 20]");
    Octree tree;
    tree.max_depth = max_depth;
    if (scene.empty())
        return tree;

    tree.min = Eigen::Vector3f::Constant(std::numeric_limits<float>::infinity());
    tree.max = -tree.min;
    for (const auto& g : scene.splats) {
        const Eigen::Vector3f p(g.position[0], g.position[1], g.position[2]);
        if (!p.allFinite())
            fail(ErrorCode::NonFiniteParameter, "splat position is not finite");
        tree.min = tree.min.cwiseMin(p);
        tree.max = tree.max.cwiseMax(p);
    }

    const std::uint32_t cells = 1u << max_depth;
    std::vector<std::array<std::uint32_t, 3>> finest(scene.count());
    for (std::size_t i = 0; i < scene.count(); ++i) {
        for (int a = 0; a < 3; ++a) {
            const double extent = static_cast<double>(tree.max[a]) - tree.min[a];
            const double t = extent > 0.0 ? (scene.splats[i].position[a] - static_cast<double>(tree.min[a])) / extent
                                          : 0.0;
            auto c = static_cast<std::uint32_t>(std::clamp<std::int64_t>(
                static_cast<std::int64_t>(std::floor(t * cells)), 0, cells - 1));
            // Settle rounding so the cell's float box really contains the point.
            const float p = scene.splats[i].position[a];
            while (c > 0 && p < grid_boundary(tree, a, c))
                --c;
            while (c + 1 < cells && p >= grid_boundary(tree, a, c + 1))
                ++c;
            finest[i][a] = c;
        }
    }
    split_cell(tree, finest, 0, {0, 0, 0}, iota_indices(scene.count()), tree.leaves);
    return tree;
}

Ordering refine_octree(const Scene& scene, const ContributionTally& tally, int max_depth) {
    check_tally(tally, scene.count());
    const Octree tree = build_octree(scene, max_depth);

    struct Queue {
        std::vector<std::uint32_t> members;
        std::size_t next = 0;
    };
    std::vector<Queue> queues;
    for (const auto& leaf : tree.leaves) {
        if (!leaf.members.empty())
            queues.push_back({sort_descending(leaf.members, tally.scores), 0});
    }

    std::vector<std::uint32_t> permutation;
    permutation.reserve(scene.count());
    std::vector<std::uint32_t> round;
    while (permutation.size() < scene.count()) {
        round.clear();
        for (auto& q : queues) {
            if (q.next < q.members.size())
                round.push_back(q.members[q.next++]);
        }
        round = sort_descending(std::move(round), tally.scores);
        permutation.insert(permutation.end(), round.begin(), round.end());
    }
    return make_ordering(std::move(permutation), tally.scores, Strategy::ContributionOctree);
}

bool in_frustum(const Camera& camera, const Gaussian& g, float margin) {
    return in_expanded_view(camera, Eigen::Vector3f(g.position[0], g.position[1], g.position[2]), margin);
}

Ordering prioritize_frustum(const Ordering& ordering, const Scene& scene, const Camera& camera,
                            const FrustumOptions& options) {
    if (options.granularity == 0 || options.granularity > std::numeric_limits<std::uint32_t>::max())
        fail(ErrorCode::InvalidArgument, "granularity must be a positive 32-bit count");
    const std::uint32_t block = static_cast<std::uint32_t>(options.granularity);
    return prioritize_frustum_blocks(ordering, scene, camera, options.margin, options.in_fraction,
                                     std::span<const std::uint32_t>(&block, 1));
}

Ordering prioritize_frustum_blocks(const Ordering& ordering, const Scene& scene, const Camera& camera, float margin,
                                   double in_fraction, std::span<const std::uint32_t> blocks) {
    if (!(in_fraction >= 0.0 && in_fraction <= 1.0))
        fail(ErrorCode::InvalidArgument, "in_fraction must lie in [0, 1]");
    if (!(margin >= 0.0f))
        fail(ErrorCode::InvalidArgument, "frustum margin must be non-negative");
    if (blocks.empty() || std::find(blocks.begin(), blocks.end(), 0u) != blocks.end())
        fail(ErrorCode::InvalidArgument, "block sizes must be positive");
    if (ordering.scores.size() != ordering.permutation.size())
        fail(ErrorCode::InvalidArgument, "ordering scores are not aligned with its permutation");
    validate(camera);

    std::vector<std::size_t> inside;
    std::vector<std::size_t> outside;
    for (std::size_t pos = 0; pos < ordering.size(); ++pos) {
        const auto index = ordering.permutation[pos];
        if (index >= scene.count())
            fail(ErrorCode::InvalidPermutation, "ordering refers to splat " + std::to_string(index));
        (in_frustum(camera, scene.splats[index], margin) ? inside : outside).push_back(pos);
    }

    Ordering out;
    out.strategy = Strategy::Frustum;
    out.permutation.reserve(ordering.size());
    out.scores.reserve(ordering.size());
    auto emit = [&](std::size_t pos) {
        out.permutation.push_back(ordering.permutation[pos]);
        out.scores.push_back(ordering.scores[pos]);
    };
    std::size_t next_in = 0;
    std::size_t next_out = 0;
    for (std::size_t b = 0; next_in < inside.size() || next_out < outside.size(); ++b) {
        const std::size_t block = blocks[std::min(b, blocks.size() - 1)];
        const auto quota = static_cast<std::size_t>(std::ceil(in_fraction * static_cast<double>(block) - 1e-9));
        const std::size_t take_in = std::min({quota, block, inside.size() - next_in});
        const std::size_t take_out = std::min(block - take_in, outside.size() - next_out);
        // Once the out-frustum splats run out, the block is topped up from inside.
        const std::size_t fill = std::min(inside.size() - next_in - take_in, block - take_in - take_out);
        for (std::size_t i = 0; i < take_in; ++i)
            emit(inside[next_in++]);
        for (std::size_t i = 0; i < take_out; ++i)
            emit(outside[next_out++]);
        for (std::size_t i = 0; i < fill; ++i)
            emit(inside[next_in++]);
    }
    return out;
}

ObjectOrdering order_object(const Scene& scene, const ContributionTally& tally, std::span<const std::uint32_t> mask) {
    check_tally(tally, scene.count());
    std::vector<std::uint32_t> members(mask.begin(), mask.end());
    for (auto index : members) {
        if (index >= scene.count())
            fail(ErrorCode::InvalidMask, "mask index " + std::to_string(index) + " is out of range");
    }
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());

    ObjectOrdering result;
    for (auto index : members)
        result.object_score += tally.scores[index];
    result.ordering = make_ordering(sort_descending(std::move(members), tally.scores), tally.scores, Strategy::Object);
    return result;
}

Ordering order_by_objects(const Scene& scene, const ContributionTally& tally,
                          std::span<const std::vector<std::uint32_t>> masks) {
    check_tally(tally, scene.count());
    std::vector<ObjectOrdering> objects;
    objects.reserve(masks.size());
    for (const auto& mask : masks)
        objects.push_back(order_object(scene, tally, mask));
    std::vector<std::size_t> rank(objects.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return objects[a].object_score > objects[b].object_score;
    });

    std::vector<std::uint8_t> taken(scene.count(), 0);
    std::vector<std::uint32_t> permutation;
    permutation.reserve(scene.count());
    for (auto r : rank)
        for (auto index : objects[r].ordering.permutation)
            if (!taken[index]) {
                taken[index] = 1;
                permutation.push_back(index);
            }
    std::vector<std::uint32_t> rest;
    for (std::uint32_t i = 0; i < scene.count(); ++i)
        if (!taken[i])
            rest.push_back(i);
    rest = sort_descending(std::move(rest), tally.scores);
    permutation.insert(permutation.end(), rest.begin(), rest.end());
    return make_ordering(std::move(permutation), tally.scores, Strategy::Object);
}

std::vector<std::uint32_t> parse_mask(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    std::vector<std::uint32_t> mask;
    if (first == std::string_view::npos)
        return mask;
    auto to_index = [](long long value) {
        if (value < 0 || value > std::numeric_limits<std::uint32_t>::max())
            fail(ErrorCode::InvalidMask, "mask index " + std::to_string(value) + " is out of range");
        return static_cast<std::uint32_t>(value);
    };
    if (text[first] == '[') {
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::ParseError, std::string("mask JSON: ") + e.what());
        }
        for (const auto& item : parsed) {
            if (!item.is_number_integer())
                fail(ErrorCode::ParseError, "mask JSON entries must be integers");
            mask.push_back(to_index(item.get<long long>()));
        }
        return mask;
    }
    std::istringstream in{std::string(text)};
    for (std::string token; in >> token;) {
        std::size_t used = 0;
        long long value = 0;
        try {
            value = std::stoll(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size())
            fail(ErrorCode::ParseError, "bad mask entry '" + token + "'");
        mask.push_back(to_index(value));
    }
    return mask;
}

void check_ordering(const Ordering& ordering, std::size_t count) {
    if (!is_permutation_of(ordering.permutation, count))
        fail(ErrorCode::InvalidPermutation, "ordering is not a permutation of " + std::to_string(count) + " splats");
    if (ordering.scores.size() != ordering.permutation.size())
        fail(ErrorCode::InvalidPermutation, "ordering scores are not aligned with its permutation");
}

namespace {
constexpr std::string_view kOrderingMagic = "SORD";
constexpr std::uint16_t kOrderingVersion = 1;
} // namespace

Bytes encode_ordering(const Ordering& ordering) {
    if (ordering.scores.size() != ordering.permutation.size())
        fail(ErrorCode::InvalidArgument, "ordering scores are not aligned with its permutation");
    Bytes out;
    ByteWriter w(out);
    w.raw(kOrderingMagic);
    w.put<std::uint16_t>(kOrderingVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(ordering.strategy));
    w.put<std::uint8_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ordering.size()));
    w.put_array<std::uint32_t>(ordering.permutation);
    w.put_array<float>(ordering.scores);
    return out;
}

Ordering decode_ordering(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, ErrorCode::ParseError);
    if (r.raw(4) != kOrderingMagic)
        fail(ErrorCode::ParseError, "not an ordering file");
    if (r.get<std::uint16_t>() != kOrderingVersion)
        fail(ErrorCode::UnsupportedFormat, "unsupported ordering version");
    const auto tag = r.get<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(Strategy::Object))
        fail(ErrorCode::ParseError, "unknown strategy tag " + std::to_string(tag));
    r.get<std::uint8_t>();
    const auto count = r.get<std::uint32_t>();
    if (r.remaining() != static_cast<std::size_t>(count) * 8)
        fail(ErrorCode::ParseError, "ordering payload size does not match its count");
    Ordering ordering;
    ordering.strategy = static_cast<Strategy>(tag);
    ordering.permutation.resize(count);
    ordering.scores.resize(count);
    r.get_array<std::uint32_t>(ordering.permutation);
    r.get_array<float>(ordering.scores);
    check_ordering(ordering, count);
    return ordering;
}

std::string ordering_to_json(const Ordering& ordering) {
    nlohmann::json j;
    j["strategy"] = std::string(to_string(ordering.strategy));
    j["count"] = ordering.size();
    j["permutation"] = ordering.permutation;
    j["scores"] = ordering.scores;
    return j.dump(1);
}

Ordering ordering_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        Ordering ordering;
        ordering.strategy = parse_strategy(j.at("strategy").get<std::string>());
        ordering.permutation = j.at("permutation").get<std::vector<std::uint32_t>>();
        ordering.scores = j.at("scores").get<std::vector<float>>();
        if (ordering.scores.size() != ordering.permutation.size())
            fail(ErrorCode::ParseError, "ordering scores are not aligned with its permutation");
        check_ordering(ordering, ordering.size());
        return ordering;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("ordering JSON: ") + e.what());
    }
}

void save_ordering(const std::filesystem::path& path, const Ordering& ordering) {
    if (path.extension() == ".json")
        write_text(path, ordering_to_json(ordering));
    else
        write_bytes(path, encode_ordering(ordering));
}

Ordering load_ordering(const std::filesystem::path& path) {
    if (path.extension() == ".json")
        return ordering_from_json(read_text(path));
    return decode_ordering(read_bytes(path));
}

} // namespace splatstream
