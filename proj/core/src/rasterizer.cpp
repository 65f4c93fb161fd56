#include "splatstream/rasterizer.hpp"

#include "splatstream/error.hpp"
#include "splatstream/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace splatstream {

bool in_expanded_view(const Camera& camera, const Eigen::Vector3f& world_point, float margin) {
    const Eigen::Vector3f view = camera.to_view(world_point);
    if (!(view.z() > camera.near_plane))
        return false;
    const float u = camera.fx * view.x() / view.z() + camera.cx;
    const float v = camera.fy * view.y() / view.z() + camera.cy;
    const float w = static_cast<float>(camera.width);
    const float h = static_cast<float>(camera.height);
    return u >= -margin * w && u <= (1.0f + margin) * w && v >= -margin * h && v <= (1.0f + margin) * h;
}

std::optional<ProjectedGaussian> project(const ActivatedGaussian& g, const Camera& camera,
                                         std::uint32_t splat_index, float cull_margin) {
    if (!in_expanded_view(camera, g.position, cull_margin))
        return std::nullopt;
    const Eigen::Vector3f view = camera.to_view(g.position);
    const float z = view.z();

    // Jacobian of the perspective map, with the tangent clamped as in the
    // reference rasterizer so that off-axis splats do not blow up.
    const float limit_x = 1.3f * 0.5f * static_cast<float>(camera.width) / camera.fx;
    const float limit_y = 1.3f * 0.5f * static_cast<float>(camera.height) / camera.fy;
    const float tx = std::clamp(view.x() / z, -limit_x, limit_x) * z;
    const float ty = std::clamp(view.y() / z, -limit_y, limit_y) * z;
    Eigen::Matrix<float, 2, 3> jacobian;
    jacobian << camera.fx / z, 0.0f, -camera.fx * tx / (z * z),
        0.0f, camera.fy / z, -camera.fy * ty / (z * z);

    const Eigen::Matrix<float, 2, 3> jw = jacobian * camera.rotation;
    Eigen::Matrix2f cov2d = jw * g.covariance * jw.transpose();
    cov2d(0, 1) = cov2d(1, 0) = 0.5f * (cov2d(0, 1) + cov2d(1, 0));
    cov2d(0, 0) += kLowPassVariance;
    cov2d(1, 1) += kLowPassVariance;

    const float det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1);
    if (!(det > 0.0f))
        return std::nullopt;

    ProjectedGaussian p;
    p.splat_index = splat_index;
    p.mean2d = Eigen::Vector2f(camera.fx * view.x() / z + camera.cx, camera.fy * view.y() / z + camera.cy);
    p.cov2d = cov2d;
    p.conic = {cov2d(1, 1) / det, -cov2d(0, 1) / det, cov2d(0, 0) / det};
    p.depth = z;
    p.opacity = g.opacity;

    const Eigen::Vector3f dir = (g.position - camera.center()).normalized();
    p.rgb = sh_to_rgb(g, dir);

    // alpha = opacity * exp(-m/2) falls below kMinAlpha once the Mahalanobis
    // distance m exceeds 2 ln(255 opacity); bound that ellipse by a circle.
    const float mid = 0.5f * (cov2d(0, 0) + cov2d(1, 1));
    const float lambda_max = mid + std::sqrt(std::max(0.0f, mid * mid - det));
    const float reach = g.opacity * 255.0f;
    p.extent = reach > 1.0f ? std::sqrt(2.0f * std::log(reach) * lambda_max) : 0.0f;
    return p;
}

PreparedScene prepare(const Scene& scene) {
    PreparedScene prepared;
    prepared.stored = scene.splats;
    prepared.activated.reserve(scene.count());
    for (const auto& g : scene.splats)
        prepared.activated.push_back(activate(g));
    return prepared;
}

namespace {

// Byte-wise order over every field that affects rendering (normals excluded).
int compare_render_fields(const Gaussian& a, const Gaussian& b) {
    if (const int cmp = std::memcmp(a.position.data(), b.position.data(), sizeof(a.position)); cmp != 0)
        return cmp;
    const auto* tail_a = reinterpret_cast<const unsigned char*>(&a.log_scale);
    const auto* tail_b = reinterpret_cast<const unsigned char*>(&b.log_scale);
    const auto tail = sizeof(Gaussian) - offsetof(Gaussian, log_scale);
    return std::memcmp(tail_a, tail_b, tail);
}

struct Binning {
    std::vector<ProjectedGaussian> projected; // front-to-back
    std::vector<std::vector<std::uint32_t>> tiles;
    int tiles_x = 0;
    int tiles_y = 0;
};

Binning bin_splats(const PreparedScene& scene, const Camera& camera, float cull_margin) {
    Binning b;
    b.projected.reserve(scene.activated.size());
    for (std::size_t i = 0; i < scene.activated.size(); ++i) {
        if (auto p = project(scene.activated[i], camera, static_cast<std::uint32_t>(i), cull_margin);
            p && p->extent > 0.0f)
            b.projected.push_back(*p);
    }

    std::sort(b.projected.begin(), b.projected.end(), [&](const ProjectedGaussian& a, const ProjectedGaussian& c) {
        if (a.depth != c.depth)
            return a.depth < c.depth;
        if (const int cmp = compare_render_fields(scene.stored[a.splat_index], scene.stored[c.splat_index]); cmp != 0)
            return cmp < 0;
        return a.splat_index < c.splat_index;
    });

    b.tiles_x = (camera.width + kTileSize - 1) / kTileSize;
    b.tiles_y = (camera.height + kTileSize - 1) / kTileSize;
    b.tiles.resize(static_cast<std::size_t>(b.tiles_x) * b.tiles_y);
    for (std::size_t k = 0; k < b.projected.size(); ++k) {
        const auto& p = b.projected[k];
        // Pixel centers sit at +0.5; one extra pixel of slack absorbs rounding.
        const float reach = p.extent + 1.0f;
        const int x0 = std::max(0, static_cast<int>(std::ceil(p.mean2d.x() - reach - 0.5f)));
        const int x1 = std::min(camera.width - 1, static_cast<int>(std::floor(p.mean2d.x() + reach - 0.5f)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(p.mean2d.y() - reach - 0.5f)));
        const int y1 = std::min(camera.height - 1, static_cast<int>(std::floor(p.mean2d.y() + reach - 0.5f)));
        if (x0 > x1 || y0 > y1)
            continue;
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
                b.tiles[static_cast<std::size_t>(ty) * b.tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
    }
    return b;
}

void offer(std::vector<ContributionEntry>& list, ContributionEntry entry, std::size_t k) {
    if (list.size() == k) {
        if (!heavier(entry, list.back()))
            return;
        list.pop_back();
    }
    list.insert(std::upper_bound(list.begin(), list.end(), entry, heavier), entry);
}

// Per-tile private output; merged in tile order after the frame.
struct TileOutput {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;
    std::vector<float> rgb;
    std::vector<float> transmittance;
    std::vector<std::vector<ContributionEntry>> lists;
};

TileOutput shade_tile(const Binning& b, std::size_t tile, const Camera& camera, const RenderOptions& options,
                      std::size_t top_k) {
    TileOutput out;
    out.x0 = static_cast<int>(tile % b.tiles_x) * kTileSize;
    out.y0 = static_cast<int>(tile / b.tiles_x) * kTileSize;
    out.width = std::min(kTileSize, camera.width - out.x0);
    out.height = std::min(kTileSize, camera.height - out.y0);
    const auto pixels = static_cast<std::size_t>(out.width) * out.height;
    out.rgb.resize(pixels * 3);
    out.transmittance.resize(pixels);
    if (top_k > 0)
        out.lists.resize(pixels);

    const auto& members = b.tiles[tile];
    for (int ly = 0; ly < out.height; ++ly) {
        for (int lx = 0; lx < out.width; ++lx) {
            const std::size_t local = static_cast<std::size_t>(ly) * out.width + lx;
            const float px = static_cast<float>(out.x0 + lx) + 0.5f;
            const float py = static_cast<float>(out.y0 + ly) + 0.5f;
            float transmittance = 1.0f;
            std::array<float, 3> color{0.0f, 0.0f, 0.0f};
            for (std::uint32_t k : members) {
                const ProjectedGaussian& p = b.projected[k];
                const float dx = px - p.mean2d.x();
                const float dy = py - p.mean2d.y();
                const float power = -0.5f * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) - p.conic[1] * dx * dy;
                if (power > 0.0f)
                    continue;
                const float alpha = std::min(kMaxAlpha, p.opacity * std::exp(power));
                if (alpha < kMinAlpha)
                    continue;
                const float next = transmittance * (1.0f - alpha);
                if (next < kMinTransmittance)
                    break;
                const float weight = alpha * transmittance;
                for (int c = 0; c < 3; ++c)
                    color[c] += p.rgb[c] * weight;
                if (top_k > 0)
                    offer(out.lists[local], {p.splat_index, weight}, top_k);
                transmittance = next;
            }
            for (int c = 0; c < 3; ++c)
                out.rgb[local * 3 + c] = std::clamp(color[c] + transmittance * options.background[c], 0.0f, 1.0f);
            out.transmittance[local] = transmittance;
        }
    }
    return out;
}

std::vector<TileOutput> shade_all(const PreparedScene& scene, const Camera& camera, const RenderOptions& options) {
    validate(camera);
    std::size_t top_k = 0;
    if (options.track_top_k) {
        if (*options.track_top_k < 1)
            fail(ErrorCode::InvalidK, "top-K tracking requires K >= 1");
        top_k = static_cast<std::size_t>(*options.track_top_k);
    }
    const Binning binning = bin_splats(scene, camera, options.cull_margin);
    std::vector<TileOutput> tiles(binning.tiles.size());
    parallel_for(
        tiles.size(), [&](std::size_t t) { tiles[t] = shade_tile(binning, t, camera, options, top_k); },
        options.threads);
    return tiles;
}

} // namespace

RenderOutput render(const PreparedScene& scene, const Camera& camera, const RenderOptions& options) {
    const auto tiles = shade_all(scene, camera, options);

    RenderOutput out;
    out.image = Image(camera.width, camera.height);
    out.final_transmittance.assign(out.image.pixel_count(), 1.0f);
    std::vector<std::vector<ContributionEntry>> lists;
    if (options.track_top_k)
        lists.resize(out.image.pixel_count());

    for (const auto& tile : tiles) {
        for (int ly = 0; ly < tile.height; ++ly) {
            for (int lx = 0; lx < tile.width; ++lx) {
                const std::size_t local = static_cast<std::size_t>(ly) * tile.width + lx;
                const int x = tile.x0 + lx;
                const int y = tile.y0 + ly;
                const std::size_t global = static_cast<std::size_t>(y) * camera.width + x;
                for (int c = 0; c < 3; ++c)
                    out.image.at(x, y, c) = tile.rgb[local * 3 + c];
                out.final_transmittance[global] = tile.transmittance[local];
                if (!lists.empty())
                    lists[global] = tile.lists[local];
            }
        }
    }
    for (std::size_t i = 0; i < lists.size(); ++i) {
        if (lists[i].empty())
            continue;
        out.contributions.push_back({static_cast<int>(i % camera.width), static_cast<int>(i / camera.width),
                                     std::move(lists[i])});
    }
    return out;
}

RenderOutput render(const Scene& scene, const Camera& camera, const RenderOptions& options) {
    return render(prepare(scene), camera, options);
}

void accumulate_top_k(const PreparedScene& scene, const Camera& camera, int top_k, std::span<double> scores,
                      float cull_margin, unsigned threads) {
    if (scores.size() != scene.activated.size())
        fail(ErrorCode::InvalidArgument, "score buffer does not match scene size");
    RenderOptions options;
    options.track_top_k = top_k;
    options.cull_margin = cull_margin;
    options.threads = threads;
    const auto tiles = shade_all(scene, camera, options);
    for (const auto& tile : tiles)
        for (const auto& list : tile.lists)
            for (const auto& entry : list)
                scores[entry.splat_index] += static_cast<double>(entry.weight);
}

} // namespace splatstream
