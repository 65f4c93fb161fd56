#include "splatstream/chunker.hpp"
#include "splatstream/eval.hpp"
#include "splatstream/ordering.hpp"
#include "splatstream/ply_io.hpp"
#include "splatstream/rasterizer.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace splatstream;

namespace {

Scene make_scene(std::size_t count) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> pos(-1.5f, 1.5f);
    std::uniform_real_distribution<float> scale(-4.5f, -2.5f);
    std::uniform_real_distribution<float> unit(-1.0f, 1.0f);
    Scene scene;
    scene.splats.resize(count);
    for (auto& g : scene.splats) {
        g.position = {pos(rng), pos(rng), pos(rng)};
        g.log_scale = {scale(rng), scale(rng), scale(rng)};
        g.rotation = {1.0f + unit(rng), unit(rng), unit(rng), unit(rng)};
        g.opacity_logit = 2.0f * unit(rng);
        g.sh_dc = {unit(rng), unit(rng), unit(rng)};
        for (auto& c : g.sh_rest)
            c = 0.1f * unit(rng);
    }
    return scene;
}

std::vector<Camera> make_cameras(int count, int size) {
    std::vector<Camera> cameras;
    for (int i = 0; i < count; ++i) {
        const float a = 6.2831853f * static_cast<float>(i) / static_cast<float>(count);
        cameras.push_back(look_at({4.0f * std::cos(a), 0.5f, 4.0f * std::sin(a)}, Eigen::Vector3f::Zero(),
                                  Eigen::Vector3f::UnitY(), size, size, 0.9f * static_cast<float>(size)));
    }
    return cameras;
}

void BM_Render(benchmark::State& state) {
    const Scene scene = make_scene(static_cast<std::size_t>(state.range(0)));
    const PreparedScene prepared = prepare(scene);
    const Camera camera = make_cameras(1, 256).front();
    RenderOptions options;
    options.threads = 1;
    for (auto _ : state)
        benchmark::DoNotOptimize(render(prepared, camera, options));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Render)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Tally(benchmark::State& state) {
    const Scene scene = make_scene(static_cast<std::size_t>(state.range(0)));
    const auto cameras = make_cameras(4, 128);
    for (auto _ : state)
        benchmark::DoNotOptimize(tally_contributions(scene, cameras, kDefaultTopK, 1));
}
BENCHMARK(BM_Tally)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_Orderings(benchmark::State& state) {
    const Scene scene = make_scene(100000);
    const auto cameras = make_cameras(2, 64);
    const auto tally = tally_contributions(scene, cameras, kDefaultTopK, 1);
    for (auto _ : state) {
        switch (state.range(0)) {
        case 0: benchmark::DoNotOptimize(order_by_contribution(tally)); break;
        case 1: benchmark::DoNotOptimize(refine_octree(scene, tally, 4)); break;
        case 2: benchmark::DoNotOptimize(order_antimatter(scene)); break;
        default: benchmark::DoNotOptimize(prioritize_frustum(order_by_contribution(tally), scene, cameras[0])); break;
        }
    }
}
BENCHMARK(BM_Orderings)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_ChunkEncode(benchmark::State& state) {
    const Scene scene = make_scene(100000);
    const Ordering ordering = order_antimatter(scene);
    ChunkOptions options;
    options.encoding = static_cast<Encoding>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(make_chunks(scene, ordering, default_chunk_schedule(), options));
    state.SetItemsProcessed(state.iterations() * 100000);
}
BENCHMARK(BM_ChunkEncode)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_ChunkDecode(benchmark::State& state) {
    const Scene scene = make_scene(100000);
    ChunkOptions options;
    options.encoding = static_cast<Encoding>(state.range(0));
    const auto chunked = make_chunks(scene, order_antimatter(scene), default_chunk_schedule(), options);
    for (auto _ : state)
        benchmark::DoNotOptimize(decode_stream(chunked.manifest, std::span<const Bytes>(chunked.chunks)));
    state.SetItemsProcessed(state.iterations() * 100000);
}
BENCHMARK(BM_ChunkDecode)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_PlyRoundTrip(benchmark::State& state) {
    const Bytes bytes = write_ply(make_scene(100000));
    for (auto _ : state)
        benchmark::DoNotOptimize(write_ply(load_ply(bytes)));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_PlyRoundTrip)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image a(512, 512);
    Image b(512, 512);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        a.pixels[i] = u(rng);
        b.pixels[i] = u(rng);
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
