#include "splatstream/camera_io.hpp"
#include "splatstream/chunker.hpp"
#include "splatstream/error.hpp"
#include "splatstream/eval.hpp"
#include "splatstream/image.hpp"
#include "splatstream/ordering.hpp"
#include "splatstream/ply_io.hpp"
#include "splatstream/rasterizer.hpp"
#include "splatstream/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <sstream>

namespace fs = std::filesystem;
using namespace splatstream;

namespace {

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> values;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, std::string("bad number '") + item + "' in " + what);
        }
    }
    if (values.empty())
        fail(ErrorCode::InvalidArgument, std::string(what) + " is empty");
    return values;
}

std::array<float, 3> parse_color(const std::string& text) {
    const auto v = parse_list(text, "--background");
    if (v.size() == 1)
        return {float(v[0]), float(v[0]), float(v[0])};
    if (v.size() != 3)
        fail(ErrorCode::InvalidArgument, "--background takes one or three values");
    return {float(v[0]), float(v[1]), float(v[2])};
}

std::vector<Camera> read_cameras(const fs::path& path, const std::string& split) {
    auto cameras = load_cameras(path);
    if (!split.empty())
        cameras = select_split(cameras, read_text(split));
    if (cameras.empty())
        fail(ErrorCode::InvalidArgument, "no cameras in " + path.string());
    return cameras;
}

const Camera& pick_camera(const std::vector<Camera>& cameras, const std::string& view) {
    for (const auto& camera : cameras)
        if (!camera.name.empty() && camera.name == view)
            return camera;
    try {
        std::size_t used = 0;
        const auto index = std::stoul(view, &used);
        if (used == view.size() && index < cameras.size())
            return cameras[index];
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidArgument, "no camera '" + view + "'");
}

void write_image(const fs::path& path, const Image& image) {
    if (path.extension() == ".pfm")
        save_pfm(path, image);
    else
        save_png(path, image);
}

struct OrderArgs {
    std::string scene, cameras, split, strategy = "contribution", out, base, view = "0";
    std::vector<std::string> masks;
    int k = kDefaultTopK;
    int octree_depth = 3;
    float margin = kDefaultCullMargin;
    double in_fraction = 0.9;
    std::size_t granularity = 1;
    std::vector<float> center{0.0f, 0.0f, 0.0f};
    unsigned threads = 0;
};

void run_order(const OrderArgs& a) {
    const Scene scene = load_ply_file(a.scene);
    const Strategy strategy = parse_strategy(a.strategy);
    auto tally = [&] {
        if (a.cameras.empty())
            fail(ErrorCode::InvalidArgument, "--cameras is required for strategy " + a.strategy);
        const auto cameras = read_cameras(a.cameras, a.split);
        return tally_contributions(scene, cameras, a.k, a.threads);
    };

    Ordering ordering;
    switch (strategy) {
    case Strategy::Contribution:
        ordering = order_by_contribution(tally());
        break;
    case Strategy::ContributionOctree:
        ordering = refine_octree(scene, tally(), a.octree_depth);
        break;
    case Strategy::Antimatter:
        ordering = order_antimatter(scene);
        break;
    case Strategy::CenterDistance:
        if (a.center.size() != 3)
            fail(ErrorCode::InvalidArgument, "--center takes three values");
        ordering = order_center_distance(scene, Eigen::Vector3f(a.center[0], a.center[1], a.center[2]));
        break;
    case Strategy::Frustum: {
        if (a.cameras.empty())
            fail(ErrorCode::InvalidArgument, "--cameras is required for strategy frustum");
        const auto cameras = read_cameras(a.cameras, a.split);
        const Ordering base = a.base.empty() ? order_by_contribution(tally_contributions(scene, cameras, a.k, a.threads))
                                             : load_ordering(a.base);
        ordering = prioritize_frustum(base, scene, pick_camera(cameras, a.view),
                                      FrustumOptions{a.margin, a.in_fraction, a.granularity});
        break;
    }
    case Strategy::Object: {
        if (a.masks.empty())
            fail(ErrorCode::InvalidArgument, "--mask is required for strategy object");
        std::vector<std::vector<std::uint32_t>> masks;
        for (const auto& path : a.masks)
            masks.push_back(parse_mask(read_text(path)));
        ordering = order_by_objects(scene, tally(), masks);
        break;
    }
    }
    save_ordering(a.out, ordering);
}

struct ChunkArgs {
    std::string scene, ordering, sizes, counts, encoding = "f32", out, scene_id;
    bool morton = false;
};

void run_chunk(const ChunkArgs& a) {
    const Scene scene = load_ply_file(a.scene);
    const Ordering ordering = load_ordering(a.ordering);
    ChunkSizes sizes = default_chunk_schedule();
    if (!a.counts.empty())
        sizes = ChunkSizes::counts(parse_list(a.counts, "--counts"));
    else if (!a.sizes.empty())
        sizes = ChunkSizes::shares(parse_list(a.sizes, "--sizes"));
    ChunkOptions options;
    options.encoding = parse_encoding(a.encoding);
    options.morton = a.morton;
    options.scene_id = a.scene_id.empty() ? fs::path(a.scene).stem().string() : a.scene_id;
    save_chunks(a.out, make_chunks(scene, ordering, sizes, options));
}

struct RenderArgs {
    std::string scene, chunks, prefix = "all", cameras, view = "0", out, background = "0";
    unsigned threads = 0;
};

void run_render(const RenderArgs& a) {
    if (a.scene.empty() == a.chunks.empty())
        fail(ErrorCode::InvalidArgument, "give exactly one of --scene and --chunks");
    Scene scene;
    if (!a.scene.empty()) {
        scene = load_ply_file(a.scene);
    } else {
        const auto manifest = load_manifest(a.chunks);
        std::size_t prefix = manifest.chunks.size();
        if (a.prefix != "all") {
            std::size_t used = 0;
            try {
                prefix = std::stoul(a.prefix, &used);
            } catch (const std::exception&) {
            }
            if (used == 0 || used != a.prefix.size())
                fail(ErrorCode::InvalidArgument, "--prefix must be a chunk count or 'all'");
        }
        scene = load_stream_prefix(a.chunks, prefix);
    }
    const auto cameras = read_cameras(a.cameras, "");
    RenderOptions options;
    options.background = parse_color(a.background);
    options.threads = a.threads;
    write_image(a.out, render(scene, pick_camera(cameras, a.view), options).image);
}

struct EvalArgs {
    std::string scene, cameras, split, percents = "0.2,0.5,1,2,5,10,20,50,100", encoding = "f32", gnuplot,
                                        background = "0";
    std::vector<std::string> orderings, reports;
    unsigned threads = 0;
};

void run_eval(const EvalArgs& a) {
    const Scene scene = load_ply_file(a.scene);
    const auto cameras = read_cameras(a.cameras, a.split);
    std::vector<Ordering> orderings;
    for (const auto& path : a.orderings)
        orderings.push_back(load_ordering(path));
    const auto percents = parse_list(a.percents, "--percents");
    EvalOptions options;
    options.encoding = parse_encoding(a.encoding);
    options.background = parse_color(a.background);
    options.threads = a.threads;
    auto curves = evaluate_curve(scene, orderings, cameras, percents, options);
    for (std::size_t i = 0; i < curves.size(); ++i)
        curves[i].label = fs::path(a.orderings[i]).stem().string();

    if (a.reports.empty())
        std::cout << curves_to_csv(curves);
    for (const auto& report : a.reports) {
        if (fs::path(report).extension() == ".json")
            write_text(report, curves_to_json(curves));
        else
            write_text(report, curves_to_csv(curves));
    }
    if (!a.gnuplot.empty())
        write_gnuplot_data(a.gnuplot, curves);
}

struct ServeArgs {
    std::string dir, listen, config, log;
    std::size_t cache_size = 0;
    std::size_t workers = 0;
};

void run_serve(const ServeArgs& a) {
    ServerConfig config = a.config.empty() ? ServerConfig{} : load_server_config(a.config);
    if (!a.dir.empty())
        config.scene_dir = a.dir;
    if (!a.listen.empty())
        apply_listen(config, a.listen);
    if (!a.log.empty())
        config.request_log = a.log;
    if (a.cache_size)
        config.cache_size = a.cache_size;
    if (a.workers)
        config.worker_threads = a.workers;
    if (config.scene_dir.empty())
        fail(ErrorCode::InvalidArgument, "--dir (or scene_dir in --config) is required");

    auto registry = std::make_shared<const SceneRegistry>(SceneRegistry::load_directory(config.scene_dir));

    // Route SIGINT/SIGTERM to a waiter thread so the server can shut down cleanly.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    StreamServer server(registry, config);
    const int port = server.bind();
    std::cout << "listening on " << config.host << ':' << port << " with " << registry->scenes().size()
              << " scene(s)" << std::endl;
    std::jthread waiter([&] {
        int received = 0;
        sigwait(&signals, &received);
        server.stop();
    });
    server.run();
    if (waiter.joinable()) {
        pthread_kill(waiter.native_handle(), SIGTERM);
    }
}

struct CamerasArgs {
    std::string model, out, split;
};

void run_cameras(const CamerasArgs& a) {
    auto cameras = load_colmap_cameras(a.model);
    if (!a.split.empty())
        cameras = select_split(cameras, read_text(a.split));
    save_cameras(a.out, cameras);
}

std::string one_line(std::string text) {
    for (char& c : text)
        if (c == '\n' || c == '\r')
            c = ' ';
    return text;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Progressive Gaussian splat ordering, chunking, rendering and streaming"};
    app.require_subcommand(1);

    OrderArgs order;
    auto* order_cmd = app.add_subcommand("order", "compute a splat ordering");
    order_cmd->add_option("--scene", order.scene, "input PLY")->required()->check(CLI::ExistingFile);
    order_cmd->add_option("--cameras", order.cameras, "cameras JSON")->check(CLI::ExistingFile);
    order_cmd->add_option("--split", order.split, "file of camera names to use")->check(CLI::ExistingFile);
    order_cmd->add_option("--strategy", order.strategy,
                          "contribution|contribution-octree|antimatter|center|frustum|object")
        ->capture_default_str();
    order_cmd->add_option("--k", order.k, "top contributors tracked per pixel")->capture_default_str();
    order_cmd->add_option("--octree-depth", order.octree_depth)->capture_default_str();
    order_cmd->add_option("--center", order.center, "reference point for center distance")->expected(3);
    order_cmd->add_option("--base", order.base, "ordering refined by the frustum strategy");
    order_cmd->add_option("--view", order.view, "camera index or name for the frustum strategy")
        ->capture_default_str();
    order_cmd->add_option("--margin", order.margin, "frustum margin per side")->capture_default_str();
    order_cmd->add_option("--in-fraction", order.in_fraction)->capture_default_str();
    order_cmd->add_option("--granularity", order.granularity, "block size of the frustum merge")
        ->capture_default_str();
    order_cmd->add_option("--mask", order.masks, "object mask file (repeatable)");
    order_cmd->add_option("--threads", order.threads);
    order_cmd->add_option("--out", order.out, "ordering file (.json or binary)")->required();

    ChunkArgs chunk;
    auto* chunk_cmd = app.add_subcommand("chunk", "split an ordered scene into progressive chunks");
    chunk_cmd->add_option("--scene", chunk.scene)->required()->check(CLI::ExistingFile);
    chunk_cmd->add_option("--ordering", chunk.ordering)->required()->check(CLI::ExistingFile);
    chunk_cmd->add_option("--sizes", chunk.sizes, "comma separated percentages");
    chunk_cmd->add_option("--counts", chunk.counts, "comma separated splat counts")->excludes("--sizes");
    chunk_cmd->add_option("--encoding", chunk.encoding, "f32|q8|q16")->capture_default_str();
    chunk_cmd->add_flag("--morton", chunk.morton, "Morton-sort splats inside each chunk");
    chunk_cmd->add_option("--scene-id", chunk.scene_id);
    chunk_cmd->add_option("--out", chunk.out, "output directory")->required();

    RenderArgs rend;
    auto* render_cmd = app.add_subcommand("render", "render a scene or a chunk prefix");
    render_cmd->add_option("--scene", rend.scene)->check(CLI::ExistingFile);
    render_cmd->add_option("--chunks", rend.chunks)->check(CLI::ExistingDirectory);
    render_cmd->add_option("--prefix", rend.prefix, "number of chunks or 'all'")->capture_default_str();
    render_cmd->add_option("--camera,--cameras", rend.cameras, "cameras JSON")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--view", rend.view, "camera index or name")->capture_default_str();
    render_cmd->add_option("--background", rend.background, "r,g,b in [0,1]")->capture_default_str();
    render_cmd->add_option("--threads", rend.threads);
    render_cmd->add_option("--out", rend.out, "PNG (or .pfm) output")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "quality of partial scenes per ordering");
    eval_cmd->add_option("--scene", ev.scene)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--orderings", ev.orderings)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--cameras", ev.cameras)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", ev.split)->check(CLI::ExistingFile);
    eval_cmd->add_option("--percents", ev.percents)->capture_default_str();
    eval_cmd->add_option("--encoding", ev.encoding)->capture_default_str();
    eval_cmd->add_option("--background", ev.background)->capture_default_str();
    eval_cmd->add_option("--report", ev.reports, "CSV or JSON report path (repeatable)");
    eval_cmd->add_option("--gnuplot", ev.gnuplot, "directory for per-curve .dat files");
    eval_cmd->add_option("--threads", ev.threads);

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "serve chunked scenes over HTTP");
    serve_cmd->add_option("--dir", serve.dir, "scene directory");
    serve_cmd->add_option("--listen", serve.listen, "host:port");
    serve_cmd->add_option("--config", serve.config, "JSON config file")->check(CLI::ExistingFile);
    serve_cmd->add_option("--log", serve.log, "request log path, '-' for stderr");
    serve_cmd->add_option("--cache-size", serve.cache_size);
    serve_cmd->add_option("--workers", serve.workers);

    CamerasArgs cams;
    auto* cameras_cmd = app.add_subcommand("cameras", "convert a COLMAP text model to cameras JSON");
    cameras_cmd->add_option("--colmap", cams.model, "directory with cameras.txt and images.txt")
        ->required()
        ->check(CLI::ExistingDirectory);
    cameras_cmd->add_option("--split", cams.split)->check(CLI::ExistingFile);
    cameras_cmd->add_option("--out", cams.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error code=InvalidArgument message=" << one_line(e.what()) << '\n';
        return 2;
    }

    try {
        if (*order_cmd)
            run_order(order);
        else if (*chunk_cmd)
            run_chunk(chunk);
        else if (*render_cmd)
            run_render(rend);
        else if (*eval_cmd)
            run_eval(ev);
        else if (*serve_cmd)
            run_serve(serve);
        else if (*cameras_cmd)
            run_cameras(cams);
    } catch (const Error& e) {
        std::cerr << "error code=" << to_string(e.code()) << " message=" << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error code=Internal message=" << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
