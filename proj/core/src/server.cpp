#include "splatstream/server.hpp"

#include "splatstream/camera_io.hpp"
#include "splatstream/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

namespace splatstream {

const ServedStream* SceneEntry::find_stream(std::string_view name) const {
    for (const auto& stream : streams)
        if (stream.name == name)
            return &stream;
    for (const auto& stream : streams)
        if (to_string(stream.manifest.strategy) == name)
            return &stream;
    return nullptr;
}

const ServedStream& SceneEntry::default_stream() const {
    for (auto preferred : {Strategy::ContributionOctree, Strategy::Contribution})
        for (const auto& stream : streams)
            if (stream.manifest.strategy == preferred)
                return stream;
    return streams.front();
}

void SceneRegistry::add(const std::string& scene_id, const std::string& stream_name, ChunkedScene chunked) {
    if (scene_id.empty() || scene_id.find('/') != std::string::npos)
        fail(ErrorCode::InvalidArgument, "bad scene id '" + scene_id + "'");
    if (chunked.chunks.size() != chunked.manifest.chunks.size())
        fail(ErrorCode::InvalidArgument, "stream " + stream_name + " is missing chunks");

    ServedStream stream;
    stream.name = stream_name;
    // decode_stream verifies every checksum and count against the manifest.
    stream.decoded = decode_stream(chunked.manifest, std::span<const Bytes>(chunked.chunks));
    if (stream.decoded.count() != chunked.manifest.total_count)
        fail(ErrorCode::MalformedChunk, "stream " + stream_name + " decodes to the wrong splat count");
    stream.manifest = std::move(chunked.manifest);
    stream.chunks = std::move(chunked.chunks);

    auto& entry = scenes_[scene_id];
    entry.id = scene_id;
    if (std::any_of(entry.streams.begin(), entry.streams.end(),
                    [&](const ServedStream& s) { return s.name == stream_name; }))
        fail(ErrorCode::InvalidArgument, "duplicate stream " + stream_name + " for scene " + scene_id);
    entry.streams.push_back(std::move(stream));
}

SceneRegistry SceneRegistry::load_directory(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root))
        fail(ErrorCode::IoError, "scene directory " + root.string() + " does not exist");

    auto load = [](const fs::path& dir) {
        ChunkedScene chunked;
        chunked.manifest = load_manifest(dir);
        for (const auto& entry : chunked.manifest.chunks)
            chunked.chunks.push_back(read_bytes(dir / entry.file));
        return chunked;
    };

    SceneRegistry registry;
    std::vector<fs::path> scene_dirs;
    for (const auto& item : fs::directory_iterator(root))
        if (item.is_directory())
            scene_dirs.push_back(item.path());
    std::sort(scene_dirs.begin(), scene_dirs.end());
    for (const auto& scene_dir : scene_dirs) {
        const std::string scene_id = scene_dir.filename().string();
        if (fs::exists(scene_dir / "manifest.json"))
            registry.add(scene_id, "default", load(scene_dir));
        std::vector<fs::path> stream_dirs;
        for (const auto& item : fs::directory_iterator(scene_dir))
            if (item.is_directory() && fs::exists(item.path() / "manifest.json"))
                stream_dirs.push_back(item.path());
        std::sort(stream_dirs.begin(), stream_dirs.end());
        for (const auto& stream_dir : stream_dirs)
            registry.add(scene_id, stream_dir.filename().string(), load(stream_dir));
    }
    return registry;
}

const SceneEntry* SceneRegistry::find(std::string_view scene_id) const {
    const auto it = scenes_.find(scene_id);
    return it == scenes_.end() ? nullptr : &it->second;
}

PrioritizeRequest parse_prioritize_request(std::string_view body) {
    PrioritizeRequest request;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("request body: ") + e.what());
    }
    if (!j.is_object() || !j.contains("camera"))
        fail(ErrorCode::ParseError, "request body needs a \"camera\" object");
    try {
        const auto cameras = cameras_from_json(nlohmann::json::array({j.at("camera")}).dump());
        request.camera = cameras.front();
        request.margin = j.value("margin", request.margin);
        request.in_fraction = j.value("in_fraction", request.in_fraction);
        request.received_chunks = j.value("received_chunks", 0u);
        request.stream = j.value("strategy", std::string());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("request body: ") + e.what());
    }
    if (!(request.margin >= 0.0f) || !(request.in_fraction >= 0.0 && request.in_fraction <= 1.0))
        fail(ErrorCode::InvalidArgument, "margin must be >= 0 and in_fraction within [0, 1]");
    return request;
}

std::string prioritize_key(std::string_view scene_id, const PrioritizeRequest& request) {
    std::uint64_t hash = 1469598103934665603ull;
    auto mix = [&](const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            hash ^= p[i];
            hash *= 1099511628211ull;
        }
    };
    const Camera& c = request.camera;
    mix(scene_id.data(), scene_id.size());
    mix("\0", 1);
    mix(request.stream.data(), request.stream.size());
    mix("\0", 1);
    mix(&request.received_chunks, sizeof(request.received_chunks));
    mix(&request.margin, sizeof(request.margin));
    mix(&request.in_fraction, sizeof(request.in_fraction));
    mix(&c.width, sizeof(c.width));
    mix(&c.height, sizeof(c.height));
    for (float v : {c.fx, c.fy, c.cx, c.cy, c.near_plane, c.far_plane})
        mix(&v, sizeof(v));
    mix(c.rotation.data(), sizeof(float) * 9);
    mix(c.translation.data(), sizeof(float) * 3);
    char text[17];
    std::snprintf(text, sizeof(text), "%016llx", static_cast<unsigned long long>(hash));
    return text;
}

VirtualStream prioritize_stream(const SceneEntry& scene, const PrioritizeRequest& request) {
    const ServedStream* base = request.stream.empty() ? &scene.default_stream() : scene.find_stream(request.stream);
    if (!base)
        fail(ErrorCode::InvalidArgument, "unknown strategy '" + request.stream + "'");
    const auto& chunks = base->manifest.chunks;
    if (request.received_chunks > chunks.size())
        fail(ErrorCode::InvalidArgument, "received_chunks exceeds the number of chunks");

    VirtualStream out;
    out.key = prioritize_key(scene.id, request);
    out.scene_id = scene.id;
    out.base_stream = base->name;
    out.base_offset = request.received_chunks < chunks.size() ? chunks[request.received_chunks].offset
                                                              : base->manifest.total_count;

    Scene remaining;
    remaining.sh_degree = base->decoded.sh_degree;
    remaining.has_normals = false;
    remaining.splats.assign(base->decoded.splats.begin() + static_cast<std::ptrdiff_t>(out.base_offset),
                            base->decoded.splats.end());
    std::vector<std::uint32_t> blocks;
    for (std::size_t j = request.received_chunks; j < chunks.size(); ++j)
        blocks.push_back(chunks[j].count);

    ChunkManifest& m = out.manifest;
    m.scene_id = scene.id;
    m.total_count = remaining.count();
    m.strategy = Strategy::Frustum;
    m.encoding = base->manifest.encoding;
    m.sh_degree = base->manifest.sh_degree;
    if (remaining.empty())
        return out;

    Ordering identity;
    identity.strategy = base->manifest.strategy;
    identity.permutation.resize(remaining.count());
    std::iota(identity.permutation.begin(), identity.permutation.end(), 0u);
    identity.scores.assign(remaining.count(), 0.0f);
    const Ordering prioritized =
        prioritize_frustum_blocks(identity, remaining, request.camera, request.margin, request.in_fraction, blocks);

    std::vector<double> sizes(blocks.begin(), blocks.end());
    ChunkOptions options;
    options.encoding = base->manifest.encoding;
    options.scene_id = scene.id;
    auto chunked = make_chunks(remaining, prioritized, ChunkSizes::counts(std::move(sizes)), options);
    out.manifest = std::move(chunked.manifest);
    out.chunks = std::move(chunked.chunks);
    out.order.reserve(prioritized.size());
    for (auto index : prioritized.permutation)
        out.order.push_back(out.base_offset + index);
    return out;
}

std::shared_ptr<const VirtualStream> PrioritizeCache::find(const std::string& key) {
    std::lock_guard lock(mutex_);
    const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e->key == key; });
    if (it == entries_.end())
        return nullptr;
    auto found = *it;
    entries_.erase(it);
    entries_.push_back(found);
    return found;
}

std::shared_ptr<const VirtualStream> PrioritizeCache::insert(std::shared_ptr<const VirtualStream> stream) {
    std::lock_guard lock(mutex_);
    // A concurrent request may have inserted the same key first; keep that one.
    const auto it =
        std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e->key == stream->key; });
    if (it != entries_.end())
        return *it;
    entries_.push_back(stream);
    while (entries_.size() > std::max<std::size_t>(capacity_, 1))
        entries_.erase(entries_.begin());
    return stream;
}

std::size_t PrioritizeCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

ServerConfig load_server_config(const std::filesystem::path& path) {
    ServerConfig config;
    try {
        const auto j = nlohmann::json::parse(read_text(path));
        if (j.contains("listen"))
            apply_listen(config, j.at("listen").get<std::string>());
        if (j.contains("scene_dir")) {
            std::filesystem::path dir = j.at("scene_dir").get<std::string>();
            config.scene_dir = dir.is_relative() ? path.parent_path() / dir : dir;
        }
        config.cache_size = j.value("cache_size", config.cache_size);
        config.request_log = j.value("request_log", config.request_log);
        config.worker_threads = j.value("worker_threads", config.worker_threads);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("server config: ") + e.what());
    }
    return config;
}

void apply_listen(ServerConfig& config, std::string_view listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string_view::npos)
        fail(ErrorCode::InvalidArgument, "listen address must look like host:port");
    if (colon > 0)
        config.host = std::string(listen.substr(0, colon));
    try {
        std::size_t used = 0;
        const std::string port(listen.substr(colon + 1));
        config.port = std::stoi(port, &used);
        if (used != port.size() || config.port < 0 || config.port > 65535)
            throw std::out_of_range("port");
    } catch (const std::exception&) {
        fail(ErrorCode::InvalidArgument, "bad port in listen address '" + std::string(listen) + "'");
    }
}

std::string scene_list_json(const SceneRegistry& registry) {
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& [id, entry] : registry.scenes()) {
        nlohmann::json streams = nlohmann::json::array();
        for (const auto& s : entry.streams)
            streams.push_back({{"name", s.name},
                               {"strategy", std::string(to_string(s.manifest.strategy))},
                               {"encoding", std::string(to_string(s.manifest.encoding))},
                               {"chunks", s.manifest.chunks.size()}});
        scenes.push_back({{"id", id},
                          {"splat_count", entry.default_stream().manifest.total_count},
                          {"default_strategy", entry.default_stream().name},
                          {"strategies", std::move(streams)}});
    }
    return nlohmann::json{{"scenes", std::move(scenes)}}.dump(2);
}

std::string served_manifest_json(const std::string& scene_id, const ServedStream& stream) {
    auto j = nlohmann::json::parse(manifest_to_json(stream.manifest));
    j["stream"] = stream.name;
    for (auto& chunk : j["chunks"])
        chunk["url"] = "/scenes/" + scene_id + "/chunks/" + std::to_string(chunk["index"].get<std::uint32_t>()) +
                       "?strategy=" + stream.name;
    return j.dump(2);
}

std::string virtual_manifest_json(const VirtualStream& stream) {
    auto j = nlohmann::json::parse(manifest_to_json(stream.manifest));
    j["virtual_id"] = stream.key;
    j["base_stream"] = stream.base_stream;
    j["base_offset"] = stream.base_offset;
    j["order"] = stream.order;
    for (auto& chunk : j["chunks"])
        chunk["url"] = "/scenes/" + stream.scene_id + "/virtual/" + stream.key + "/chunks/" +
                       std::to_string(chunk["index"].get<std::uint32_t>());
    return j.dump(2);
}

namespace {

thread_local std::chrono::steady_clock::time_point request_start;

std::string etag_of(std::uint32_t crc) {
    char text[16];
    std::snprintf(text, sizeof(text), "\"%08x\"", crc);
    return text;
}

void send_json_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

void send_chunk(const httplib::Request& req, httplib::Response& res, const Bytes& bytes, std::uint32_t crc) {
    const std::string etag = etag_of(crc);
    res.set_header("ETag", etag);
    res.set_header("Cache-Control", "public, max-age=31536000, immutable");
    if (req.get_header_value("If-None-Match") == etag) {
        res.status = 304;
        return;
    }
    res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
}

// Parses a decimal chunk index; false when it does not fit.
bool parse_index(const std::string& text, std::size_t& index) {
    if (text.empty() || text.size() > 9 || !std::all_of(text.begin(), text.end(), ::isdigit))
        return false;
    index = static_cast<std::size_t>(std::stoul(text));
    return true;
}

} // namespace

StreamServer::StreamServer(std::shared_ptr<const SceneRegistry> registry, ServerConfig config)
    : registry_(std::move(registry)), config_(std::move(config)), cache_(config_.cache_size),
      http_(std::make_unique<httplib::Server>()) {
    if (config_.request_log == "-") {
        log_ = &std::cerr;
    } else if (!config_.request_log.empty()) {
        log_file_ = std::make_unique<std::ofstream>(config_.request_log, std::ios::app);
        if (!*log_file_)
            fail(ErrorCode::IoError, "cannot open request log " + config_.request_log);
        log_ = log_file_.get();
    }
    const std::size_t workers = std::max<std::size_t>(config_.worker_threads, 1);
    http_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    install_routes();
}

StreamServer::~StreamServer() {
    stop();
}

void StreamServer::log_request(const std::string& method, const std::string& path, int status, std::size_t bytes,
                               long long elapsed_us) {
    if (!log_)
        return;
    const auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    const nlohmann::json line = {{"ts_us", now},       {"method", method}, {"path", path},
                                 {"status", status},   {"bytes", bytes},   {"elapsed_us", elapsed_us}};
    std::lock_guard lock(log_mutex_);
    *log_ << line.dump() << '\n';
    log_->flush();
}

void StreamServer::install_routes() {
    auto& http = *http_;

    http.set_pre_routing_handler([](const httplib::Request&, httplib::Response&) {
        request_start = std::chrono::steady_clock::now();
        return httplib::Server::HandlerResponse::Unhandled;
    });
    http.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
        const auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
                                 std::chrono::steady_clock::now() - request_start)
                                 .count();
        log_request(req.method, req.path, res.status, res.body.size(), elapsed);
    });
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            const bool client = e.code() == ErrorCode::ParseError || e.code() == ErrorCode::InvalidArgument ||
                                e.code() == ErrorCode::InvalidCamera;
            send_json_error(res, client ? 400 : 500, e.what());
        } catch (const std::exception& e) {
            send_json_error(res, 500, e.what());
        }
    });

    http.Get("/scenes", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(scene_list_json(*registry_), "application/json");
    });

    auto lookup_stream = [this](const httplib::Request& req, httplib::Response& res) -> const ServedStream* {
        const SceneEntry* scene = registry_->find(req.matches[1].str());
        if (!scene) {
            send_json_error(res, 404, "unknown scene");
            return nullptr;
        }
        const std::string name = req.get_param_value("strategy");
        const ServedStream* stream = name.empty() ? &scene->default_stream() : scene->find_stream(name);
        if (!stream)
            send_json_error(res, 404, "unknown strategy '" + name + "'");
        return stream;
    };

    http.Get(R"(/scenes/([^/]+)/manifest)", [lookup_stream](const httplib::Request& req, httplib::Response& res) {
        if (const ServedStream* stream = lookup_stream(req, res))
            res.set_content(served_manifest_json(req.matches[1].str(), *stream), "application/json");
    });

    http.Get(R"(/scenes/([^/]+)/chunks/([^/]+))",
             [lookup_stream](const httplib::Request& req, httplib::Response& res) {
                 const ServedStream* stream = lookup_stream(req, res);
                 if (!stream)
                     return;
                 std::size_t index = 0;
                 if (!parse_index(req.matches[2].str(), index) || index >= stream->chunks.size())
                     return send_json_error(res, 404, "chunk out of range");
                 send_chunk(req, res, stream->chunks[index], stream->manifest.chunks[index].crc32);
             });

    http.Post(R"(/scenes/([^/]+)/prioritize)", [this](const httplib::Request& req, httplib::Response& res) {
        const SceneEntry* scene = registry_->find(req.matches[1].str());
        if (!scene)
            return send_json_error(res, 404, "unknown scene");
        PrioritizeRequest request;
        try {
            request = parse_prioritize_request(req.body);
        } catch (const Error& e) {
            return send_json_error(res, 400, e.what());
        }
        if (!request.stream.empty() && !scene->find_stream(request.stream))
            return send_json_error(res, 404, "unknown strategy '" + request.stream + "'");
        const std::string key = prioritize_key(scene->id, request);
        auto stream = cache_.find(key);
        if (!stream)
            stream = cache_.insert(std::make_shared<const VirtualStream>(prioritize_stream(*scene, request)));
        res.set_header("ETag", "\"" + key + "\"");
        res.set_content(virtual_manifest_json(*stream), "application/json");
    });

    http.Get(R"(/scenes/([^/]+)/virtual/([0-9a-f]+)/chunks/([^/]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
                 const auto stream = cache_.find(req.matches[2].str());
                 if (!stream || stream->scene_id != req.matches[1].str())
                     return send_json_error(res, 404, "unknown or evicted prioritized stream");
                 std::size_t index = 0;
                 if (!parse_index(req.matches[3].str(), index) || index >= stream->chunks.size())
                     return send_json_error(res, 404, "chunk out of range");
                 send_chunk(req, res, stream->chunks[index], stream->manifest.chunks[index].crc32);
             });
}

int StreamServer::bind() {
    if (port_ >= 0)
        return port_;
    if (config_.port == 0)
        port_ = http_->bind_to_any_port(config_.host);
    else
        port_ = http_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
    if (port_ < 0)
        fail(ErrorCode::IoError, "cannot listen on " + config_.host + ":" + std::to_string(config_.port));
    return port_;
}

void StreamServer::run() {
    if (port_ < 0)
        fail(ErrorCode::InvalidArgument, "server must be bound before run()");
    http_->listen_after_bind();
}

int StreamServer::start() {
    const int port = bind();
    worker_ = std::thread([this] { run(); });
    http_->wait_until_ready();
    return port;
}

void StreamServer::stop() {
    if (http_)
        http_->stop();
    if (worker_.joinable())
        worker_.join();
}

} // namespace splatstream
