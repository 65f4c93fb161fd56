#pragma once

#include "splatstream/chunker.hpp"
#include "splatstream/ordering.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace splatstream {

/// One chunked encoding of a scene, held in memory after verification.
struct ServedStream {
    std::string name; // directory name; also matched against the strategy tag
    ChunkManifest manifest;
    std::vector<Bytes> chunks;
    Scene decoded; // all splats in stream order
};

struct SceneEntry {
    std::string id;
    std::vector<ServedStream> streams;

    const ServedStream* find_stream(std::string_view name) const;
    /// Preferred default: contribution-octree, then contribution, then first.
    const ServedStream& default_stream() const;
};

/// Immutable after registration; every chunk is checksum-verified on add.
class SceneRegistry {
public:
    void add(const std::string& scene_id, const std::string& stream_name, ChunkedScene chunked);

    /// Registers `<root>/<scene>/<stream>/manifest.json` (and
    /// `<root>/<scene>/manifest.json`, as stream "default").
    static SceneRegistry load_directory(const std::filesystem::path& root);

    const SceneEntry* find(std::string_view scene_id) const;
    const std::map<std::string, SceneEntry, std::less<>>& scenes() const noexcept { return scenes_; }

private:
    std::map<std::string, SceneEntry, std::less<>> scenes_;
};

/// Body of POST /scenes/{id}/prioritize.
struct PrioritizeRequest {
    Camera camera;
    float margin = kDefaultCullMargin;
    double in_fraction = 0.9;
    std::uint32_t received_chunks = 0;
    std::string stream;
};

PrioritizeRequest parse_prioritize_request(std::string_view body);

/// A pose-prioritized continuation of a base stream: chunks cover the base
/// splats not yet delivered, reordered by `prioritize_frustum` with one
/// block per remaining chunk.
struct VirtualStream {
    std::string key;
    std::string scene_id;
    std::string base_stream;
    std::uint64_t base_offset = 0;         // splats already delivered
    std::vector<std::uint64_t> order;      // base-order positions, new order
    ChunkManifest manifest;
    std::vector<Bytes> chunks;
};

VirtualStream prioritize_stream(const SceneEntry& scene, const PrioritizeRequest& request);

/// Cache key of a prioritization request (hex FNV-1a over its parameters).
std::string prioritize_key(std::string_view scene_id, const PrioritizeRequest& request);

/// Bounded LRU cache, safe for concurrent lookup and insert.
class PrioritizeCache {
public:
    explicit PrioritizeCache(std::size_t capacity) : capacity_(capacity) {}

    std::shared_ptr<const VirtualStream> find(const std::string& key);
    std::shared_ptr<const VirtualStream> insert(std::shared_ptr<const VirtualStream> stream);
    std::size_t size() const;

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::vector<std::shared_ptr<const VirtualStream>> entries_; // most recent last
};

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path scene_dir;
    std::size_t cache_size = 64;
    std::string request_log; // file path, "-" for stderr, empty to disable
    std::size_t worker_threads = 32;
};

/// Reads a JSON config: {"listen": "host:port", "scene_dir", "cache_size",
/// "request_log", "worker_threads"}.
ServerConfig load_server_config(const std::filesystem::path& path);
/// Splits "host:port" (or ":port") into the config.
void apply_listen(ServerConfig& config, std::string_view listen);

std::string scene_list_json(const SceneRegistry& registry);
/// Manifest JSON with a "url" per chunk.
std::string served_manifest_json(const std::string& scene_id, const ServedStream& stream);
std::string virtual_manifest_json(const VirtualStream& stream);

class StreamServer {
public:
    StreamServer(std::shared_ptr<const SceneRegistry> registry, ServerConfig config);
    ~StreamServer();
    StreamServer(const StreamServer&) = delete;
    StreamServer& operator=(const StreamServer&) = delete;

    /// Binds the listening socket; port 0 picks a free port. Returns the port.
    int bind();
    /// Serves until `stop`; requires a prior `bind`.
    void run();
    /// Binds if needed and serves on a background thread.
    int start();
    void stop();

private:
    void install_routes();
    void log_request(const std::string& method, const std::string& path, int status, std::size_t bytes,
                     long long elapsed_us);

    std::shared_ptr<const SceneRegistry> registry_;
    ServerConfig config_;
    PrioritizeCache cache_;
    std::unique_ptr<httplib::Server> http_;
    std::unique_ptr<std::ostream> log_file_;
    std::ostream* log_ = nullptr;
    std::mutex log_mutex_;
    std::thread worker_;
    int port_ = -1;
};

} // namespace splatstream
