#include "splatstream/chunker.hpp"

#include "splatstream/byte_io.hpp"
#include "splatstream/error.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace splatstream {

std::string_view to_string(Encoding encoding) noexcept {
    switch (encoding) {
        case Encoding::Float32: return "float32";
        case Encoding::Quant8: return "quant8";
        case Encoding::Quant16: return "quant16";
    }
    return "unknown";
}

Encoding parse_encoding(std::string_view name) {
    if (name == "f32" || name == "float32")
        return Encoding::Float32;
    if (name == "q8" || name == "quant8")
        return Encoding::Quant8;
    if (name == "q16" || name == "quant16")
        return Encoding::Quant16;
    fail(ErrorCode::InvalidArgument, "unknown encoding '" + std::string(name) + "'");
}

int bits_of(Encoding encoding) noexcept {
    switch (encoding) {
        case Encoding::Quant8: return 8;
        case Encoding::Quant16: return 16;
        case Encoding::Float32: break;
    }
    return 32;
}

namespace {

constexpr std::string_view kChunkMagic = "PRGS";
constexpr std::uint16_t kChunkVersion = 1;

using Components = std::array<float, kComponentsPerSplat>;

Components flatten(const Gaussian& g) {
    Components c{};
    auto it = c.begin();
    it = std::copy(g.position.begin(), g.position.end(), it);
    it = std::copy(g.log_scale.begin(), g.log_scale.end(), it);
    it = std::copy(g.rotation.begin(), g.rotation.end(), it);
    *it++ = g.opacity_logit;
    it = std::copy(g.sh_dc.begin(), g.sh_dc.end(), it);
    std::copy(g.sh_rest.begin(), g.sh_rest.end(), it);
    return c;
}

Gaussian unflatten(const Components& c) {
    Gaussian g;
    auto it = c.begin();
    std::copy_n(it, 3, g.position.begin());
    it += 3;
    std::copy_n(it, 3, g.log_scale.begin());
    it += 3;
    std::copy_n(it, 4, g.rotation.begin());
    it += 4;
    g.opacity_logit = *it++;
    std::copy_n(it, 3, g.sh_dc.begin());
    it += 3;
    std::copy_n(it, kShRestCount, g.sh_rest.begin());
    return g;
}

// First component index of each attribute.
constexpr std::array<int, 6> kAttributeOffsets = {0, 3, 6, 10, 11, 14};

// Position of (splat, component) in the attribute-major payload.
std::size_t payload_index(std::size_t count, std::size_t splat, int component) {
    int attribute = 5;
    while (kAttributeOffsets[attribute] > component)
        --attribute;
    const int width = kAttributeWidths[attribute];
    return static_cast<std::size_t>(kAttributeOffsets[attribute]) * count + splat * width +
           (component - kAttributeOffsets[attribute]);
}

std::uint32_t morton_spread(std::uint32_t v) {
    v &= 0x3ffu;
    v = (v | (v << 16)) & 0x030000ffu;
    v = (v | (v << 8)) & 0x0300f00fu;
    v = (v | (v << 4)) & 0x030c30c3u;
    v = (v | (v << 2)) & 0x09249249u;
    return v;
}

} // namespace

Chunk chunk_from_splats(std::span<const Gaussian> splats) {
    Chunk chunk;
    chunk.count = static_cast<std::uint32_t>(splats.size());
    chunk.values.resize(splats.size() * kComponentsPerSplat);
    for (std::size_t s = 0; s < splats.size(); ++s) {
        const Components c = flatten(splats[s]);
        for (int k = 0; k < kComponentsPerSplat; ++k)
            chunk.values[payload_index(splats.size(), s, k)] = c[k];
    }
    return chunk;
}

std::vector<Gaussian> chunk_splats(const Chunk& chunk) {
    const Chunk plain = chunk.quantized() ? dequantize_chunk(chunk) : chunk;
    if (plain.values.size() != static_cast<std::size_t>(plain.count) * kComponentsPerSplat)
        fail(ErrorCode::MalformedChunk, "chunk payload does not match its splat count");
    std::vector<Gaussian> splats;
    splats.reserve(plain.count);
    for (std::size_t s = 0; s < plain.count; ++s) {
        Components c{};
        for (int k = 0; k < kComponentsPerSplat; ++k)
            c[k] = plain.values[payload_index(plain.count, s, k)];
        splats.push_back(unflatten(c));
    }
    return splats;
}

namespace {

float dequantize_value(const ComponentRange& range, long long q, long long levels) {
    if (q == 0)
        return range.min;
    if (q == levels)
        return range.max;
    const double span = static_cast<double>(range.max) - range.min;
    return static_cast<float>(range.min + static_cast<double>(q) / static_cast<double>(levels) * span);
}

} // namespace

Chunk quantize_chunk(const Chunk& chunk, int bits) {
    if (bits != 8 && bits != 16)
        fail(ErrorCode::InvalidArgument, "quantization supports 8 or 16 bits");
    if (chunk.quantized())
        fail(ErrorCode::InvalidArgument, "chunk is already quantized");
    if (chunk.count == 0)
        fail(ErrorCode::EmptyChunk, "cannot quantize an empty chunk");
    if (chunk.values.size() != static_cast<std::size_t>(chunk.count) * kComponentsPerSplat)
        fail(ErrorCode::MalformedChunk, "chunk payload does not match its splat count");
    if (!std::all_of(chunk.values.begin(), chunk.values.end(), [](float v) { return std::isfinite(v); }))
        fail(ErrorCode::NonFiniteValue, "cannot quantize NaN or infinite values");

    const double levels = std::ldexp(1.0, bits) - 1.0;
    Chunk out;
    out.encoding = bits == 8 ? Encoding::Quant8 : Encoding::Quant16;
    out.count = chunk.count;
    out.ranges.resize(kComponentsPerSplat);
    out.codes.resize(chunk.values.size());
    for (int k = 0; k < kComponentsPerSplat; ++k) {
        ComponentRange range{std::numeric_limits<float>::infinity(), -std::numeric_limits<float>::infinity()};
        for (std::size_t s = 0; s < chunk.count; ++s) {
            const float v = chunk.values[payload_index(chunk.count, s, k)];
            range.min = std::min(range.min, v);
            range.max = std::max(range.max, v);
        }
        out.ranges[k] = range;
        const double span = static_cast<double>(range.max) - range.min;
        for (std::size_t s = 0; s < chunk.count; ++s) {
            const std::size_t at = payload_index(chunk.count, s, k);
            if (!(span > 0.0)) {
                out.codes[at] = 0;
                continue;
            }
            const double v = chunk.values[at];
            const long long q = std::llround((v - range.min) / span * levels);
            out.codes[at] = static_cast<std::uint16_t>(std::clamp(q, 0LL, static_cast<long long>(levels)));
        }
    }
    return out;
}

Chunk dequantize_chunk(const Chunk& chunk) {
    if (!chunk.quantized())
        fail(ErrorCode::InvalidArgument, "chunk is not quantized");
    if (chunk.ranges.size() != kComponentsPerSplat)
        fail(ErrorCode::MissingHeader, "quantized chunk lacks its min/max table");
    if (chunk.codes.size() != static_cast<std::size_t>(chunk.count) * kComponentsPerSplat)
        fail(ErrorCode::MalformedChunk, "chunk payload does not match its splat count");

    const auto levels = static_cast<std::uint32_t>((1u << bits_of(chunk.encoding)) - 1u);
    Chunk out;
    out.count = chunk.count;
    out.values.resize(chunk.codes.size());
    for (int k = 0; k < kComponentsPerSplat; ++k) {
        const ComponentRange range = chunk.ranges[k];
        for (std::size_t s = 0; s < chunk.count; ++s) {
            const std::size_t at = payload_index(chunk.count, s, k);
            const std::uint32_t q = chunk.codes[at];
            if (q > levels)
                fail(ErrorCode::MalformedChunk, "quantized code exceeds its bit width");
            out.values[at] = dequantize_value(range, q, levels);
        }
    }
    return out;
}

Bytes encode_chunk(const Chunk& chunk) {
    Bytes out;
    ByteWriter w(out);
    w.raw(kChunkMagic);
    w.put<std::uint16_t>(kChunkVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(chunk.encoding));
    w.put<std::uint32_t>(chunk.count);
    const std::size_t components = static_cast<std::size_t>(chunk.count) * kComponentsPerSplat;
    switch (chunk.encoding) {
        case Encoding::Float32:
            if (chunk.values.size() != components)
                fail(ErrorCode::MalformedChunk, "chunk payload does not match its splat count");
            w.put_array<float>(chunk.values);
            break;
        case Encoding::Quant8:
        case Encoding::Quant16:
            if (chunk.ranges.size() != kComponentsPerSplat)
                fail(ErrorCode::MissingHeader, "quantized chunk lacks its min/max table");
            if (chunk.codes.size() != components)
                fail(ErrorCode::MalformedChunk, "chunk payload does not match its splat count");
            for (const auto& range : chunk.ranges) {
                w.put<float>(range.min);
                w.put<float>(range.max);
            }
            if (chunk.encoding == Encoding::Quant16) {
                w.put_array<std::uint16_t>(chunk.codes);
            } else {
                for (auto q : chunk.codes) {
                    if (q > 0xff)
                        fail(ErrorCode::MalformedChunk, "8-bit chunk holds a code above 255");
                    w.put<std::uint8_t>(static_cast<std::uint8_t>(q));
                }
            }
            break;
    }
    return out;
}

Chunk decode_chunk(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, ErrorCode::MalformedChunk);
    if (r.raw(4) != kChunkMagic)
        fail(ErrorCode::MalformedChunk, "bad chunk magic");
    if (r.get<std::uint16_t>() != kChunkVersion)
        fail(ErrorCode::UnsupportedFormat, "unsupported chunk version");
    const auto tag = r.get<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(Encoding::Quant16))
        fail(ErrorCode::MalformedChunk, "unknown chunk encoding " + std::to_string(tag));

    Chunk chunk;
    chunk.encoding = static_cast<Encoding>(tag);
    chunk.count = r.get<std::uint32_t>();
    const std::size_t components = static_cast<std::size_t>(chunk.count) * kComponentsPerSplat;
    if (chunk.encoding == Encoding::Float32) {
        if (r.remaining() != components * sizeof(float))
            fail(ErrorCode::MalformedChunk, "chunk payload size does not match its count");
        chunk.values.resize(components);
        r.get_array<float>(chunk.values);
        return chunk;
    }
    chunk.ranges.resize(kComponentsPerSplat);
    for (auto& range : chunk.ranges) {
        range.min = r.get<float>();
        range.max = r.get<float>();
    }
    const std::size_t width = chunk.encoding == Encoding::Quant16 ? 2 : 1;
    if (r.remaining() != components * width)
        fail(ErrorCode::MalformedChunk, "chunk payload size does not match its count");
    chunk.codes.resize(components);
    if (width == 2) {
        r.get_array<std::uint16_t>(chunk.codes);
    } else {
        for (auto& q : chunk.codes)
            q = r.get<std::uint8_t>();
    }
    return chunk;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto step = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
        crc = crc32(crc, bytes.data() + done, step);
        done += step;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string manifest_to_json(const ChunkManifest& manifest) {
    nlohmann::json j;
    j["format"] = "splatstream-manifest";
    j["version"] = 1;
    j["scene_id"] = manifest.scene_id;
    j["total_count"] = manifest.total_count;
    j["strategy"] = std::string(to_string(manifest.strategy));
    j["encoding"] = std::string(to_string(manifest.encoding));
    j["sh_degree"] = manifest.sh_degree;
    j["morton"] = manifest.morton;
    j["chunks"] = nlohmann::json::array();
    for (const auto& c : manifest.chunks) {
        j["chunks"].push_back({{"index", c.index},
                               {"count", c.count},
                               {"offset", c.offset},
                               {"byte_size", c.byte_size},
                               {"encoding", std::string(to_string(c.encoding))},
                               {"crc32", c.crc32},
                               {"file", c.file}});
    }
    return j.dump(2);
}

ChunkManifest manifest_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ChunkManifest m;
        m.scene_id = j.at("scene_id").get<std::string>();
        m.total_count = j.at("total_count").get<std::uint64_t>();
        m.strategy = parse_strategy(j.at("strategy").get<std::string>());
        m.encoding = parse_encoding(j.at("encoding").get<std::string>());
        m.sh_degree = j.value("sh_degree", 3);
        m.morton = j.value("morton", false);
        std::uint64_t sum = 0;
        for (const auto& item : j.at("chunks")) {
            ChunkDescriptor c;
            c.index = item.at("index").get<std::uint32_t>();
            c.count = item.at("count").get<std::uint32_t>();
            c.offset = item.value("offset", sum);
            c.byte_size = item.at("byte_size").get<std::uint64_t>();
            c.encoding = parse_encoding(item.at("encoding").get<std::string>());
            c.crc32 = item.at("crc32").get<std::uint32_t>();
            c.file = item.value("file", std::string());
            if (c.index != m.chunks.size())
                fail(ErrorCode::ParseError, "manifest chunk indices must be consecutive from 0");
            sum += c.count;
            m.chunks.push_back(std::move(c));
        }
        if (sum != m.total_count)
            fail(ErrorCode::ParseError, "manifest chunk counts do not sum to total_count");
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("manifest JSON: ") + e.what());
    }
}

ChunkSizes default_chunk_schedule() {
    return ChunkSizes::shares({0.2, 0.3, 0.5, 1.0, 3.0, 5.0, 10.0, 80.0});
}

std::vector<std::uint32_t> resolve_chunk_sizes(const ChunkSizes& sizes, std::size_t total) {
    if (sizes.values.empty())
        fail(ErrorCode::SizesMismatch, "no chunk sizes given");
    for (double v : sizes.values) {
        if (!std::isfinite(v) || v < 0.0)
            fail(ErrorCode::InvalidArgument, "chunk sizes must be finite and non-negative");
    }

    std::vector<std::uint32_t> counts;
    if (!sizes.relative) {
        std::uint64_t sum = 0;
        for (double v : sizes.values) {
            if (v != std::floor(v))
                fail(ErrorCode::InvalidArgument, "chunk counts must be integers");
            if (v == 0.0)
                fail(ErrorCode::EmptyChunk, "chunk counts must be positive");
            counts.push_back(static_cast<std::uint32_t>(v));
            sum += counts.back();
        }
        if (sum != total)
            fail(ErrorCode::SizesMismatch, "chunk counts sum to " + std::to_string(sum) + ", scene has " +
                                               std::to_string(total));
        return counts;
    }

    const double sum = std::accumulate(sizes.values.begin(), sizes.values.end(), 0.0);
    if (!(sum > 0.0))
        fail(ErrorCode::SizesMismatch, "chunk shares sum to zero");
    double cumulative = 0.0;
    std::uint64_t previous = 0;
    for (std::size_t i = 0; i < sizes.values.size(); ++i) {
        cumulative += sizes.values[i];
        const std::uint64_t boundary =
            i + 1 == sizes.values.size()
                ? total
                : std::min<std::uint64_t>(total, static_cast<std::uint64_t>(std::llround(cumulative / sum * total)));
        if (boundary > previous)
            counts.push_back(static_cast<std::uint32_t>(boundary - previous));
        previous = std::max(previous, boundary);
    }
    return counts;
}

ChunkedScene make_chunks(const Scene& scene, const Ordering& ordering, const ChunkSizes& sizes,
                         const ChunkOptions& options) {
    check_ordering(ordering, scene.count());
    const auto counts = resolve_chunk_sizes(sizes, scene.count());

    std::array<float, 3> lo{0.0f, 0.0f, 0.0f};
    std::array<float, 3> hi{0.0f, 0.0f, 0.0f};
    if (options.morton && !scene.empty()) {
        lo = hi = scene.splats.front().position;
        for (const auto& g : scene.splats)
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], g.position[a]);
                hi[a] = std::max(hi[a], g.position[a]);
            }
    }
    auto morton_code = [&](const Gaussian& g) {
        std::uint32_t code = 0;
        for (int a = 0; a < 3; ++a) {
            const float extent = hi[a] - lo[a];
            const float t = extent > 0.0f ? (g.position[a] - lo[a]) / extent : 0.0f;
            const auto cell = static_cast<std::uint32_t>(std::clamp(t * 1023.0f, 0.0f, 1023.0f));
            code |= morton_spread(cell) << a;
        }
        return code;
    };

    ChunkedScene out;
    auto& m = out.manifest;
    m.scene_id = options.scene_id;
    m.total_count = scene.count();
    m.strategy = ordering.strategy;
    m.encoding = options.encoding;
    m.sh_degree = scene.sh_degree;
    m.morton = options.morton;

    std::size_t position = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        std::vector<std::uint32_t> members(ordering.permutation.begin() + static_cast<std::ptrdiff_t>(position),
                                           ordering.permutation.begin() + static_cast<std::ptrdiff_t>(position + counts[j]));
        if (options.morton) {
            std::stable_sort(members.begin(), members.end(), [&](std::uint32_t a, std::uint32_t b) {
                return morton_code(scene.splats[a]) < morton_code(scene.splats[b]);
            });
        }
        std::vector<Gaussian> splats;
        splats.reserve(members.size());
        for (auto index : members)
            splats.push_back(scene.splats[index]);

        Chunk chunk = chunk_from_splats(splats);
        if (options.encoding != Encoding::Float32)
            chunk = quantize_chunk(chunk, bits_of(options.encoding));
        Bytes bytes = encode_chunk(chunk);

        ChunkDescriptor d;
        d.index = static_cast<std::uint32_t>(j);
        d.count = counts[j];
        d.offset = position;
        d.byte_size = bytes.size();
        d.encoding = options.encoding;
        d.crc32 = crc32_of(bytes);
        char name[32];
        std::snprintf(name, sizeof(name), "chunk_%05zu.bin", j);
        d.file = name;
        m.chunks.push_back(std::move(d));
        out.chunks.push_back(std::move(bytes));
        position += counts[j];
    }
    return out;
}

Scene decode_stream(const ChunkManifest& manifest, std::span<const ReceivedChunk> chunks) {
    std::vector<const ReceivedChunk*> sorted;
    for (const auto& c : chunks)
        sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->index < b->index; });

    Scene scene;
    scene.sh_degree = manifest.sh_degree;
    scene.has_normals = false;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        if (sorted[j]->index != j || j >= manifest.chunks.size())
            fail(ErrorCode::GapInPrefix, "chunks do not form a prefix: expected chunk " + std::to_string(j) +
                                             ", got " + std::to_string(sorted[j]->index));
        const auto& entry = manifest.chunks[j];
        if (crc32_of(sorted[j]->bytes) != entry.crc32)
            fail(ErrorCode::ChecksumMismatch, "chunk " + std::to_string(j) + " fails its checksum");
        const Chunk chunk = decode_chunk(sorted[j]->bytes);
        if (chunk.count != entry.count)
            fail(ErrorCode::MalformedChunk, "chunk " + std::to_string(j) + " splat count disagrees with manifest");
        auto splats = chunk_splats(chunk);
        scene.splats.insert(scene.splats.end(), splats.begin(), splats.end());
    }
    return scene;
}

Scene decode_stream(const ChunkManifest& manifest, std::span<const Bytes> chunks) {
    std::vector<ReceivedChunk> received;
    received.reserve(chunks.size());
    for (std::size_t j = 0; j < chunks.size(); ++j)
        received.push_back({static_cast<std::uint32_t>(j), chunks[j]});
    return decode_stream(manifest, std::span<const ReceivedChunk>(received));
}

void save_chunks(const std::filesystem::path& directory, const ChunkedScene& chunked) {
    std::filesystem::create_directories(directory);
    for (std::size_t j = 0; j < chunked.chunks.size(); ++j)
        write_bytes(directory / chunked.manifest.chunks[j].file, chunked.chunks[j]);
    write_text(directory / "manifest.json", manifest_to_json(chunked.manifest));
}

ChunkManifest load_manifest(const std::filesystem::path& directory) {
    return manifest_from_json(read_text(directory / "manifest.json"));
}

Scene load_stream_prefix(const std::filesystem::path& directory, std::size_t prefix) {
    const ChunkManifest manifest = load_manifest(directory);
    if (prefix > manifest.chunks.size())
        fail(ErrorCode::InvalidArgument, "prefix exceeds the number of chunks");
    std::vector<Bytes> chunks;
    for (std::size_t j = 0; j < prefix; ++j)
        chunks.push_back(read_bytes(directory / manifest.chunks[j].file));
    return decode_stream(manifest, std::span<const Bytes>(chunks));
}

} // namespace splatstream
