#pragma once

#include "splatstream/file_io.hpp"
#include "splatstream/ordering.hpp"
#include "splatstream/splat_model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace splatstream {

enum class Encoding : std::uint8_t { Float32 = 0, Quant8 = 1, Quant16 = 2 };

std::string_view to_string(Encoding encoding) noexcept;
/// Accepts "f32"/"float32", "q8"/"quant8", "q16"/"quant16".
Encoding parse_encoding(std::string_view name);
int bits_of(Encoding encoding) noexcept;

/// Number of float components stored per splat and their attribute widths,
/// in wire order: position, log_scale, rotation, opacity_logit, sh_dc, sh_rest.
inline constexpr int kComponentsPerSplat = 59;
inline constexpr std::array<int, 6> kAttributeWidths = {3, 3, 4, 1, 3, kShRestCount};

struct ComponentRange {
    float min = 0.0f;
    float max = 0.0f;
};

/// One independently decodable group of splats.
struct Chunk {
    Encoding encoding = Encoding::Float32;
    std::uint32_t count = 0;
    std::vector<ComponentRange> ranges;  // kComponentsPerSplat entries when quantized
    std::vector<float> values;           // float32 payload, attribute-major
    std::vector<std::uint16_t> codes;    // quantized payload, attribute-major

    bool quantized() const noexcept { return encoding != Encoding::Float32; }
};

Chunk chunk_from_splats(std::span<const Gaussian> splats);
/// Splats of a chunk; quantized chunks are dequantized first.
std::vector<Gaussian> chunk_splats(const Chunk& chunk);

/// q = round((v - min) / (max - min) * (2^bits - 1)); a constant component
/// stores q = 0. Throws EmptyChunk or NonFiniteValue.
Chunk quantize_chunk(const Chunk& chunk, int bits);
/// v = min + q / (2^bits - 1) * (max - min). Throws MissingHeader.
Chunk dequantize_chunk(const Chunk& chunk);

/// Wire form: "PRGS", u16 version, u8 encoding, u32 count, then for
/// quantized chunks kComponentsPerSplat (f32 min, f32 max) pairs, then the
/// attribute-major payload (f32, u8 or u16). Little-endian throughout.
Bytes encode_chunk(const Chunk& chunk);
Chunk decode_chunk(std::span<const std::uint8_t> bytes);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

struct ChunkDescriptor {
    std::uint32_t index = 0;
    std::uint32_t count = 0;
    std::uint64_t offset = 0; // ordering position of the first splat
    std::uint64_t byte_size = 0;
    Encoding encoding = Encoding::Float32;
    std::uint32_t crc32 = 0;
    std::string file;
};

struct ChunkManifest {
    std::string scene_id;
    std::uint64_t total_count = 0;
    Strategy strategy = Strategy::Contribution;
    Encoding encoding = Encoding::Float32;
    int sh_degree = 3;
    bool morton = false;
    std::vector<ChunkDescriptor> chunks;
};

std::string manifest_to_json(const ChunkManifest& manifest);
ChunkManifest manifest_from_json(std::string_view text);

/// Chunk sizes either as absolute splat counts or as relative shares
/// (normalized; boundaries rounded, final chunk takes the remainder).
struct ChunkSizes {
    std::vector<double> values;
    bool relative = true;

    static ChunkSizes counts(std::vector<double> v) { return {std::move(v), false}; }
    static ChunkSizes shares(std::vector<double> v) { return {std::move(v), true}; }
};

/// Default schedule in percent: 0.2, 0.3, 0.5, 1, 3, 5, 10, 80.
ChunkSizes default_chunk_schedule();

/// Resolves `sizes` against `total` splats. Relative shares that round to an
/// empty chunk are dropped; explicit counts must be positive and sum to total.
std::vector<std::uint32_t> resolve_chunk_sizes(const ChunkSizes& sizes, std::size_t total);

struct ChunkOptions {
    Encoding encoding = Encoding::Float32;
    bool morton = false;
    std::string scene_id = "scene";
};

struct ChunkedScene {
    ChunkManifest manifest;
    std::vector<Bytes> chunks;
};

ChunkedScene make_chunks(const Scene& scene, const Ordering& ordering, const ChunkSizes& sizes,
                         const ChunkOptions& options = {});

struct ReceivedChunk {
    std::uint32_t index = 0;
    std::span<const std::uint8_t> bytes;
};

/// Decodes a prefix of the stream. Throws GapInPrefix unless the chunks are
/// exactly manifest entries 0..m-1, ChecksumMismatch on a CRC difference.
Scene decode_stream(const ChunkManifest& manifest, std::span<const ReceivedChunk> chunks);
Scene decode_stream(const ChunkManifest& manifest, std::span<const Bytes> chunks);

void save_chunks(const std::filesystem::path& directory, const ChunkedScene& chunked);
ChunkManifest load_manifest(const std::filesystem::path& directory);
/// Reads the first `prefix` chunks listed in the directory's manifest.
Scene load_stream_prefix(const std::filesystem::path& directory, std::size_t prefix);

} // namespace splatstream
