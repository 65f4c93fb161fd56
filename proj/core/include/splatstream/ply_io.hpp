#pragma once

#include "splatstream/file_io.hpp"
#include "splatstream/splat_model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace splatstream {

/// Property layout of a binary little-endian splat PLY.
struct PlyLayout {
    std::vector<std::string> properties; // file order, all float32
    std::size_t vertex_count = 0;
    std::size_t header_size = 0;         // bytes up to and including "end_header\n"
    std::vector<std::string> comments;

    std::size_t stride() const noexcept { return properties.size() * sizeof(float); }
};

/// Parses and checks a PLY header. Throws MalformedHeader, UnsupportedFormat
/// or MissingProperty.
PlyLayout parse_ply_header(std::span<const std::uint8_t> bytes);

/// Decodes a splat PLY without activating any value.
Scene load_ply(std::span<const std::uint8_t> bytes);

/// Encodes `scene` (optionally reordered and truncated to `limit` splats).
/// Properties are written in canonical order after the scene's comments, so a
/// canonical file round-trips byte for byte.
Bytes write_ply(const Scene& scene, std::optional<std::span<const std::uint32_t>> order = std::nullopt,
                std::optional<std::size_t> limit = std::nullopt);

Scene load_ply_file(const std::filesystem::path& path);
void save_ply_file(const std::filesystem::path& path, const Scene& scene);

/// Canonical property names written for a scene of the given SH degree.
std::vector<std::string> canonical_properties(int sh_degree, bool with_normals);

} // namespace splatstream
