#pragma once

#include "splatstream/file_io.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace splatstream {

/// Interleaved RGB float image, origin top-left.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int w, int h, std::array<float, 3> fill = {0.0f, 0.0f, 0.0f});

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    float& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

/// 8-bit RGB PNG; channels are clamped to [0, 1] and scaled by 255.
Bytes encode_png(const Image& image);
void save_png(const std::filesystem::path& path, const Image& image);

/// Portable float map (little-endian "PF"), lossless for float images.
Bytes encode_pfm(const Image& image);
Image decode_pfm(std::span<const std::uint8_t> bytes);
void save_pfm(const std::filesystem::path& path, const Image& image);

} // namespace splatstream
