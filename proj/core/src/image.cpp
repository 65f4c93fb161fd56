#include "splatstream/image.hpp"

#include "splatstream/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string>

namespace splatstream {

Image::Image(int w, int h, std::array<float, 3> fill) : width(w), height(h) {
    pixels.resize(pixel_count() * 3);
    for (std::size_t i = 0; i < pixel_count(); ++i)
        std::copy(fill.begin(), fill.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * 3));
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

} // namespace

Bytes encode_png(const Image& image) {
    if (image.width <= 0 || image.height <= 0)
        fail(ErrorCode::InvalidArgument, "cannot encode an empty image");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        fail(ErrorCode::IoError, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorCode::IoError, "png_create_info_struct failed");
    }

    Bytes out;
    std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::IoError, "libpng error while encoding");
    }
    png_set_write_fn(png, &out, png_append, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(x, y, c), 0.0f, 1.0f);
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void save_png(const std::filesystem::path& path, const Image& image) {
    write_bytes(path, encode_png(image));
}

Bytes encode_pfm(const Image& image) {
    const std::string header =
        "PF\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n-1.0\n";
    Bytes out(header.begin(), header.end());
    const std::size_t row_bytes = static_cast<std::size_t>(image.width) * 3 * sizeof(float);
    out.resize(header.size() + row_bytes * static_cast<std::size_t>(image.height));
    // PFM stores rows bottom-to-top.
    for (int y = 0; y < image.height; ++y) {
        const float* src = image.pixels.data() + static_cast<std::size_t>(image.height - 1 - y) * image.width * 3;
        std::memcpy(out.data() + header.size() + row_bytes * static_cast<std::size_t>(y), src, row_bytes);
    }
    return out;
}

Image decode_pfm(std::span<const std::uint8_t> bytes) {
    std::string text(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(bytes.size(), 128));
    std::istringstream in(text);
    std::string magic;
    int width = 0;
    int height = 0;
    double scale = 0.0;
    in >> magic >> width >> height >> scale;
    if (!in || magic != "PF" || width <= 0 || height <= 0)
        fail(ErrorCode::ParseError, "not a color PFM image");
    if (scale > 0.0)
        fail(ErrorCode::UnsupportedFormat, "big-endian PFM is not supported");
    const auto offset = static_cast<std::size_t>(in.tellg()) + 1;
    Image image(width, height);
    const std::size_t row_bytes = static_cast<std::size_t>(width) * 3 * sizeof(float);
    if (bytes.size() < offset + row_bytes * static_cast<std::size_t>(height))
        fail(ErrorCode::TruncatedBody, "PFM payload is truncated");
    for (int y = 0; y < height; ++y) {
        float* dst = image.pixels.data() + static_cast<std::size_t>(height - 1 - y) * width * 3;
        std::memcpy(dst, bytes.data() + offset + row_bytes * static_cast<std::size_t>(y), row_bytes);
    }
    return image;
}

void save_pfm(const std::filesystem::path& path, const Image& image) {
    write_bytes(path, encode_pfm(image));
}

} // namespace splatstream
