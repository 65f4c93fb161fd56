#include "splatstream/file_io.hpp"

#include "splatstream/error.hpp"

#include <fstream>
#include <iterator>

namespace splatstream {

Bytes read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::IoError, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::IoError, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        fail(ErrorCode::IoError, "short write to " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool is_permutation_of(std::span<const std::uint32_t> order, std::size_t n) {
    if (order.size() != n)
        return false;
    std::vector<bool> seen(n, false);
    for (std::uint32_t index : order) {
        if (index >= n || seen[index])
            return false;
        seen[index] = true;
    }
    return true;
}

} // namespace splatstream
