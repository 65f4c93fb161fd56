#pragma once

#include "splatstream/error.hpp"
#include "splatstream/file_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

namespace splatstream {

static_assert(std::endian::native == std::endian::little, "wire formats assume a little-endian host");

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    void raw(std::string_view text) { out_.insert(out_.end(), text.begin(), text.end()); }

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto offset = out_.size();
        out_.resize(offset + sizeof(T));
        std::memcpy(out_.data() + offset, &value, sizeof(T));
    }

    template <typename T>
    void put_array(std::span<const T> values) {
        const auto offset = out_.size();
        out_.resize(offset + values.size_bytes());
        if (!values.empty())
            std::memcpy(out_.data() + offset, values.data(), values.size_bytes());
    }

private:
    Bytes& out_;
};

/// Bounds-checked little-endian reader; overruns raise `code`.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, ErrorCode code) : bytes_(bytes), code_(code) {}

    std::string_view raw(std::size_t n) {
        need(n);
        std::string_view view(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return view;
    }

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    template <typename T>
    void get_array(std::span<T> out) {
        need(out.size_bytes());
        if (!out.empty())
            std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > remaining())
            fail(code_, "unexpected end of data: need " + std::to_string(n) + " bytes, have " +
                            std::to_string(remaining()));
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    ErrorCode code_;
};

} // namespace splatstream
