#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace splatstream {

enum class ErrorCode {
    NonFiniteParameter,
    InvalidCamera,
    MalformedHeader,
    MissingProperty,
    TruncatedBody,
    UnsupportedFormat,
    InvalidPermutation,
    InvalidK,
    InvalidMask,
    InvalidArgument,
    SizesMismatch,
    EmptyChunk,
    NonFiniteValue,
    MissingHeader,
    MalformedChunk,
    ChecksumMismatch,
    GapInPrefix,
    DimensionMismatch,
    TooSmall,
    EmptyMask,
    IoError,
    ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

/// Emits a one-line warning on stderr; used for recoverable input quirks.
void warn(std::string_view message);

} // namespace splatstream
