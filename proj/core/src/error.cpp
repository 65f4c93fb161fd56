#include "splatstream/error.hpp"

#include <iostream>

namespace splatstream {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NonFiniteParameter: return "NonFiniteParameter";
        case ErrorCode::InvalidCamera: return "InvalidCamera";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::MissingProperty: return "MissingProperty";
        case ErrorCode::TruncatedBody: return "TruncatedBody";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::InvalidPermutation: return "InvalidPermutation";
        case ErrorCode::InvalidK: return "InvalidK";
        case ErrorCode::InvalidMask: return "InvalidMask";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::SizesMismatch: return "SizesMismatch";
        case ErrorCode::EmptyChunk: return "EmptyChunk";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::MissingHeader: return "MissingHeader";
        case ErrorCode::MalformedChunk: return "MalformedChunk";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::GapInPrefix: return "GapInPrefix";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::TooSmall: return "TooSmall";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

void warn(std::string_view message) {
    std::clog << "warning: " << message << '\n';
}

} // namespace splatstream
