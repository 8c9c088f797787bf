#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shlight {

// Malformed input bytes (HDR / PFM / PNG / manifest framing). Carries the
// offset of the first byte that could not be consumed, when known.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    explicit parse_error(const std::string& what)
        : std::runtime_error(what), byte_offset_(0) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

// Operation applied to an object in the wrong state, e.g. convolving a
// coefficient set that is already in the irradiance domain.
class invalid_state : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Numeric breakdown at runtime (NaN loss, non-finite gradient).
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace shlight
