// Shared error types, hashing, and number formatting.
#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace credlab {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Conditioning on an event of probability zero.
struct NullEventError : Error {
    explicit NullEventError(const std::string& msg) : Error(msg) {}
};

// World too large to enumerate exhaustively.
struct CapExceededError : Error {
    explicit CapExceededError(const std::string& msg) : Error(msg) {}
};

// Malformed file or config.
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Probabilities below this are treated as hard zeros by strict operations;
// evaluation-time log flooring uses the same constant.
inline constexpr double kProbFloor = 1e-12;

// FNV-1a, 64-bit. Used for content hashes in manifests and report keys.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Shortest text form that round-trips an IEEE double exactly.
inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string join_ints(const std::vector<int>& v, char sep = ',') {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace credlab
