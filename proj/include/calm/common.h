#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace calm {

inline constexpr const char* kVersion = "calm 0.1.0";

// Exit-code contract: 0 success, 1 usage, 2 data/validation, 3 numerical failure.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Packed stream does not fit; callers may fall back to per-component encodes.
struct StreamOverflowError : DataError {
    using DataError::DataError;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Round-trip-exact decimal formatting (float needs 9 significant digits).
inline std::string fmt_float(float x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(x));
    return buf;
}
inline std::string fmt_double(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// FNV-1a, used for input digests in run manifests.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace calm
