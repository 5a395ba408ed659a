#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace smdm {

using TokenId = std::int32_t;
using Position = std::int32_t;

// Seeded random stream. Callers own their streams; nothing in the library
// keeps a global generator.
using Rng = std::mt19937_64;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) {
        throw InvalidArgument(what);
    }
}

// Uniform double in [0, 1) built from the top 53 bits, so the value for a
// given seed does not depend on the standard library's distribution code.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline std::size_t uniform_below(Rng& rng, std::size_t n) {
    if (n <= 1) {
        return 0;
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return static_cast<std::size_t>(x % n);
}

// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
    require(lo <= hi, "uniform_int: empty range");
    return lo + static_cast<int>(uniform_below(rng, static_cast<std::size_t>(hi - lo) + 1));
}

template <typename It>
void shuffle(It first, It last, Rng& rng) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(first[i - 1], first[uniform_below(rng, i)]);
    }
}

// FNV-1a over raw bytes; used for parameter and cache checksums.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace smdm
