#pragma once
// Seed handling. Every random stream in the project is derived from one
// 64-bit run seed and a stream name:
//
//   stream_seed = splitmix64(seed ^ fnv1a64(name))
//
// and drives a std::mt19937_64. Distinct names give independent streams, so
// adding a consumer never perturbs the draws of an existing one.

#include <cstdint>
#include <random>
#include <string_view>

namespace plf {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
    return splitmix64(seed ^ fnv1a64(stream));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                           std::uint64_t index) noexcept {
    return splitmix64(derive_seed(seed, stream) + index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view stream) { return Rng(derive_seed(seed, stream)); }

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
    return Rng(derive_seed(seed, stream, index));
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementation.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Integer in [lo, hi].
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng() % span);
}

}  // namespace plf
