#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace hdrisk::rng {

// splitmix64 step; used to mix seed material, never as the main generator.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Collapses (master seed, stream name, index) into one well-mixed 64-bit
// seed.  Distinct names or indices give unrelated streams, so parallel work
// can draw independently without sharing generator state.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                 std::uint64_t index = 0) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s ^= fnv1a(stream);
    std::uint64_t b = splitmix64(s);
    s ^= index * 0x9e3779b97f4a7c15ull + 0x165667b19e3779f9ull;
    std::uint64_t c = splitmix64(s);
    return a ^ (b << 1) ^ c;
}

// Deterministic random stream.  mt19937_64 output is pinned by the standard
// and the uniform/gaussian transforms below avoid std::*_distribution, whose
// sequences vary across standard libraries; results are therefore bit-stable
// across platforms for a given (seed, stream, index).
class Stream {
public:
    Stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0)
        : gen_(derive_seed(master, name, index)) {}

    explicit Stream(std::uint64_t raw_seed) : gen_(raw_seed) {}

    // Uniform on (0,1): 53-bit mantissa, offset by half an ulp so 0 is
    // impossible (log() below needs that).
    double uniform() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; caches the paired draw.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Uniform integer in [0, bound) by rejection; bound must be positive.
    std::uint64_t uniform_int(std::uint64_t bound) {
        const std::uint64_t limit = bound * (UINT64_MAX / bound);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace hdrisk::rng
