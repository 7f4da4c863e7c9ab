#pragma once

#include <cstdint>
#include <string_view>

namespace egghand::nn {

/// splitmix64 finalizer; also used as the stable 64-bit mixing hash.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Portable splitmix64 stream. Uniforms take the top 53 bits of one output;
/// each Gaussian consumes two consecutive outputs (Box-Muller, cosine branch).
class Prng {
public:
    explicit Prng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    double gaussian();
    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

/// Seed derivation for sub-streams, e.g. per-epoch shuffles: mix64(seed ^ mix64(salt)).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ mix64(salt));
}

}  // namespace egghand::nn
