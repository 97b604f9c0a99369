#pragma once

#include <cstdint>

namespace ifseg {

// Finalizer of the splitmix64 generator: a full-avalanche 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Derives an independent stream seed from a base seed and a stream index.
// Used for per-sample and per-subsystem seed derivation.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return mix64(base + (index + 1) * 0x9e3779b97f4a7c15ULL);
}

// splitmix64: a Weyl sequence pushed through mix64. Small, fast, and fully
// reproducible from a single 64-bit state word.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    // Unbiased integer in [0, n) by rejection: draws below 2^64 mod n are
    // discarded, so every residue class is equally likely.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t min = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= min) return r % n;
        }
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Normal(0, sigma^2) truncated at +/- 2 sigma, via Box-Muller with
    // rejection of the tail.
    double next_trunc_normal(double sigma);

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace ifseg
