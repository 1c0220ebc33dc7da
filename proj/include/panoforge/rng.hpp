#pragma once

#include <cstdint>

namespace panoforge {

// xorshift64* with splitmix-style seeding so seed 0 is usable. All
// randomness in the library flows through this generator so runs are
// reproducible from a single seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        state_ = seed + 0x9E3779B97F4A7C15ULL;
        state_ ^= state_ >> 30;
        state_ *= 0xBF58476D1CE4E5B9ULL;
        state_ ^= state_ >> 27;
        state_ *= 0x94D049BB133111EBULL;
        state_ ^= state_ >> 31;
        if (state_ == 0) state_ = 0x106689D45497FDB5ULL;
    }

    std::uint64_t next() {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1DULL;
    }

    // Uniform in [0, n).
    std::uint32_t next_below(std::uint32_t n) { return static_cast<std::uint32_t>(next() % n); }

    // Uniform in [0, 1).
    double uniform() { return (next() >> 11) * (1.0 / 9007199254740992.0); }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

}  // namespace panoforge
