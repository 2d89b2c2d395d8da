// rng.hpp -- counter-based random streams.
//
// A stream is keyed by (seed, stream id). Draw n of a stream is
//     mix64(key + (n + 1) * kGolden),   key = mix64(seed + (stream + 1) * kGolden)
// where mix64 is the SplitMix64 finalizer. Any draw can be recomputed from
// (seed, stream, n) alone, so logs can be checked draw by draw.
//
// Stream ids used by the harness:
//   0  rule choice when the true rule is "random"
//   1  the teacher's card sampling sequence
//   2  bootstrap resampling

#pragma once

#include <cstddef>
#include <cstdint>

#include "tom2/beliefs.hpp"

namespace tom2 {

enum class RngStream : std::uint64_t { Rule = 0, TeacherCards = 1, Bootstrap = 2 };

class CounterRng {
public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static constexpr std::uint64_t mix64(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    CounterRng(std::uint64_t seed, RngStream stream)
        : key_(mix64(seed + (static_cast<std::uint64_t>(stream) + 1) * kGolden))
    {
    }

    std::uint64_t next() { return mix64(key_ + (++counter_) * kGolden); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    /// Inverse-CDF draw. Never returns a zero-probability index.
    std::size_t sample(const Distribution& d)
    {
        const double u = uniform();
        double cumulative = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i] == 0.0) continue;
            last_positive = i;
            cumulative += d[i];
            if (u < cumulative) return i;
        }
        return last_positive;
    }

    std::uint64_t draws() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace tom2
