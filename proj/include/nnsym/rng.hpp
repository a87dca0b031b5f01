#pragma once

#include <cstdint>

namespace nnsym {

/// Seedable, splittable random stream (xoshiro256++ core, ziggurat normals).
///
/// The contract every estimator relies on: an identical (seed, stream_id)
/// pair reproduces an identical draw sequence, and distinct stream ids give
/// decorrelated sequences. One stream per worker, never shared.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64();
    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform();
    /// Uniform on (0, 1); safe as a log() argument.
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via the 128-layer ziggurat.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Deterministic decorrelated child stream (for per-worker substreams).
    RngStream spawn(std::uint64_t child_index) const;

private:
    std::uint64_t state_[4];
    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
};

}  // namespace nnsym
