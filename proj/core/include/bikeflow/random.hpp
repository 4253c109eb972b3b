#pragma once

#include <cstdint>
#include <span>

namespace bikeflow {

/// Seedable random stream: xoshiro256** whose state is derived from
/// (seed, stream_id) by SplitMix64. Child streams are keyed deterministically,
/// so independent consumers (init, dropout, sampling) never share draws.
///
/// All distributions are implemented here rather than through <random>, whose
/// distribution algorithms differ between standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Independent stream keyed by this stream's identity and `id`. Does not
    /// advance this stream.
    RngStream child(std::uint64_t id) const;

    std::uint64_t next_u64() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on (0, 1).
    double uniform_open() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double normal() noexcept;
    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }
    double exponential(double rate) noexcept;
    /// Index drawn with probability proportional to `weights`.
    std::size_t categorical(std::span<const double> weights) noexcept;
    std::uint64_t poisson(double lambda) noexcept;
    bool bernoulli(double p) noexcept { return uniform() < p; }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t key);
    void init_state(std::uint64_t key) noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace bikeflow
