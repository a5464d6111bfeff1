#pragma once

#include <cstdint>
#include <initializer_list>

namespace wlpr {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a stream seed from a base seed and a list of stream ids, e.g.
/// `derive_seed(seed, {scan_id, point_index})`. The result depends only on
/// the values passed, never on call order, so parallel work stays
/// reproducible.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) noexcept;

/// xoshiro256** generator with portable distribution helpers. The standard
/// library distributions are implementation-defined, so every sampler the
/// project needs is written out here in terms of raw 64-bit draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept;
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Standard normal via Box-Muller (no cached second value).
    double normal() noexcept;
    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
    /// Exponential with unit rate.
    double exponential() noexcept;

private:
    std::uint64_t s_[4];
};

}  // namespace wlpr
