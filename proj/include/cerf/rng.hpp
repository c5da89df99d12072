#pragma once

#include <cstdint>
#include <random>

namespace cerf {

/// Seeded random stream with platform-independent variates.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard; the distributions are implemented here rather than taken from
/// <random> so that draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream derived from (seed, stream) by SplitMix64 mixing.
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on (0, 1].
    double uniform_open_zero() { return 1.0 - uniform(); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    double laplace(double scale);
    bool bernoulli(double p) { return uniform() < p; }
    /// Beta(a, 1) by inverse CDF u^(1/a).
    double beta_a1(double a);
    /// Euclidean norm of a `dof`-dimensional standard normal vector.
    double chi(int dof);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cerf
