#include "cerf/rng.hpp"

#include <cmath>
#include <numbers>

#include "cerf/error.hpp"

namespace cerf {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)));
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    require(n > 0, "Rng::below: empty range");
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open_zero();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double Rng::laplace(double scale) {
    const double u = uniform() - 0.5;
    const double tail = 1.0 - 2.0 * std::abs(u);
    return -scale * std::copysign(1.0, u) * std::log(tail > 0.0 ? tail : 0x1.0p-53);
}

double Rng::beta_a1(double a) {
    require(a > 0.0, "Rng::beta_a1: shape must be positive");
    return std::pow(uniform_open_zero(), 1.0 / a);
}

double Rng::chi(int dof) {
    double sum = 0.0;
    for (int i = 0; i < dof; ++i) {
        const double g = normal();
        sum += g * g;
    }
    return std::sqrt(sum);
}

}  // namespace cerf
