#include <cmath>
#include <string>

#include "cerf/error.hpp"
#include "cerf/numerics.hpp"

namespace cerf::numerics {

double digamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x))
        fail_argument("digamma: argument must be positive and finite, got " + std::to_string(x));

    double shift = 0.0;
    while (x < 10.0) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // ln x - 1/(2x) - sum_k B_2k / (2k x^2k), truncated after B_14.
    const double series =
        inv2 * (1.0 / 12.0 -
        inv2 * (1.0 / 120.0 -
        inv2 * (1.0 / 252.0 -
        inv2 * (1.0 / 240.0 -
        inv2 * (1.0 / 132.0 -
        inv2 * (691.0 / 32760.0 -
        inv2 * (1.0 / 12.0)))))));
    return shift + std::log(x) - 0.5 * inv - series;
}

}  // namespace cerf::numerics
