#include <algorithm>
#include <cmath>

#include "cerf/error.hpp"
#include "cerf/numerics.hpp"

namespace cerf::numerics {

namespace {

double excess_mass(const Vector& magnitude, double lambda, double radius) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < magnitude.size(); ++i)
        sum += std::max(magnitude[i] - lambda, 0.0);
    return sum - radius;
}

}  // namespace

Vector project_l1_ball(const Vector& v, double radius) {
    require(radius > 0.0, "project_l1_ball: radius must be positive");
    const Vector magnitude = v.cwiseAbs();
    if (magnitude.sum() <= radius) return v;

    double lo = 0.0;
    double hi = magnitude.maxCoeff();
    const double tol = 1e-12 * std::max(1.0, hi);
    for (int iter = 0; iter < 200 && hi - lo > tol; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (excess_mass(magnitude, mid, radius) > 0.0)
            lo = mid;
        else
            hi = mid;
    }

    // f is linear between breakpoints; solve it exactly on the piece at lo.
    double active_sum = 0.0;
    int active = 0;
    for (Eigen::Index i = 0; i < magnitude.size(); ++i) {
        if (magnitude[i] > lo) {
            active_sum += magnitude[i];
            ++active;
        }
    }
    double lambda = 0.5 * (lo + hi);
    if (active > 0) lambda = std::clamp((active_sum - radius) / active, lo, hi);

    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double shrunk = std::max(magnitude[i] - lambda, 0.0);
        out[i] = v[i] < 0.0 ? -shrunk : shrunk;
    }
    return out;
}

}  // namespace cerf::numerics
