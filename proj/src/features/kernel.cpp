#include <cmath>

#include "cerf/error.hpp"
#include "cerf/features.hpp"

namespace cerf {

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::gaussian: return "gaussian";
        case KernelFamily::cauchy: return "cauchy";
        case KernelFamily::product: return "product";
    }
    return "unknown";
}

KernelFamily parse_kernel_family(const std::string& name) {
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "cauchy") return KernelFamily::cauchy;
    if (name == "product") return KernelFamily::product;
    fail_argument("unknown kernel family '" + name + "' (expected gaussian, cauchy or product)");
}

void KernelSpec::validate() const {
    require(bandwidth > 0.0 && std::isfinite(bandwidth), "kernel bandwidth must be positive");
    if (family == KernelFamily::product) {
        require(first_factor != KernelFamily::product, "product kernel: first factor must be gaussian or cauchy");
        require(second_bandwidth > 0.0 && std::isfinite(second_bandwidth),
                "product kernel: second bandwidth must be positive");
    }
}

KernelSpec KernelSpec::base_density() const {
    KernelSpec base = *this;
    if (family == KernelFamily::product) base.family = first_factor;
    return base;
}

double kernel_exact(const KernelSpec& spec, const Vector& x, const Vector& y) {
    spec.validate();
    require(x.size() == y.size(), "kernel_exact: dimension mismatch");
    const double inv_k2 = 1.0 / (spec.bandwidth * spec.bandwidth);
    switch (spec.family) {
        case KernelFamily::gaussian:
            return std::exp(-0.5 * (x - y).squaredNorm() * inv_k2);
        case KernelFamily::cauchy: {
            double value = 1.0;
            for (Eigen::Index d = 0; d < x.size(); ++d) {
                const double delta = x[d] - y[d];
                value /= 1.0 + delta * delta * inv_k2;
            }
            return value;
        }
        case KernelFamily::product:
            break;
    }
    fail_argument("kernel_exact: the product kernel has no closed form; use a Monte-Carlo reference");
}

}  // namespace cerf
