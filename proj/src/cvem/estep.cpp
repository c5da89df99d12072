#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cerf/cvem.hpp"
#include "cerf/error.hpp"
#include "cerf/parallel.hpp"

namespace cerf::cvem {

namespace {

// Keeps nu strictly inside (0, 1) so both log terms stay finite.
constexpr double kNuFloor = 1e-15;

double logistic(double d) {
    const double nu = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
    return std::clamp(nu, kNuFloor, 1.0 - kNuFloor);
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

void check_shapes(const Matrix& phi, const Matrix& psi, const Matrix& W, const VariationalState& state) {
    if (phi.rows() != psi.rows() || phi.cols() != psi.cols())
        fail_argument("cvem: teacher and learner feature matrices must have the same shape, got " +
                      std::to_string(phi.rows()) + "x" + std::to_string(phi.cols()) + " and " +
                      std::to_string(psi.rows()) + "x" + std::to_string(psi.cols()));
    if (W.rows() != psi.cols() || W.cols() != psi.cols())
        fail_argument("cvem: W must be " + std::to_string(psi.cols()) + "x" + std::to_string(psi.cols()));
    if (state.nu.rows() != psi.rows() || state.nu.cols() != psi.cols() || state.tau.rows() != psi.cols() ||
        state.tau.cols() != 2)
        fail_argument("cvem: variational state does not match the feature matrices");
}

}  // namespace

void TrainConfig::validate() const {
    require(std::isfinite(c) && c >= 0.0, "train config: c must be positive (or 0 for the default)");
    require(std::isfinite(sigma2) && sigma2 > 0.0, "train config: sigma2 must be positive");
    require(std::isfinite(gamma) && gamma >= 0.0, "train config: gamma must be positive (or 0 for the default)");
    require(target_density > 0.0 && target_density <= 1.0, "train config: target_density must lie in (0, 1]");
    require(max_stages >= 1, "train config: max_stages must be at least 1");
    require(e_sweeps >= 1, "train config: e_sweeps must be at least 1");
    require(post_stages >= 0, "train config: post_stages must be nonnegative");
    require(std::isfinite(admm.mu) && admm.mu > 0.0, "train config: admm mu must be positive");
    require(std::isfinite(admm.alpha0) && admm.alpha0 >= 0.0, "train config: admm alpha0 must be nonnegative");
    require(admm.max_iters >= 1, "train config: admm max_iters must be at least 1");
    require(admm.primal_tol > 0.0, "train config: admm primal_tol must be positive");
}

Eigen::Index selected_count(double target_density, Eigen::Index features) {
    require(target_density > 0.0 && target_density <= 1.0, "selected_count: density must lie in (0, 1]");
    const auto count = static_cast<Eigen::Index>(std::ceil(target_density * static_cast<double>(features) - 1e-9));
    return std::clamp<Eigen::Index>(count, 1, features);
}

double TrainConfig::scale_for(Eigen::Index features) const {
    if (c > 0.0) return c;
    return std::sqrt(static_cast<double>(features) / static_cast<double>(selected_count(target_density, features)));
}

double TrainConfig::gamma_for(Eigen::Index features) const {
    if (gamma > 0.0) return gamma;
    if (target_density >= 1.0) return static_cast<double>(features);
    return bbp_gamma_for_density(target_density, features);
}

void update_tau(VariationalState& state) {
    const Eigen::Index features = state.nu.cols();
    const double prior = state.gamma / static_cast<double>(features);
    for (Eigen::Index k = 0; k < features; ++k) {
        double on = 0.0, off = 0.0;
        for (Eigen::Index n = 0; n < state.nu.rows(); ++n) {
            on += state.nu(n, k);
            off += 1.0 - state.nu(n, k);
        }
        state.tau(k, 0) = on + prior;
        state.tau(k, 1) = off + 1.0;
    }
}

std::pair<double, double> expected_log_pi(double t1, double t2) {
    if (!(t1 > 0.0) || !(t2 > 0.0))
        fail_argument("expected_log_pi: Beta parameters must be positive, got (" + std::to_string(t1) + ", " +
                      std::to_string(t2) + ")");
    const double total = numerics::digamma(t1 + t2);
    return {numerics::digamma(t1) - total, numerics::digamma(t2) - total};
}

VariationalState initial_state(Eigen::Index samples, Eigen::Index features, const TrainConfig& cfg) {
    require(samples >= 1 && features >= 1, "initial_state: dimensions must be positive");
    VariationalState state;
    state.gamma = cfg.gamma_for(features);
    state.nu = Matrix::Constant(samples, features, std::min(cfg.target_density, 1.0 - kNuFloor));
    state.tau.resize(features, 2);
    update_tau(state);
    return state;
}

void estep_sweep(const Matrix& phi, const Matrix& psi, const Matrix& W, VariationalState& state,
                 const TrainConfig& cfg) {
    check_shapes(phi, psi, W, state);
    const Eigen::Index samples = psi.rows();
    const Eigen::Index features = psi.cols();
    const double c = cfg.scale_for(features);
    const double inv_two_sigma2 = 0.5 / cfg.sigma2;

    Vector log_ratio(features);
    for (Eigen::Index k = 0; k < features; ++k) {
        const auto [on, off] = expected_log_pi(state.tau(k, 0), state.tau(k, 1));
        log_ratio[k] = on - off;
    }
    const Vector col_norm2 = W.colwise().squaredNorm().transpose();

    // Residuals r_n = phi_n - c W (nu_n (.) psi_n), one column per sample.
    const Matrix weighted = state.nu.cwiseProduct(psi);
    Matrix residual = phi.transpose() - c * W * weighted.transpose();

    parallel_for(static_cast<std::size_t>(samples), [&](std::size_t begin, std::size_t end) {
        for (auto n = static_cast<Eigen::Index>(begin); n < static_cast<Eigen::Index>(end); ++n) {
            auto r = residual.col(n);
            for (Eigen::Index k = 0; k < features; ++k) {
                const double p = psi(n, k);
                const double old = state.nu(n, k);
                // W_k^T xi with xi = r + c p old W_k.
                const double proj = W.col(k).dot(r) + c * p * old * col_norm2[k];
                const double delta = c * c * p * p * col_norm2[k] - 2.0 * c * p * proj;
                const double updated = logistic(log_ratio[k] - delta * inv_two_sigma2);
                state.nu(n, k) = updated;
                if (updated != old) r.noalias() -= (c * p * (updated - old)) * W.col(k);
            }
        }
    });
    update_tau(state);
}

double elbo(const Matrix& phi, const Matrix& psi, const VariationalState& state, const Matrix& W,
            const TrainConfig& cfg) {
    check_shapes(phi, psi, W, state);
    const Eigen::Index features = psi.cols();
    const double c = cfg.scale_for(features);
    const double prior = state.gamma / static_cast<double>(features);

    double bernoulli_entropy = 0.0;
    for (Eigen::Index k = 0; k < features; ++k)
        for (Eigen::Index n = 0; n < state.nu.rows(); ++n) {
            const double v = state.nu(n, k);
            bernoulli_entropy -= xlogx(v) + xlogx(1.0 - v);
        }

    double beta_terms = 0.0;
    for (Eigen::Index k = 0; k < features; ++k) {
        const double a = state.tau(k, 0), b = state.tau(k, 1);
        const auto [on, off] = expected_log_pi(a, b);
        const double entropy = log_beta(a, b) - (a - 1.0) * numerics::digamma(a) -
                               (b - 1.0) * numerics::digamma(b) + (a + b - 2.0) * numerics::digamma(a + b);
        const double log_prior = std::log(prior) + (prior - 1.0) * on;
        const double ones = state.nu.col(k).sum();
        const double zeros = static_cast<double>(state.nu.rows()) - ones;
        beta_terms += entropy + log_prior + ones * on + zeros * off;
    }

    const Matrix weighted = state.nu.cwiseProduct(psi);
    const double fit = (phi - c * weighted * W.transpose()).squaredNorm();
    const Vector col_norm2 = W.colwise().squaredNorm().transpose();
    const Matrix spread = state.nu.cwiseProduct((1.0 - state.nu.array()).matrix()).cwiseProduct(psi.cwiseAbs2());
    const double variance = c * c * (spread * col_norm2).sum();

    return bernoulli_entropy + beta_terms - (fit + variance) / (2.0 * cfg.sigma2);
}

Selector extract_selector(const VariationalState& state, double target_density) {
    const Eigen::Index features = state.tau.rows();
    const Eigen::Index keep = selected_count(target_density, features);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(features));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Vector mean(features), mass(features);
    for (Eigen::Index k = 0; k < features; ++k) {
        mean[k] = state.tau(k, 0) / (state.tau(k, 0) + state.tau(k, 1));
        mass[k] = state.nu.cols() == features && state.nu.rows() > 0 ? state.nu.col(k).sum() : 0.0;
    }
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (mean[a] != mean[b]) return mean[a] > mean[b];
        if (mass[a] != mass[b]) return mass[a] > mass[b];
        return a < b;
    });
    Selector z(static_cast<std::size_t>(features), 0);
    for (Eigen::Index i = 0; i < keep; ++i) z[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    return z;
}

double relative_residual(const Matrix& phi, const Matrix& psi, const Matrix& W, const Matrix& weights, double c) {
    require(phi.rows() == psi.rows() && W.cols() == psi.cols() && W.rows() == phi.cols(),
            "relative_residual: shape mismatch");
    Matrix weighted;
    if (weights.rows() == 1 && weights.cols() == psi.cols())
        weighted = psi.array().rowwise() * weights.row(0).array();
    else if (weights.rows() == psi.rows() && weights.cols() == psi.cols())
        weighted = psi.cwiseProduct(weights);
    else
        fail_argument("relative_residual: weights must be 1 x K or N x K");
    const double norm = phi.norm();
    if (norm == 0.0) fail_data("relative_residual: teacher features are identically zero");
    return (phi - c * weighted * W.transpose()).norm() / norm;
}

}  // namespace cerf::cvem
