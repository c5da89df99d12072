#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cerf/features.hpp"
#include "cerf/numerics.hpp"

namespace cerf::cvem {

/// Mean-field posterior: q(z_nk) = Bernoulli(nu(n, k)), q(pi_k) = Beta(tau(k, 0), tau(k, 1)).
struct VariationalState {
    Matrix nu;   // N x K
    Matrix tau;  // K x 2
    double gamma = 1.0;
};

struct AdmmConfig {
    double mu = 1.0;
    double alpha0 = 1.0;
    int max_iters = 200;
    double primal_tol = 1e-5;
    // Also keep every W iterate in the spectral unit ball, the convex hull
    // of the orthogonal group. Off gives the pure penalized problem.
    bool hull = true;
};

struct TrainConfig {
    double c = 0.0;       // 0 selects sqrt(K / ceil(d_z K))
    double sigma2 = 1.0;
    double gamma = 0.0;   // 0 selects the mass whose prior mean E[pi] equals d_z
    double target_density = 0.4;
    int max_stages = 20;
    int e_sweeps = 3;
    AdmmConfig admm;
    int post_stages = 3;
    std::uint64_t seed = 0;

    void validate() const;
    double scale_for(Eigen::Index features) const;
    double gamma_for(Eigen::Index features) const;
};

/// Number of features kept by a selector at density d_z.
Eigen::Index selected_count(double target_density, Eigen::Index features);

struct AdmmState {
    Matrix W, V, U;
    double mu = 1.0;
    double alpha = 0.0;
    int iterations = 0;
    double primal_residual = 0.0;
    double change = 0.0;
    bool converged = false;
};

struct StageRecord {
    int stage = 0;
    double elbo = 0.0;
    double residual = 0.0;
    double spectral_norm_W = 0.0;
    double alpha = 0.0;
};

struct Diagnostics {
    std::vector<StageRecord> trace;  // EM stages, then post stages
    int em_stages = 0;
    int admm_iterations = 0;
    double residual = 0.0;  // |Phi - c (z (.) Psi) W^T|_F / |Phi|_F with the final W and z
};

struct TrainedCerf {
    Embedding learner;  // selector set to z
    Matrix W;
    Selector z;
    double c = 1.0;
    Diagnostics diagnostics;
};

/// (E[ln pi], E[ln(1 - pi)]) under Beta(t1, t2).
std::pair<double, double> expected_log_pi(double t1, double t2);

/// tau(k) = (sum_n nu(n, k) + gamma / K, sum_n (1 - nu(n, k)) + 1).
void update_tau(VariationalState& state);

/// nu = d_z everywhere, tau from the Beta update applied to that nu.
VariationalState initial_state(Eigen::Index samples, Eigen::Index features, const TrainConfig& cfg);

/// One coordinate-ascent sweep over every nu(n, k) in row-major order,
/// followed by the tau update. Rows are processed in parallel.
void estep_sweep(const Matrix& phi, const Matrix& psi, const Matrix& W, VariationalState& state,
                 const TrainConfig& cfg);

/// Evidence lower bound up to terms independent of (q, W).
double elbo(const Matrix& phi, const Matrix& psi, const VariationalState& state, const Matrix& W,
            const TrainConfig& cfg);

/// ADMM for min_W 1/(2 N sigma^2) |Phi^T - c W Psibar^T|_F^2 + alpha |W|_2
/// with Psibar = nu (.) Psi, plus |W|_2 <= 1 when cfg.admm.hull is set.
/// Stops once the primal residual |W - V| / sqrt(K), the dual residual
/// mu |W_t - W_{t-1}| / sqrt(K) and the step |W_t - W_{t-1}| / sqrt(K) are
/// all below primal_tol; mu is
/// rebalanced when one residual exceeds the other tenfold. A previous state
/// warm starts U and mu.
AdmmState mstep_admm(const Matrix& phi, const Matrix& psi, const VariationalState& state, const Matrix& W_init,
                     double alpha, const TrainConfig& cfg, const AdmmState* warm = nullptr);

/// Top ceil(d_z K) features by E[pi_k]; ties go to larger sum_n nu(n, k),
/// then to the lower index.
Selector extract_selector(const VariationalState& state, double target_density);

/// |Phi - c (weights (.) Psi) W^T|_F / |Phi|_F, weights broadcast per row
/// (an N x K matrix of nu, or a 1 x K selector row).
double relative_residual(const Matrix& phi, const Matrix& psi, const Matrix& W, const Matrix& weights, double c);

using TraceSink = std::function<void(const StageRecord&)>;

/// Full constrained variational EM. `learner` is the embedding Psi came
/// from; the returned copy carries the selector. Phi and Psi are first
/// rescaled by a common factor that gives Psi entries RMS 1/sqrt(2), so
/// sigma2, alpha and the reported ELBO refer to unit-amplitude cosines.
TrainedCerf train(const Matrix& phi, const Matrix& psi, const Embedding& learner, const TrainConfig& cfg,
                  const TraceSink& sink = {});

/// JSON object on one line: {"stage":..,"elbo":..,"residual":..,"spectral_norm_W":..,"alpha":..}
std::string to_json_line(const StageRecord& record);

}  // namespace cerf::cvem
