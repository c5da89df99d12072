#include <cmath>
#include <limits>
#include <string>

#include "cerf/cvem.hpp"
#include "cerf/error.hpp"

namespace cerf::cvem {

AdmmState mstep_admm(const Matrix& phi, const Matrix& psi, const VariationalState& state, const Matrix& W_init,
                     double alpha, const TrainConfig& cfg, const AdmmState* warm) {
    const Eigen::Index features = psi.cols();
    if (phi.rows() != psi.rows() || phi.cols() != features)
        fail_argument("mstep_admm: teacher and learner feature matrices must have the same shape");
    if (state.nu.rows() != psi.rows() || state.nu.cols() != features)
        fail_argument("mstep_admm: variational state does not match the feature matrices");
    if (W_init.rows() != features || W_init.cols() != features)
        fail_argument("mstep_admm: W_init must be " + std::to_string(features) + "x" + std::to_string(features));
    require(alpha >= 0.0 && std::isfinite(alpha), "mstep_admm: alpha must be nonnegative");
    // A warm state also carries the balanced penalty.
    double mu = warm && warm->mu > 0.0 ? warm->mu : cfg.admm.mu;
    if (!(mu > 0.0)) fail_numerical("mstep_admm: the normal matrix is singular unless mu > 0");

    const double c = cfg.scale_for(features);
    const double root_k = std::sqrt(static_cast<double>(features));
    const Matrix weighted = state.nu.cwiseProduct(psi);
    // The data term is averaged over samples so that mu and alpha do not
    // need rescaling with N.
    const double weight = 1.0 / (cfg.sigma2 * static_cast<double>(psi.rows()));

    // V (c^2 w Psibar^T Psibar + mu I) = c w Phi^T Psibar + mu W + U,  w = 1 / (N sigma^2).
    // With G = Q diag(lambda) Q^T the solve is two products for any mu.
    const Eigen::SelfAdjointEigenSolver<Matrix> eig((c * c * weight) * (weighted.transpose() * weighted));
    if (eig.info() != Eigen::Success) fail_numerical("mstep_admm: eigensolver failed on the normal matrix");
    const Matrix& basis = eig.eigenvectors();
    const Vector curvature = eig.eigenvalues().cwiseMax(0.0);
    const Matrix cross = (c * weight) * (phi.transpose() * weighted);

    AdmmState out;
    out.alpha = alpha;
    out.W = W_init;
    out.U = warm && warm->U.rows() == features && warm->U.cols() == features ? warm->U
                                                                             : Matrix::Zero(features, features);
    numerics::SpectralProx prox;
    const double cap = cfg.admm.hull ? 1.0 : std::numeric_limits<double>::infinity();
    Matrix rotated(features, features);
    for (int it = 1; it <= cfg.admm.max_iters; ++it) {
        rotated.noalias() = (cross + mu * out.W + out.U) * basis;
        rotated = rotated * (curvature.array() + mu).inverse().matrix().asDiagonal();
        out.V.noalias() = rotated * basis.transpose();
        const double beta = alpha / mu;
        Matrix next = beta > 0.0 || cfg.admm.hull ? prox(out.V - out.U / mu, beta, cap) : Matrix(out.V - out.U / mu);
        out.U.noalias() += mu * (next - out.V);
        out.primal_residual = (next - out.V).norm() / root_k;
        out.change = (next - out.W).norm() / root_k;
        out.W = std::move(next);
        out.iterations = it;
        if (!out.W.allFinite()) fail_numerical("mstep_admm: iterate became non-finite");
        const double dual = mu * out.change;
        // Balancing can drive mu far below 1, so the scaled dual residual
        // alone would stop early; the iterate itself must also have settled.
        if (out.primal_residual <= cfg.admm.primal_tol && dual <= cfg.admm.primal_tol &&
            out.change <= cfg.admm.primal_tol) {
            out.converged = true;
            break;
        }
        // Residual balancing keeps the two residuals within a factor of 10.
        if (out.primal_residual > 10.0 * dual) mu *= 2.0;
        else if (dual > 10.0 * out.primal_residual) mu *= 0.5;
    }
    out.mu = mu;
    return out;
}

}  // namespace cerf::cvem
