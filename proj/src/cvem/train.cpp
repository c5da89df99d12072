#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"

#include "cerf/cvem.hpp"
#include "cerf/error.hpp"

namespace cerf::cvem {

namespace {

constexpr double kSpectralSlack = 1.01;
constexpr double kMinImprovement = 1e-4;
constexpr int kMaxDoublings = 60;
constexpr double kRankFloor = 1e-9;

Eigen::Index rank_above(const Matrix& a, double floor) {
    const Eigen::BDCSVD<Matrix> svd(a);
    return (svd.singularValues().array() > floor).count();
}

// Polar factor U V^T. When W is rank deficient (a teacher of lower rank than
// K leaves directions unconstrained) this is one of the nearest orthogonal
// matrices rather than the unique one.
Matrix polar_factor(const Matrix& a) {
    const Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace

std::string to_json_line(const StageRecord& record) {
    nlohmann::json j;
    j["stage"] = record.stage;
    j["elbo"] = record.elbo;
    j["residual"] = record.residual;
    j["spectral_norm_W"] = record.spectral_norm_W;
    j["alpha"] = record.alpha;
    return j.dump();
}

TrainedCerf train(const Matrix& phi_in, const Matrix& psi_in, const Embedding& learner, const TrainConfig& cfg,
                  const TraceSink& sink) {
    cfg.validate();
    if (phi_in.rows() != psi_in.rows() || phi_in.cols() != psi_in.cols())
        fail_argument("train: teacher is " + std::to_string(phi_in.rows()) + "x" + std::to_string(phi_in.cols()) +
                      " but learner is " + std::to_string(psi_in.rows()) + "x" + std::to_string(psi_in.cols()));
    if (psi_in.rows() < 1) fail_argument("train: need at least one sample");
    if (learner.active_features() != psi_in.cols())
        fail_argument("train: learner embedding has " + std::to_string(learner.active_features()) +
                      " active features but the learner matrix has " + std::to_string(psi_in.cols()) + " columns");
    if (!phi_in.allFinite() || !psi_in.allFinite()) fail_data("train: feature matrices contain non-finite entries");

    // Common rescaling so learner entries have RMS 1/sqrt(2), as unit
    // cosines do. The model is linear, so W, z and c are unaffected while
    // sigma2 and alpha keep one meaning for any feature amplitude.
    const double rms = psi_in.norm() / std::sqrt(static_cast<double>(psi_in.size()));
    if (!(rms > 0.0)) fail_data("train: learner features are identically zero");
    const double unit = 1.0 / (std::sqrt(2.0) * rms);
    const Matrix phi = unit * phi_in;
    const Matrix psi = unit * psi_in;

    const Eigen::Index features = psi.cols();
    // Rank the data can support; W is only pushed up to this rank.
    const double phi_top = Eigen::BDCSVD<Matrix>(phi).singularValues()[0];
    const Eigen::Index phi_rank = std::min(features, rank_above(phi, kRankFloor * phi_top));
    TrainedCerf out;
    out.c = cfg.scale_for(features);
    VariationalState state = initial_state(psi.rows(), features, cfg);
    Matrix W = Matrix::Identity(features, features);
    double alpha = cfg.admm.alpha0;
    AdmmState admm;
    bool have_admm = false;

    auto record = [&](int stage) {
        StageRecord r;
        r.stage = stage;
        r.elbo = elbo(phi, psi, state, W, cfg);
        r.residual = relative_residual(phi, psi, W, state.nu, out.c);
        r.spectral_norm_W = numerics::spectral_norm(W);
        r.alpha = alpha;
        if (!std::isfinite(r.elbo))
            fail_numerical("train: ELBO became non-finite at stage " + std::to_string(stage) +
                           " (residual " + std::to_string(r.residual) + ", |W|_2 " +
                           std::to_string(r.spectral_norm_W) + ", alpha " + std::to_string(alpha) + ")");
        out.diagnostics.trace.push_back(r);
        if (sink) sink(r);
        return r;
    };

    double previous = relative_residual(phi, psi, W, state.nu, out.c);
    int stage = 1;
    for (; stage <= cfg.max_stages; ++stage) {
        for (int s = 0; s < cfg.e_sweeps; ++s) estep_sweep(phi, psi, W, state, cfg);
        // Re-solve with a doubled alpha until W is back inside the slack ball,
        // or with a halved one while the penalty collapses W below the rank of
        // the teacher.
        bool doubled = false;
        for (int attempt = 0;; ++attempt) {
            admm = mstep_admm(phi, psi, state, W, alpha, cfg, have_admm ? &admm : nullptr);
            have_admm = true;
            out.diagnostics.admm_iterations += admm.iterations;
            if (attempt == kMaxDoublings) break;
            if (numerics::spectral_norm(admm.W) > kSpectralSlack) {
                alpha = alpha > 0.0 ? 2.0 * alpha : 1.0;
                doubled = true;
            } else if (alpha > 0.0 && rank_above(admm.W, kRankFloor) < phi_rank) {
                alpha *= 0.5;
                doubled = true;
            } else {
                break;
            }
        }
        W = admm.W;
        const StageRecord r = record(stage);
        out.diagnostics.em_stages = stage;

        // A changed penalty makes this residual incomparable with the
        // previous one.
        const bool stalled = (previous - r.residual) < kMinImprovement * previous;
        if (!doubled && stage > 1 && stalled) break;
        previous = r.residual;
    }

    W = polar_factor(W);
    const int last = std::min(stage, cfg.max_stages);
    for (int p = 1; p <= cfg.post_stages; ++p) {
        for (int s = 0; s < cfg.e_sweeps; ++s) estep_sweep(phi, psi, W, state, cfg);
        record(last + p);
    }

    out.z = extract_selector(state, cfg.target_density);
    Matrix row(1, features);
    for (Eigen::Index k = 0; k < features; ++k) row(0, k) = out.z[static_cast<std::size_t>(k)];
    out.diagnostics.residual = relative_residual(phi, psi, W, row, out.c);
    out.W = std::move(W);

    out.learner = learner;
    if (learner.selector.empty()) {
        out.learner.selector = out.z;
    } else {
        // Compose with an existing selector: z indexes the active features.
        std::size_t next = 0;
        for (auto& s : out.learner.selector)
            if (s) s = out.z[next++];
    }
    return out;
}

}  // namespace cerf::cvem
