#include <algorithm>
#include <cmath>
#include <string>

#include "cerf/apps.hpp"
#include "cerf/error.hpp"
#include "cerf/rng.hpp"

namespace cerf::apps {

int Dataset::num_classes() const {
    if (labels.empty()) return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
}

void Dataset::validate() const {
    if (X.rows() < 1 || X.cols() < 1) fail_data("dataset is empty");
    if (!X.allFinite()) fail_data("dataset contains non-finite values");
    if (!labels.empty()) {
        if (static_cast<Eigen::Index>(labels.size()) != X.rows())
            fail_data("dataset has " + std::to_string(labels.size()) + " labels for " + std::to_string(X.rows()) +
                      " rows");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] < 0) fail_data("label of row " + std::to_string(i + 1) + " is negative");
    }
}

Dataset make_manifold(Eigen::Index samples, Eigen::Index input_dim, Eigen::Index latent_dim, double noise,
                      std::uint64_t seed) {
    require(samples >= 1 && input_dim >= 1 && latent_dim >= 1, "make_manifold: dimensions must be positive");
    require(noise >= 0.0 && std::isfinite(noise), "make_manifold: noise must be nonnegative");
    Rng rng(seed);
    Matrix A(input_dim, latent_dim);
    const double a_scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    for (Eigen::Index i = 0; i < A.size(); ++i) A(i) = a_scale * rng.normal();
    Dataset out;
    out.X.resize(samples, input_dim);
    Vector s(latent_dim);
    for (Eigen::Index n = 0; n < samples; ++n) {
        for (Eigen::Index j = 0; j < latent_dim; ++j) s[j] = rng.normal();
        const Vector clean = (A * s).array().tanh().matrix();
        for (Eigen::Index d = 0; d < input_dim; ++d) out.X(n, d) = clean[d] + noise * rng.normal();
    }
    return out;
}

Dataset make_blobs(Eigen::Index samples, Eigen::Index input_dim, int classes, double separation,
                   std::uint64_t seed) {
    require(samples >= 1 && input_dim >= 1 && classes >= 1, "make_blobs: dimensions must be positive");
    require(separation >= 0.0 && std::isfinite(separation), "make_blobs: separation must be nonnegative");
    Rng rng(seed);
    Matrix centres(classes, input_dim);
    for (Eigen::Index i = 0; i < centres.size(); ++i) centres(i) = separation * rng.normal();
    Dataset out;
    out.X.resize(samples, input_dim);
    out.labels.resize(static_cast<std::size_t>(samples));
    for (Eigen::Index n = 0; n < samples; ++n) {
        const int label = static_cast<int>(n % classes);
        out.labels[static_cast<std::size_t>(n)] = label;
        for (Eigen::Index d = 0; d < input_dim; ++d) out.X(n, d) = centres(label, d) + rng.normal();
    }
    return out;
}

double median_bandwidth(const Matrix& X, Eigen::Index max_rows) {
    const Eigen::Index rows = std::min(X.rows(), max_rows);
    if (rows < 2) fail_data("median_bandwidth: need at least two rows");
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(rows * (rows - 1) / 2));
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = i + 1; j < rows; ++j) dist.push_back((X.row(i) - X.row(j)).norm());
    const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    if (!(*mid > 0.0)) fail_data("median_bandwidth: median pairwise distance is zero");
    return *mid;
}

Matrix gram(const Matrix& F) {
    Matrix g(F.rows(), F.rows());
    g.setZero();
    g.selfadjointView<Eigen::Lower>().rankUpdate(F);
    return g.selfadjointView<Eigen::Lower>();
}

double kernel_approx_error(const Matrix& teacher_gram, const Matrix& learner_gram, bool normalize) {
    if (teacher_gram.rows() != learner_gram.rows() || teacher_gram.cols() != learner_gram.cols())
        fail_argument("kernel_approx_error: grams are " + std::to_string(teacher_gram.rows()) + "x" +
                      std::to_string(teacher_gram.cols()) + " and " + std::to_string(learner_gram.rows()) + "x" +
                      std::to_string(learner_gram.cols()));
    if (teacher_gram.size() == 0) fail_argument("kernel_approx_error: grams are empty");
    const double raw = (teacher_gram - learner_gram).cwiseAbs().mean();
    if (!normalize) return raw;
    const double scale = teacher_gram.cwiseAbs().mean();
    if (!(scale > 0.0)) fail_data("kernel_approx_error: teacher gram is identically zero");
    return raw / scale;
}

Matrix reference_gram(const KernelSpec& spec, const Matrix& X, Eigen::Index features, std::uint64_t seed,
                      Eigen::Index chunk) {
    require(features >= 1 && chunk >= 1, "reference_gram: feature and chunk counts must be positive");
    Matrix out = Matrix::Zero(X.rows(), X.rows());
    std::uint64_t index = 0;
    for (Eigen::Index done = 0; done < features; done += chunk, ++index) {
        const Eigen::Index count = std::min(chunk, features - done);
        const DenseRff part = sample_rff(spec, X.cols(), count, Rng::derive(seed, index).next_u64());
        // Each chunk carries scale sqrt(2 / count); reweight to sqrt(2 / features).
        const Matrix F = embed(Embedding{part, {}}, X);
        out.selfadjointView<Eigen::Lower>().rankUpdate(F, static_cast<double>(count) / static_cast<double>(features));
    }
    return out.selfadjointView<Eigen::Lower>();
}

FeatureFn feature_fn(const Embedding& embedding) {
    return [embedding](const Matrix& X) { return embed(embedding, X); };
}

Matrix trained_features(const cvem::TrainedCerf& trained, const Matrix& X) {
    const Eigen::Index K = trained.W.rows();
    if (static_cast<Eigen::Index>(trained.z.size()) != K) fail_argument("trained_features: selector size mismatch");
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < K; ++k)
        if (trained.z[static_cast<std::size_t>(k)]) active.push_back(k);
    const Matrix psi = embed(trained.learner, X);
    if (psi.cols() != static_cast<Eigen::Index>(active.size()))
        fail_argument("trained_features: learner selector does not match z");
    return trained.c * psi * trained.W(Eigen::all, active).transpose();
}

FeatureFn feature_fn(const cvem::TrainedCerf& trained) {
    return [trained](const Matrix& X) { return trained_features(trained, X); };
}

}  // namespace cerf::apps
