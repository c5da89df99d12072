#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cerf/cvem.hpp"
#include "cerf/features.hpp"

namespace cerf::apps {

struct Dataset {
    Matrix X;
    std::vector<int> labels;  // empty when unlabeled

    bool has_labels() const { return !labels.empty(); }
    int num_classes() const;
    /// Finite entries, labels (if any) non-negative and one per row.
    void validate() const;
};

/// Rows x = tanh(A s) + noise * e with s ~ N(0, I_latent), A ~ N(0, 1/latent)
/// (fixed per seed) and e ~ N(0, I_D): a curved low-dimensional manifold.
Dataset make_manifold(Eigen::Index samples, Eigen::Index input_dim, Eigen::Index latent_dim, double noise,
                      std::uint64_t seed);

/// Isotropic unit-variance Gaussian blobs around class means drawn from
/// N(0, separation^2 I); labels are assigned round-robin.
Dataset make_blobs(Eigen::Index samples, Eigen::Index input_dim, int classes, double separation,
                   std::uint64_t seed);

/// Median pairwise Euclidean distance over (at most) the first `max_rows` rows.
double median_bandwidth(const Matrix& X, Eigen::Index max_rows = 500);

/// Rows of F are feature vectors; returns F F^T.
Matrix gram(const Matrix& F);

/// Mean absolute entrywise difference of two grams, divided by the mean
/// absolute teacher entry when `normalize` is set.
double kernel_approx_error(const Matrix& teacher_gram, const Matrix& learner_gram, bool normalize);

/// Monte-Carlo gram of `spec` on X from `features` dense random features,
/// accumulated in chunks so memory stays at N x chunk.
Matrix reference_gram(const KernelSpec& spec, const Matrix& X, Eigen::Index features, std::uint64_t seed,
                      Eigen::Index chunk = 4096);

/// Maps raw rows to feature rows.
using FeatureFn = std::function<Matrix(const Matrix&)>;

FeatureFn feature_fn(const Embedding& embedding);
/// c * embed(learner, X) * W(:, z)^T, the K-dimensional trained embedding.
FeatureFn feature_fn(const cvem::TrainedCerf& trained);
Matrix trained_features(const cvem::TrainedCerf& trained, const Matrix& X);

struct RkpcaModel {
    Vector mean;             // K
    Matrix projection;       // K x J, orthonormal columns
    Vector singular_values;  // J, descending
    double captured = 0.0;   // sum of top-J sigma^2 over the total
};

RkpcaModel rkpca_fit(const Matrix& F, Eigen::Index components);
Matrix rkpca_project(const RkpcaModel& model, const Matrix& F);

struct RidgeModel {
    Matrix weights;    // J x T
    Vector intercept;  // T
    double lambda = 0.0;
};

/// Ridge on centered data; predictions are inputs * weights + intercept.
/// lambda = 0 with rank-deficient inputs is a data error.
RidgeModel ridge_fit(const Matrix& inputs, const Matrix& targets, double lambda);
Matrix ridge_predict(const RidgeModel& model, const Matrix& inputs);

/// {1e3, 1e2, ..., 1e-6}.
std::vector<double> default_lambda_grid();

/// Lambda with the smallest k-fold squared error summed over all targets.
/// Ties keep the earlier grid entry.
double select_lambda(const Matrix& inputs, const Matrix& targets, const std::vector<double>& grid, int folds,
                     std::uint64_t seed);

struct EvalOptions {
    Eigen::Index components = 15;  // J
    std::vector<double> lambdas = default_lambda_grid();
    int folds = 5;                 // inner CV folds for lambda, outer folds for classification
    std::uint64_t seed = 0;        // split / mask / fold assignment
};

/// 80/20 split, rkpca(J) plus D ridge regressors fit on the train rows;
/// test MSE over the test mean squared deviation from the train mean.
double autoencoder_eval(const Dataset& data, const FeatureFn& features, const EvalOptions& options = {});

/// round(missing_fraction * D) coordinates are blanked by one mask; features
/// of the masked rows regress the missing coordinates. Normalized as above.
double completion_eval(const Dataset& data, const FeatureFn& features, double missing_fraction = 0.2,
                       const EvalOptions& options = {});

/// Dimensions blanked by completion_eval for this seed (sorted).
std::vector<Eigen::Index> completion_mask(Eigen::Index input_dim, double missing_fraction, std::uint64_t seed);

struct ClassifyResult {
    double accuracy = 0.0;
    bool degenerate = false;  // a single class: accuracy 1 by construction
};

/// Stratified k-fold accuracy of one-vs-rest ridge to +-1 targets.
ClassifyResult classify_eval(const Dataset& data, const FeatureFn& features, const EvalOptions& options = {});

/// Stratified fold index per row, deterministic in the seed.
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

/// floor(mac_cost(reference) / D).
Eigen::Index equal_mac_budget(const Embedding& reference, Eigen::Index input_dim);

struct ReportRow {
    std::string method;
    std::uint64_t mac = 0;
    Eigen::Index features = 0;
    double density = 0.0;
    std::string metric;
    double value = 0.0;
    std::uint64_t seed = 0;
};

struct ReportSummary {
    std::string method;
    double density = 0.0;
    double mac = 0.0;       // mean over repeats
    double features = 0.0;  // mean over repeats
    std::size_t repeats = 0;
    double mean = 0.0;
    double stderr_ = 0.0;  // sample standard deviation / sqrt(repeats), 0 for one repeat
};

/// Rows of one metric. Summaries group by (method, density) in first-seen order.
class ComparisonReport {
public:
    explicit ComparisonReport(std::string metric = {}) : metric_(std::move(metric)) {}

    void add(ReportRow row);
    const std::string& metric() const { return metric_; }
    const std::vector<ReportRow>& rows() const { return rows_; }
    std::vector<ReportSummary> summarize() const;
    /// Value of `method` at `density` for `seed`; throws when absent.
    double value(const std::string& method, double density, std::uint64_t seed) const;

    /// method,mac,K,density,metric,value,seed
    std::string to_csv() const;
    /// Tab separated: method density mac K repeats mean stderr, '#' header.
    std::string to_tsv() const;
    static ComparisonReport from_csv(const std::string& text);

private:
    std::string metric_;
    std::vector<ReportRow> rows_;
};

/// Equal-MAC comparison on synthetic manifold data with a product-kernel
/// teacher. Every seed redraws teacher, learner and baseline; the data is
/// fixed by data_seed.
struct ProtocolConfig {
    Eigen::Index input_dim = 16;
    Eigen::Index latent_dim = 4;
    Eigen::Index train_samples = 300;  // CVEM training rows
    Eigen::Index eval_samples = 300;   // disjoint rows for grams and downstream tasks
    double noise = 0.05;
    std::uint64_t data_seed = 7;

    double bandwidth = 0.0;  // 0 selects the median heuristic on the eval rows
    KernelFamily first_factor = KernelFamily::gaussian;
    double second_bandwidth = 1.0;
    Eigen::Index teacher_features = 320;
    Eigen::Index reference_features = 65536;

    Eigen::Index dictionary_features = 320;  // K
    int components = 32;
    double spread = 0.1;
    double mask_density = 0.4;  // masked learner for the downstream tasks
    int group_exponent = 0;

    std::vector<double> budgets{0.2, 0.4};  // K'/K
    std::vector<std::uint64_t> seeds{1, 2, 3};
    bool kernel_task = true;
    bool autoencoder_task = true;
    bool completion_task = true;

    cvem::TrainConfig train;  // target_density is overwritten per budget
    EvalOptions eval;
    double missing_fraction = 0.2;

    ProtocolConfig();
    void validate() const;
};

struct ProtocolResult {
    double bandwidth = 0.0;
    int trainings = 0;
    double max_orthogonality_error = 0.0;  // max |W^T W - I|_F over every trained W
    ComparisonReport kernel{"kernel_error"};
    ComparisonReport autoencoder{"autoencoder_error"};
    ComparisonReport completion{"completion_error"};
};

using ProgressSink = std::function<void(const std::string&)>;

/// Methods are "cerf" and "rff"; rows are appended seed-major, then budget.
ProtocolResult run_protocol(const ProtocolConfig& config, const ProgressSink& progress = {});

}  // namespace cerf::apps
