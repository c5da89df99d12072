#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cerf/apps.hpp"
#include "cerf/error.hpp"
#include "cerf/rng.hpp"

namespace cerf::apps {

namespace {

using Eigen::all;

std::vector<Eigen::Index> shuffled(Eigen::Index count, Rng& rng) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

struct Split {
    std::vector<Eigen::Index> train, test;
};

// 80/20 split with both parts non-empty; index lists are kept sorted.
Split split_rows(Eigen::Index rows, std::uint64_t seed) {
    if (rows < 2) fail_data("evaluation split needs at least two rows");
    Rng rng = Rng::derive(seed, 0x5e11);
    const auto order = shuffled(rows, rng);
    const auto test_rows = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::llround(0.2 * static_cast<double>(rows))), 1, rows - 1);
    Split s;
    s.test.assign(order.begin(), order.begin() + test_rows);
    s.train.assign(order.begin() + test_rows, order.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

void check_options(const EvalOptions& options) {
    require(options.components >= 1, "evaluation: J must be positive");
    require(options.folds >= 2, "evaluation: at least two folds are needed");
    if (options.lambdas.empty()) fail_argument("evaluation: lambda grid is empty");
}

// Normalized test error of rkpca(J) + ridge from `features` to `targets`.
double regress_normalized(const Matrix& features, const Matrix& targets, const Split& split,
                          const EvalOptions& options) {
    const auto J = options.components;
    if (static_cast<Eigen::Index>(split.train.size()) < J)
        fail_data("evaluation: " + std::to_string(split.train.size()) + " training rows cannot support J = " +
                  std::to_string(J));
    if (features.cols() < J)
        fail_data("evaluation: embedding has " + std::to_string(features.cols()) + " features, fewer than J = " +
                  std::to_string(J));
    const Matrix f_train = features(split.train, all);
    const RkpcaModel pca = rkpca_fit(f_train, J);
    const Matrix g_train = rkpca_project(pca, f_train);
    const Matrix g_test = rkpca_project(pca, features(split.test, all));
    const Matrix y_train = targets(split.train, all);
    const Matrix y_test = targets(split.test, all);

    const double lambda = select_lambda(g_train, y_train, options.lambdas, options.folds, options.seed ^ 0x1a3bdu);
    const RidgeModel model = ridge_fit(g_train, y_train, lambda);
    const double mse = (ridge_predict(model, g_test) - y_test).squaredNorm();
    const Vector train_mean = y_train.colwise().mean().transpose();
    const double baseline = (y_test.rowwise() - train_mean.transpose()).squaredNorm();
    if (!(baseline > 0.0)) fail_data("evaluation: test targets equal the training mean exactly");
    return mse / baseline;
}

}  // namespace

double autoencoder_eval(const Dataset& data, const FeatureFn& features, const EvalOptions& options) {
    data.validate();
    check_options(options);
    if (data.X.rows() < 2 * options.components)
        fail_data("autoencoder_eval: need at least 2J = " + std::to_string(2 * options.components) + " rows, got " +
                  std::to_string(data.X.rows()));
    const Split split = split_rows(data.X.rows(), options.seed);
    return regress_normalized(features(data.X), data.X, split, options);
}

std::vector<Eigen::Index> completion_mask(Eigen::Index input_dim, double missing_fraction, std::uint64_t seed) {
    require(missing_fraction > 0.0 && missing_fraction < 1.0, "completion: missing fraction must lie in (0, 1)");
    require(input_dim >= 2, "completion: need at least two dimensions");
    const auto missing = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::llround(missing_fraction * static_cast<double>(input_dim))), 1, input_dim - 1);
    Rng rng = Rng::derive(seed, 0xc0de);
    auto order = shuffled(input_dim, rng);
    order.resize(static_cast<std::size_t>(missing));
    std::sort(order.begin(), order.end());
    return order;
}

double completion_eval(const Dataset& data, const FeatureFn& features, double missing_fraction,
                       const EvalOptions& options) {
    data.validate();
    check_options(options);
    const auto missing = completion_mask(data.X.cols(), missing_fraction, options.seed);
    Matrix observed = data.X;
    for (Eigen::Index d : missing) observed.col(d).setZero();
    const Split split = split_rows(data.X.rows(), options.seed);
    return regress_normalized(features(observed), data.X(all, missing), split, options);
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
    require(folds >= 1, "stratified_folds: folds must be positive");
    int classes = 0;
    for (int l : labels) {
        require(l >= 0, "stratified_folds: labels must be nonnegative");
        classes = std::max(classes, l + 1);
    }
    std::vector<int> out(labels.size(), 0);
    Rng rng = Rng::derive(seed, 0xf01d);
    std::size_t offset = 0;
    for (int c = 0; c < classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) members.push_back(i);
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
        for (std::size_t i = 0; i < members.size(); ++i)
            out[members[i]] = static_cast<int>((offset + i) % static_cast<std::size_t>(folds));
        offset += members.size();
    }
    return out;
}

ClassifyResult classify_eval(const Dataset& data, const FeatureFn& features, const EvalOptions& options) {
    data.validate();
    check_options(options);
    if (!data.has_labels()) fail_data("classify_eval: dataset has no labels");
    const int classes = data.num_classes();
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(classes), 0);
    for (int l : data.labels) ++counts[static_cast<std::size_t>(l)];
    const auto present = std::count_if(counts.begin(), counts.end(), [](Eigen::Index c) { return c > 0; });
    if (present == 1) return ClassifyResult{1.0, true};
    for (int c = 0; c < classes; ++c)
        if (counts[static_cast<std::size_t>(c)] < options.folds)
            fail_data("classify_eval: class " + std::to_string(c) + " has " +
                      std::to_string(counts[static_cast<std::size_t>(c)]) + " samples, fewer than " +
                      std::to_string(options.folds) + " folds");

    const Matrix F = features(data.X);
    const auto fold = stratified_folds(data.labels, options.folds, options.seed);
    Matrix targets = Matrix::Constant(data.X.rows(), classes, -1.0);
    for (std::size_t i = 0; i < data.labels.size(); ++i) targets(static_cast<Eigen::Index>(i), data.labels[i]) = 1.0;

    Eigen::Index correct = 0;
    for (int f = 0; f < options.folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
        const Matrix f_train = F(train, all);
        const Matrix t_train = targets(train, all);
        const double lambda = select_lambda(f_train, t_train, options.lambdas, options.folds,
                                            options.seed + static_cast<std::uint64_t>(f) + 1);
        const Matrix scores = ridge_predict(ridge_fit(f_train, t_train, lambda), F(test, all));
        for (std::size_t i = 0; i < test.size(); ++i) {
            Eigen::Index best = 0;
            scores.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
            correct += best == data.labels[static_cast<std::size_t>(test[i])];
        }
    }
    return ClassifyResult{static_cast<double>(correct) / static_cast<double>(data.X.rows()), false};
}

Eigen::Index equal_mac_budget(const Embedding& reference, Eigen::Index input_dim) {
    require(input_dim >= 1, "equal_mac_budget: input dimension must be positive");
    const std::uint64_t budget = mac_cost(reference);
    if (budget < static_cast<std::uint64_t>(input_dim))
        fail_argument("equal_mac_budget: budget " + std::to_string(budget) + " is below one dense feature (D = " +
                      std::to_string(input_dim) + ")");
    return static_cast<Eigen::Index>(budget / static_cast<std::uint64_t>(input_dim));
}

}  // namespace cerf::apps
