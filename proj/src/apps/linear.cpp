#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cerf/apps.hpp"
#include "cerf/error.hpp"
#include "cerf/rng.hpp"

namespace cerf::apps {

RkpcaModel rkpca_fit(const Matrix& F, Eigen::Index components) {
    if (F.rows() < 1 || F.cols() < 1) fail_argument("rkpca_fit: feature matrix is empty");
    if (components < 1 || components > std::min(F.rows(), F.cols()))
        fail_argument("rkpca_fit: J = " + std::to_string(components) + " must lie in [1, min(N, K)] = [1, " +
                      std::to_string(std::min(F.rows(), F.cols())) + "]");
    if (!F.allFinite()) fail_data("rkpca_fit: features contain non-finite values");

    RkpcaModel model;
    model.mean = F.colwise().mean().transpose();
    const Matrix centred = F.rowwise() - model.mean.transpose();
    const Eigen::BDCSVD<Matrix> svd(centred, Eigen::ComputeThinV);
    model.projection = svd.matrixV().leftCols(components);
    model.singular_values = svd.singularValues().head(components);
    // Fix the sign of each direction so refits are reproducible.
    for (Eigen::Index j = 0; j < components; ++j) {
        Eigen::Index arg = 0;
        model.projection.col(j).cwiseAbs().maxCoeff(&arg);
        if (model.projection(arg, j) < 0.0) model.projection.col(j) *= -1.0;
    }
    const double total = svd.singularValues().squaredNorm();
    model.captured = total > 0.0 ? model.singular_values.squaredNorm() / total : 0.0;
    return model;
}

Matrix rkpca_project(const RkpcaModel& model, const Matrix& F) {
    if (F.cols() != model.mean.size())
        fail_argument("rkpca_project: model expects " + std::to_string(model.mean.size()) + " features, got " +
                      std::to_string(F.cols()));
    return (F.rowwise() - model.mean.transpose()) * model.projection;
}

RidgeModel ridge_fit(const Matrix& inputs, const Matrix& targets, double lambda) {
    if (inputs.rows() < 1) fail_argument("ridge_fit: need at least one row");
    if (inputs.rows() != targets.rows())
        fail_argument("ridge_fit: " + std::to_string(inputs.rows()) + " input rows but " +
                      std::to_string(targets.rows()) + " target rows");
    require(lambda >= 0.0 && std::isfinite(lambda), "ridge_fit: lambda must be nonnegative");

    const Vector x_mean = inputs.colwise().mean().transpose();
    const Vector y_mean = targets.colwise().mean().transpose();
    const Matrix xc = inputs.rowwise() - x_mean.transpose();
    const Matrix yc = targets.rowwise() - y_mean.transpose();
    if (lambda == 0.0) {
        const Eigen::ColPivHouseholderQR<Matrix> qr(xc);
        if (qr.rank() < inputs.cols())
            fail_data("ridge_fit: inputs are rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                      std::to_string(inputs.cols()) + "); use lambda > 0");
    }
    Matrix normal = xc.transpose() * xc;
    normal.diagonal().array() += lambda;
    const Eigen::LDLT<Matrix> ldlt(normal);
    if (ldlt.info() != Eigen::Success) fail_numerical("ridge_fit: normal equations could not be factored");

    RidgeModel model;
    model.lambda = lambda;
    model.weights = ldlt.solve(xc.transpose() * yc);
    model.intercept = y_mean - model.weights.transpose() * x_mean;
    return model;
}

Matrix ridge_predict(const RidgeModel& model, const Matrix& inputs) {
    if (inputs.cols() != model.weights.rows())
        fail_argument("ridge_predict: model expects " + std::to_string(model.weights.rows()) + " inputs, got " +
                      std::to_string(inputs.cols()));
    return (inputs * model.weights).rowwise() + model.intercept.transpose();
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int e = 3; e >= -6; --e) grid.push_back(std::pow(10.0, e));
    return grid;
}

double select_lambda(const Matrix& inputs, const Matrix& targets, const std::vector<double>& grid, int folds,
                     std::uint64_t seed) {
    if (grid.empty()) fail_argument("select_lambda: lambda grid is empty");
    for (double l : grid) require(l >= 0.0 && std::isfinite(l), "select_lambda: lambdas must be nonnegative");
    if (inputs.rows() != targets.rows()) fail_argument("select_lambda: row counts differ");
    if (grid.size() == 1) return grid.front();
    const Eigen::Index rows = inputs.rows();
    const int k = static_cast<int>(std::min<Eigen::Index>(folds, rows));
    if (k < 2) fail_data("select_lambda: need at least two rows for cross-validation");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<int> fold(static_cast<std::size_t>(rows));
    for (std::size_t i = 0; i < order.size(); ++i) fold[static_cast<std::size_t>(order[i])] = static_cast<int>(i % k);

    std::vector<double> error(grid.size(), 0.0);
    for (int f = 0; f < k; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index n = 0; n < rows; ++n) (fold[static_cast<std::size_t>(n)] == f ? test : train).push_back(n);
        const Matrix x = inputs(train, Eigen::all);
        const Matrix y = targets(train, Eigen::all);
        const Vector x_mean = x.colwise().mean().transpose();
        const Vector y_mean = y.colwise().mean().transpose();
        const Matrix xc = x.rowwise() - x_mean.transpose();
        // One eigendecomposition serves every lambda on this fold.
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(xc.transpose() * xc);
        const Matrix rotated = eig.eigenvectors().transpose() * (xc.transpose() * (y.rowwise() - y_mean.transpose()));
        const Matrix test_x = (inputs(test, Eigen::all).rowwise() - x_mean.transpose()) * eig.eigenvectors();
        const Matrix test_y = targets(test, Eigen::all).rowwise() - y_mean.transpose();
        const double floor = 1e-12 * std::max(eig.eigenvalues().maxCoeff(), 1e-300);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const Vector shifted = eig.eigenvalues().array() + grid[g];
            if (shifted.minCoeff() <= floor) {
                error[g] = std::numeric_limits<double>::infinity();
                continue;
            }
            const Matrix coef = shifted.cwiseInverse().asDiagonal() * rotated;
            error[g] += (test_x * coef - test_y).squaredNorm();
        }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (error[g] < error[best]) best = g;
    if (!std::isfinite(error[best])) fail_data("select_lambda: every lambda in the grid is singular on some fold");
    return grid[best];
}

}  // namespace cerf::apps
