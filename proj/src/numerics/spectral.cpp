#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cerf/error.hpp"
#include "cerf/numerics.hpp"

namespace cerf::numerics {

namespace {

Matrix shrink_from_svd(const Svd& svd, double beta, double cap) {
    if (svd.values.sum() <= beta) return Matrix::Zero(svd.left.rows(), svd.right.rows());
    Vector shrunk = beta > 0.0 ? Vector(svd.values - beta * project_l1_ball(svd.values / beta, 1.0)) : svd.values;
    shrunk = shrunk.cwiseMin(cap);
    return svd.left * shrunk.asDiagonal() * svd.right.transpose();
}

void check_square(const Matrix& a, const char* who) {
    require(a.rows() == a.cols() && a.rows() >= 1, std::string(who) + ": expects a non-empty square matrix");
}

}  // namespace

Matrix prox_spectral(const Matrix& a, double beta) {
    check_square(a, "prox_spectral");
    require(beta >= 0.0, "prox_spectral: beta must be nonnegative");
    if (beta == 0.0) return a;
    return shrink_from_svd(svd_jacobi(a), beta, std::numeric_limits<double>::infinity());
}

Matrix SpectralProx::operator()(const Matrix& a, double beta, double cap) {
    check_square(a, "SpectralProx");
    require(beta >= 0.0, "SpectralProx: beta must be nonnegative");
    require(cap > 0.0, "SpectralProx: cap must be positive");
    if (beta == 0.0 && cap == std::numeric_limits<double>::infinity()) return a;

    // Singular pairs from the Gram matrix. Only the leading singular values
    // are modified, and those are resolved accurately this way.
    gram_.noalias() = a.transpose() * a;
    solver_.compute(gram_);
    if (solver_.info() != Eigen::Success) fail_numerical("SpectralProx: eigensolver did not converge");
    const Eigen::Index n = a.cols();
    Vector values(n);
    for (Eigen::Index i = 0; i < n; ++i) values[i] = std::sqrt(std::max(solver_.eigenvalues()[n - 1 - i], 0.0));
    if (values.sum() <= beta) return Matrix::Zero(a.rows(), a.cols());

    Vector shrunk = beta > 0.0 ? Vector(values - beta * project_l1_ball(values / beta, 1.0)) : values;
    shrunk = shrunk.cwiseMin(cap);
    Eigen::Index modified = 0;
    while (modified < n && shrunk[modified] < values[modified]) ++modified;
    if (modified == 0) return a;
    // X = A - A V_m diag(1 - s'/s) V_m^T over the modified directions.
    const Matrix basis = solver_.eigenvectors().rightCols(modified).rowwise().reverse();
    Vector factor(modified);
    for (Eigen::Index i = 0; i < modified; ++i) factor[i] = 1.0 - shrunk[i] / values[i];
    Matrix out = a;
    out.noalias() -= ((a * basis) * factor.asDiagonal()) * basis.transpose();
    return out;
}

Matrix nearest_orthogonal(const Matrix& a) {
    check_square(a, "nearest_orthogonal");
    const Svd svd = svd_jacobi(a);
    const double smallest = svd.values[svd.values.size() - 1];
    if (!(smallest > 1e-12))
        fail_numerical("nearest_orthogonal: matrix is rank deficient (smallest singular value " +
                       std::to_string(smallest) + "), projection is not unique");
    return svd.left * svd.right.transpose();
}

}  // namespace cerf::numerics
