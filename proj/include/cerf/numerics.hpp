#pragma once

#include <cstdint>
#include <limits>
#include <span>

#include <Eigen/Dense>

namespace cerf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace numerics {

/// Applies the unnormalized {+1,-1} Hadamard matrix in place.
/// Returns the number of additions/subtractions performed, len * log2(len).
/// Throws if the length is not a power of two.
std::uint64_t fwht(std::span<double> values);

Vector fwht(const Vector& values);

bool is_power_of_two(std::size_t n);
int log2_exact(std::size_t n);

/// Digamma function for x > 0 (recurrence shift above 6, then the
/// Bernoulli asymptotic series).
double digamma(double x);

/// Euclidean projection of `v` onto the L1 ball of radius `radius`.
///
/// Inputs already inside the ball are returned unchanged. Otherwise the
/// soft-threshold level lambda is the root of
///   f(lambda) = sum_i max(|v_i| - lambda, 0) - radius,
/// located by bisection on [0, max|v_i|] and then snapped to the exact root
/// of the linear piece containing it.
Vector project_l1_ball(const Vector& v, double radius);

/// Thin singular value decomposition A = left * diag(values) * right^T.
/// Singular values are sorted descending; each left singular vector has its
/// largest-magnitude entry nonnegative.
struct Svd {
    Matrix left;
    Vector values;
    Matrix right;
};

/// One-sided (Hestenes) Jacobi SVD of an m x n matrix with m >= n.
///
/// `right_guess`, if non-null, must be an n x n orthogonal matrix; the
/// rotation sweeps then start from A * right_guess, which converges in far
/// fewer sweeps when the guess is close to the true right singular basis.
Svd svd_jacobi(const Matrix& a, const Matrix* right_guess = nullptr);

/// Proximal operator of beta * ||.||_2 (spectral norm):
///   argmin_X 1/2 ||X - A||_F^2 + beta ||X||_2
/// computed as R diag[s - beta * P1(s / beta, 1)] P^T from A = R diag[s] P^T.
/// Returns the zero matrix when the nuclear norm of A is at most beta.
Matrix prox_spectral(const Matrix& a, double beta);

/// Repeated spectral prox on slowly varying inputs (ADMM iterates).
/// Same operator as prox_spectral, computed from an eigendecomposition of
/// A^T A with reusable workspace. With a finite `cap` the shrunk singular
/// values are also clipped at cap, which is the prox of beta ||X||_2
/// restricted to the ball ||X||_2 <= cap.
class SpectralProx {
public:
    Matrix operator()(const Matrix& a, double beta, double cap = std::numeric_limits<double>::infinity());

private:
    Matrix gram_;
    Eigen::SelfAdjointEigenSolver<Matrix> solver_;
};

/// Nearest orthogonal matrix in Frobenius norm (Procrustes): R P^T.
/// Throws when A has a singular value <= 1e-12.
Matrix nearest_orthogonal(const Matrix& a);

/// Largest singular value.
double spectral_norm(const Matrix& a);

}  // namespace numerics
}  // namespace cerf
