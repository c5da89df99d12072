#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "cerf/error.hpp"
#include "cerf/numerics.hpp"

namespace cerf::numerics {

namespace {

constexpr int kMaxSweeps = 80;

// Completes column j of `left` to a unit vector orthogonal to every column
// already marked valid, trying canonical basis vectors in index order.
void complete_column(Matrix& left, std::vector<bool>& valid, Eigen::Index j) {
    const Eigen::Index m = left.rows();
    for (Eigen::Index e = 0; e < m; ++e) {
        Vector candidate = Vector::Unit(m, e);
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index c = 0; c < left.cols(); ++c) {
                if (!valid[c]) continue;
                candidate -= left.col(c).dot(candidate) * left.col(c);
            }
        }
        const double norm = candidate.norm();
        if (norm > 1e-6) {
            left.col(j) = candidate / norm;
            valid[j] = true;
            return;
        }
    }
    fail_numerical("svd_jacobi: unable to complete left singular basis");
}

}  // namespace

Svd svd_jacobi(const Matrix& a, const Matrix* right_guess) {
    const Eigen::Index m = a.rows();
    const Eigen::Index n = a.cols();
    require(n >= 1 && m >= n, "svd_jacobi: requires rows >= cols >= 1");
    if (!a.allFinite()) fail_numerical("svd_jacobi: non-finite input");

    Matrix work;
    Matrix right;
    if (right_guess != nullptr) {
        require(right_guess->rows() == n && right_guess->cols() == n,
                "svd_jacobi: warm-start basis has wrong shape");
        work.noalias() = a * *right_guess;
        right = *right_guess;
    } else {
        work = a;
        right = Matrix::Identity(n, n);
    }

    // Pairs count as orthogonal once the cosine of their angle drops below
    // a rounding-level threshold that grows with the column length.
    const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max<Eigen::Index>(m, 4));
    std::vector<double> sq(static_cast<std::size_t>(n));
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        for (Eigen::Index j = 0; j < n; ++j) sq[j] = work.col(j).squaredNorm();
        bool rotated = false;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double alpha = sq[p];
                const double beta = sq[q];
                if (alpha == 0.0 || beta == 0.0) continue;
                const double gamma = work.col(p).dot(work.col(q));
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;

                for (Eigen::Index i = 0; i < m; ++i) {
                    const double wp = work(i, p);
                    const double wq = work(i, q);
                    work(i, p) = c * wp - s * wq;
                    work(i, q) = s * wp + c * wq;
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double rp = right(i, p);
                    const double rq = right(i, q);
                    right(i, p) = c * rp - s * rq;
                    right(i, q) = s * rp + c * rq;
                }
                sq[p] = alpha - t * gamma;
                sq[q] = beta + t * gamma;
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    Vector norms(n);
    for (Eigen::Index j = 0; j < n; ++j) norms[j] = work.col(j).norm();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index x, Eigen::Index y) { return norms[x] > norms[y]; });

    Svd out;
    out.values.resize(n);
    out.left.setZero(m, n);
    out.right.resize(n, n);
    // Columns this small carry no reliable direction; their left vectors are
    // rebuilt as an orthonormal completion instead.
    const double cutoff = norms.maxCoeff() * tol;
    std::vector<bool> valid(static_cast<std::size_t>(n), false);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index src = order[j];
        out.values[j] = norms[src];
        out.right.col(j) = right.col(src);
        if (norms[src] > cutoff) {
            out.left.col(j) = work.col(src) / norms[src];
            valid[j] = true;
        }
    }
    for (Eigen::Index j = 0; j < n; ++j)
        if (!valid[j]) complete_column(out.left, valid, j);

    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index arg = 0;
        out.left.col(j).cwiseAbs().maxCoeff(&arg);
        if (out.left(arg, j) < 0.0) {
            out.left.col(j) *= -1.0;
            out.right.col(j) *= -1.0;
        }
    }
    return out;
}

double spectral_norm(const Matrix& a) {
    if (a.rows() >= a.cols()) return svd_jacobi(a).values[0];
    return svd_jacobi(a.transpose()).values[0];
}

}  // namespace cerf::numerics
