#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cerf/numerics.hpp"

namespace cerf {

using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using Selector = std::vector<std::uint8_t>;

enum class KernelFamily { gaussian, cauchy, product };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(const std::string& name);

/**
 * Shift-invariant target kernel.
 *
 *  - gaussian: exp(-|x-y|^2 / (2 k^2)), frequencies Normal(0, k^-2 I)
 *  - cauchy:   prod_d 1 / (1 + (x_d-y_d)^2 / k^2), frequencies Laplace(0, 1/k)
 *  - product:  frequencies w1 (.) w2 with w1 drawn from `first_factor` at
 *              bandwidth k and w2 ~ Normal(0, second_bandwidth^-2 I)
 */
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double bandwidth = 1.0;
    KernelFamily first_factor = KernelFamily::gaussian;
    double second_bandwidth = 1.0;

    void validate() const;
    /// Spectral density a learner dictionary is centred on: the kernel's own
    /// density, or that of the first factor for product kernels.
    KernelSpec base_density() const;
};

/// Closed-form kernel value. Throws for the product family, which has no
/// closed form here; use a high-K Monte-Carlo reference instead.
double kernel_exact(const KernelSpec& spec, const Vector& x, const Vector& y);

/// Dense random Fourier features: scale * cos(omega^T x + phase).
struct DenseRff {
    Matrix omega;  // D x K, one frequency per column
    Vector phase;  // K, uniform on [0, 2 pi)
    double scale = 1.0;

    Eigen::Index input_dim() const { return omega.rows(); }
    Eigen::Index features() const { return omega.cols(); }
};

/// Masked CERF: feature k only reads the coordinates where mask(:, k) is set,
/// scale * cos(rho_k (x (.) eps_k)^T omega_k + phase_k).
struct MaskedCerf {
    DenseRff base;
    Mask mask;  // D x K, entries in {0, 1}
    Vector rho;
    int group_exponent = 0;  // masks are constant over runs of 2^e coordinates
};

/// One Fastfood block (1 / (k sqrt(d))) S H G Pi H B over padded dimension d.
struct FastfoodBlock {
    std::vector<double> sign;         // B, +-1
    std::vector<std::uint32_t> perm;  // Pi, a permutation of 0..d-1
    std::vector<double> gauss;        // G, standard normal
    std::vector<double> row_scale;    // S, chi(d) / |G|_F
};

/// Blocked CERF: K = J d features from J Fastfood blocks.
struct BlockedCerf {
    Eigen::Index input_dim = 0;
    Eigen::Index padded_dim = 0;
    double bandwidth = 1.0;
    std::vector<FastfoodBlock> blocks;
    Vector phase;
    double scale = 1.0;

    Eigen::Index features() const { return padded_dim * static_cast<Eigen::Index>(blocks.size()); }
    /// Materialized D x K frequency matrix. For tests and diagnostics only;
    /// evaluation never builds it.
    Matrix frequency_matrix() const;
};

/// Any feature map plus an optional subset of active features. An empty
/// selector activates every feature.
struct Embedding {
    std::variant<DenseRff, MaskedCerf, BlockedCerf> map;
    Selector selector;

    Eigen::Index input_dim() const;
    Eigen::Index features() const;
    Eigen::Index active_features() const;
    bool active(Eigen::Index k) const { return selector.empty() || selector[static_cast<std::size_t>(k)] != 0; }
    std::string kind() const;
};

/// Draw from the Beta-Bernoulli process: pi_k ~ Beta(gamma / C, 1),
/// Z(r, k) ~ Bernoulli(pi_k).
struct BbpDraw {
    Mask z;
    Vector pi;
    double gamma = 1.0;
};

DenseRff sample_rff(const KernelSpec& spec, Eigen::Index input_dim, Eigen::Index features, std::uint64_t seed);

/// Frequencies from a Gaussian mixture whose `components` centres are drawn
/// from the kernel's base density; each frequency is its centre plus
/// Normal(0, (spread / k)^2 I) noise.
DenseRff sample_learner_dictionary(const KernelSpec& spec, Eigen::Index input_dim, Eigen::Index features,
                                   int components, double spread, std::uint64_t seed);

BbpDraw sample_bbp(Eigen::Index rows, Eigen::Index cols, double gamma, std::uint64_t seed);

/// Mass parameter whose Beta(gamma / K, 1) mean equals `density`.
double bbp_gamma_for_density(double density, Eigen::Index features);

MaskedCerf build_masked_cerf(const DenseRff& base, double gamma, double target_density, int group_exponent,
                             std::uint64_t seed);

BlockedCerf build_blocked_cerf(const KernelSpec& spec, Eigen::Index input_dim, int blocks, std::uint64_t seed);

/// Arithmetic-operation tally filled in by `embed`.
struct OpCounter {
    std::atomic<std::uint64_t> ops{0};
};

/// Feature matrix with one row per sample and one column per active feature
/// (in feature-index order). Rows are evaluated independently and in
/// parallel; the result does not depend on the worker count.
Matrix embed(const Embedding& embedding, const Matrix& data, OpCounter* counter = nullptr);

/// Per-sample multiply-accumulate cost of the active features:
///   dense   K_active * D
///   masked  sum over active k of |eps_k|_1
///   blocked (blocks with an active feature) * (2 d log2 d + 3 d)
std::uint64_t mac_cost(const Embedding& embedding);

}  // namespace cerf
