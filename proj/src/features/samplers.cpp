#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cerf/error.hpp"
#include "cerf/features.hpp"
#include "cerf/rng.hpp"

namespace cerf {

namespace {

// Stream tags keep the samplers' random streams disjoint for a shared seed.
enum Stream : std::uint64_t {
    kRffStream = 1,
    kDictionaryStream = 2,
    kBbpStream = 3,
    kMaskStream = 4,
    kFastfoodStream = 5,
};

double draw_coordinate(KernelFamily family, double bandwidth, Rng& rng) {
    switch (family) {
        case KernelFamily::gaussian: return rng.normal() / bandwidth;
        case KernelFamily::cauchy: return rng.laplace(1.0 / bandwidth);
        case KernelFamily::product: break;
    }
    fail_argument("draw_coordinate: product is not an elementary family");
}

double draw_frequency(const KernelSpec& spec, Rng& rng) {
    if (spec.family != KernelFamily::product) return draw_coordinate(spec.family, spec.bandwidth, rng);
    const double first = draw_coordinate(spec.first_factor, spec.bandwidth, rng);
    const double second = rng.normal() / spec.second_bandwidth;
    return first * second;
}

Vector uniform_phases(Eigen::Index count, Rng& rng) {
    Vector phase(count);
    for (Eigen::Index k = 0; k < count; ++k) phase[k] = 2.0 * std::numbers::pi * rng.uniform();
    return phase;
}

double clamp_probability(double p) {
    return std::clamp(p, 0x1.0p-60, 1.0 - 0x1.0p-53);
}

}  // namespace

DenseRff sample_rff(const KernelSpec& spec, Eigen::Index input_dim, Eigen::Index features, std::uint64_t seed) {
    spec.validate();
    require(input_dim >= 1 && features >= 1, "sample_rff: dimensions must be positive");
    Rng rng = Rng::derive(seed, kRffStream);
    DenseRff rff;
    rff.omega.resize(input_dim, features);
    for (Eigen::Index k = 0; k < features; ++k)
        for (Eigen::Index d = 0; d < input_dim; ++d) rff.omega(d, k) = draw_frequency(spec, rng);
    rff.phase = uniform_phases(features, rng);
    rff.scale = std::sqrt(2.0 / static_cast<double>(features));
    return rff;
}

DenseRff sample_learner_dictionary(const KernelSpec& spec, Eigen::Index input_dim, Eigen::Index features,
                                   int components, double spread, std::uint64_t seed) {
    spec.validate();
    require(input_dim >= 1 && features >= 1, "sample_learner_dictionary: dimensions must be positive");
    require(components >= 1, "sample_learner_dictionary: need at least one mixture component");
    require(spread >= 0.0, "sample_learner_dictionary: spread must be nonnegative");

    const KernelSpec base = spec.base_density();
    Rng rng = Rng::derive(seed, kDictionaryStream);
    Matrix centres(input_dim, components);
    for (int j = 0; j < components; ++j)
        for (Eigen::Index d = 0; d < input_dim; ++d) centres(d, j) = draw_frequency(base, rng);

    const double jitter = spread / base.bandwidth;
    DenseRff dict;
    dict.omega.resize(input_dim, features);
    for (Eigen::Index k = 0; k < features; ++k) {
        const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(components)));
        for (Eigen::Index d = 0; d < input_dim; ++d) dict.omega(d, k) = centres(d, j) + jitter * rng.normal();
    }
    dict.phase = uniform_phases(features, rng);
    dict.scale = std::sqrt(2.0 / static_cast<double>(features));
    return dict;
}

BbpDraw sample_bbp(Eigen::Index rows, Eigen::Index cols, double gamma, std::uint64_t seed) {
    require(rows >= 1 && cols >= 1, "sample_bbp: dimensions must be positive");
    require(gamma > 0.0 && std::isfinite(gamma), "sample_bbp: gamma must be positive");
    Rng rng = Rng::derive(seed, kBbpStream);
    BbpDraw draw;
    draw.gamma = gamma;
    draw.pi.resize(cols);
    draw.z.resize(rows, cols);
    const double shape = gamma / static_cast<double>(cols);
    for (Eigen::Index k = 0; k < cols; ++k) {
        draw.pi[k] = clamp_probability(rng.beta_a1(shape));
        for (Eigen::Index r = 0; r < rows; ++r) draw.z(r, k) = rng.bernoulli(draw.pi[k]) ? 1 : 0;
    }
    return draw;
}

double bbp_gamma_for_density(double density, Eigen::Index features) {
    require(density > 0.0 && density < 1.0, "bbp_gamma_for_density: density must lie in (0, 1)");
    return static_cast<double>(features) * density / (1.0 - density);
}

MaskedCerf build_masked_cerf(const DenseRff& base, double gamma, double target_density, int group_exponent,
                             std::uint64_t seed) {
    require(target_density > 0.0 && target_density <= 1.0, "build_masked_cerf: target density must lie in (0, 1]");
    require(gamma > 0.0 && std::isfinite(gamma), "build_masked_cerf: gamma must be positive");
    require(group_exponent >= 0 && group_exponent < 31, "build_masked_cerf: group exponent out of range");

    const Eigen::Index dim = base.input_dim();
    const Eigen::Index features = base.features();
    const Eigen::Index group = Eigen::Index{1} << group_exponent;
    const Eigen::Index groups = (dim + group - 1) / group;  // trailing group may cover zero padding
    const double target_groups = target_density * static_cast<double>(dim) / static_cast<double>(group);
    const double shape = gamma / static_cast<double>(features);

    MaskedCerf cerf;
    cerf.base = base;
    cerf.group_exponent = group_exponent;
    cerf.mask.setZero(dim, features);
    cerf.rho.resize(features);

    Rng rng = Rng::derive(seed, kMaskStream);
    std::vector<std::uint8_t> active(static_cast<std::size_t>(groups));
    constexpr int kMaxAttempts = 200000;
    for (Eigen::Index k = 0; k < features; ++k) {
        bool accepted = false;
        for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
            const double pi = target_density == 1.0 ? 1.0 : clamp_probability(rng.beta_a1(shape));
            Eigen::Index count = 0;
            for (Eigen::Index g = 0; g < groups; ++g) {
                active[g] = rng.bernoulli(pi) ? 1 : 0;
                count += active[g];
            }
            accepted = count >= 1 && std::abs(static_cast<double>(count) - target_groups) <= 1.0;
        }
        if (!accepted)
            fail_numerical("build_masked_cerf: could not reach the target density by rejection; "
                           "increase gamma towards bbp_gamma_for_density()");
        Eigen::Index ones = 0;
        for (Eigen::Index d = 0; d < dim; ++d) {
            cerf.mask(d, k) = active[d / group];
            ones += cerf.mask(d, k);
        }
        cerf.rho[k] = std::sqrt(static_cast<double>(dim) / static_cast<double>(std::max<Eigen::Index>(1, ones)));
    }
    return cerf;
}

BlockedCerf build_blocked_cerf(const KernelSpec& spec, Eigen::Index input_dim, int blocks, std::uint64_t seed) {
    spec.validate();
    require(spec.family == KernelFamily::gaussian, "build_blocked_cerf: Fastfood blocks target the gaussian kernel");
    require(input_dim >= 1 && blocks >= 1, "build_blocked_cerf: dimensions must be positive");

    Eigen::Index padded = 1;
    while (padded < input_dim) padded <<= 1;

    BlockedCerf cerf;
    cerf.input_dim = input_dim;
    cerf.padded_dim = padded;
    cerf.bandwidth = spec.bandwidth;
    Rng rng = Rng::derive(seed, kFastfoodStream);
    const auto d = static_cast<std::size_t>(padded);
    for (int j = 0; j < blocks; ++j) {
        FastfoodBlock block;
        block.sign.resize(d);
        for (auto& s : block.sign) s = rng.bernoulli(0.5) ? 1.0 : -1.0;
        block.perm.resize(d);
        for (std::size_t i = 0; i < d; ++i) block.perm[i] = static_cast<std::uint32_t>(i);
        for (std::size_t i = d; i > 1; --i) std::swap(block.perm[i - 1], block.perm[rng.below(i)]);
        block.gauss.resize(d);
        double frob = 0.0;
        for (auto& g : block.gauss) {
            g = rng.normal();
            frob += g * g;
        }
        frob = std::sqrt(frob);
        block.row_scale.resize(d);
        for (auto& s : block.row_scale) s = rng.chi(static_cast<int>(padded)) / frob;
        cerf.blocks.push_back(std::move(block));
    }
    cerf.phase = uniform_phases(cerf.features(), rng);
    cerf.scale = std::sqrt(2.0 / static_cast<double>(cerf.features()));
    return cerf;
}

}  // namespace cerf
