#include <cmath>
#include <span>
#include <string>

#include "cerf/error.hpp"
#include "cerf/features.hpp"
#include "cerf/parallel.hpp"

namespace cerf {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<Eigen::Index> active_list(const Embedding& e) {
    std::vector<Eigen::Index> list;
    const Eigen::Index k = e.features();
    for (Eigen::Index i = 0; i < k; ++i)
        if (e.active(i)) list.push_back(i);
    return list;
}

// Fastfood block with the 1 / (k sqrt(d)) constant folded into S.
struct PreparedBlock {
    const FastfoodBlock* block;
    std::vector<double> folded_scale;
};

std::vector<PreparedBlock> prepare_blocks(const BlockedCerf& cerf) {
    const double folded = 1.0 / (cerf.bandwidth * std::sqrt(static_cast<double>(cerf.padded_dim)));
    std::vector<PreparedBlock> out;
    for (const auto& block : cerf.blocks) {
        PreparedBlock p{&block, block.row_scale};
        for (auto& s : p.folded_scale) s *= folded;
        out.push_back(std::move(p));
    }
    return out;
}

// out = S H G Pi H B x for one block; returns the arithmetic count.
std::uint64_t apply_block(const PreparedBlock& p, std::span<const double> x, std::span<double> out,
                          std::span<double> scratch) {
    const FastfoodBlock& b = *p.block;
    const std::size_t d = out.size();
    std::uint64_t ops = 0;
    for (std::size_t i = 0; i < d; ++i) scratch[i] = b.sign[i] * x[i];
    ops += d;
    ops += numerics::fwht(scratch);
    for (std::size_t i = 0; i < d; ++i) out[i] = b.gauss[i] * scratch[b.perm[i]];
    ops += d;
    ops += numerics::fwht(out);
    for (std::size_t i = 0; i < d; ++i) out[i] *= p.folded_scale[i];
    ops += d;
    return ops;
}

void check_data(const Embedding& e, const Matrix& data) {
    if (data.cols() != e.input_dim())
        fail_argument("embed: data has " + std::to_string(data.cols()) + " columns, embedding expects " +
                      std::to_string(e.input_dim()));
    if (!data.allFinite()) fail_data("embed: data contains non-finite entries");
}

}  // namespace

Eigen::Index Embedding::input_dim() const {
    return std::visit(Overloaded{
                          [](const DenseRff& m) { return m.input_dim(); },
                          [](const MaskedCerf& m) { return m.base.input_dim(); },
                          [](const BlockedCerf& m) { return m.input_dim; },
                      },
                      map);
}

Eigen::Index Embedding::features() const {
    return std::visit(Overloaded{
                          [](const DenseRff& m) { return m.features(); },
                          [](const MaskedCerf& m) { return m.base.features(); },
                          [](const BlockedCerf& m) { return m.features(); },
                      },
                      map);
}

Eigen::Index Embedding::active_features() const {
    if (selector.empty()) return features();
    Eigen::Index count = 0;
    for (auto s : selector) count += s != 0;
    return count;
}

std::string Embedding::kind() const {
    return std::visit(Overloaded{
                          [](const DenseRff&) { return std::string("dense"); },
                          [](const MaskedCerf&) { return std::string("masked"); },
                          [](const BlockedCerf&) { return std::string("blocked"); },
                      },
                      map);
}

Matrix BlockedCerf::frequency_matrix() const {
    const auto prepared = prepare_blocks(*this);
    const auto d = static_cast<std::size_t>(padded_dim);
    Matrix xi(input_dim, features());
    std::vector<double> unit(d), out(d), scratch(d);
    for (std::size_t j = 0; j < prepared.size(); ++j) {
        for (Eigen::Index c = 0; c < input_dim; ++c) {
            std::fill(unit.begin(), unit.end(), 0.0);
            unit[static_cast<std::size_t>(c)] = 1.0;
            apply_block(prepared[j], unit, out, scratch);
            for (std::size_t i = 0; i < d; ++i) xi(c, static_cast<Eigen::Index>(j * d + i)) = out[i];
        }
    }
    return xi;
}

Matrix embed(const Embedding& embedding, const Matrix& data, OpCounter* counter) {
    if (!embedding.selector.empty() &&
        embedding.selector.size() != static_cast<std::size_t>(embedding.features()))
        fail_argument("embed: selector length does not match the feature count");
    check_data(embedding, data);
    const auto active = active_list(embedding);
    const Eigen::Index rows = data.rows();
    const Eigen::Index dim = embedding.input_dim();
    Matrix out(rows, static_cast<Eigen::Index>(active.size()));

    std::visit(
        Overloaded{
            [&](const DenseRff& rff) {
                parallel_for(static_cast<std::size_t>(rows), [&](std::size_t begin, std::size_t end) {
                    std::vector<double> x(static_cast<std::size_t>(dim));
                    std::uint64_t ops = 0;
                    for (std::size_t n = begin; n < end; ++n) {
                        for (Eigen::Index d = 0; d < dim; ++d) x[d] = data(static_cast<Eigen::Index>(n), d);
                        for (std::size_t c = 0; c < active.size(); ++c) {
                            const Eigen::Index k = active[c];
                            const double* w = rff.omega.col(k).data();
                            double proj = 0.0;
                            for (Eigen::Index d = 0; d < dim; ++d) proj += w[d] * x[d];
                            ops += static_cast<std::uint64_t>(dim);
                            out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) =
                                rff.scale * std::cos(proj + rff.phase[k]);
                        }
                    }
                    if (counter) counter->ops += ops;
                });
            },
            [&](const MaskedCerf& cerf) {
                std::vector<std::vector<Eigen::Index>> support(active.size());
                for (std::size_t c = 0; c < active.size(); ++c)
                    for (Eigen::Index d = 0; d < dim; ++d)
                        if (cerf.mask(d, active[c])) support[c].push_back(d);
                parallel_for(static_cast<std::size_t>(rows), [&](std::size_t begin, std::size_t end) {
                    std::vector<double> x(static_cast<std::size_t>(dim));
                    std::uint64_t ops = 0;
                    for (std::size_t n = begin; n < end; ++n) {
                        for (Eigen::Index d = 0; d < dim; ++d) x[d] = data(static_cast<Eigen::Index>(n), d);
                        for (std::size_t c = 0; c < active.size(); ++c) {
                            const Eigen::Index k = active[c];
                            const double* w = cerf.base.omega.col(k).data();
                            double proj = 0.0;
                            for (Eigen::Index d : support[c]) proj += w[d] * x[d];
                            ops += support[c].size();
                            out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) =
                                cerf.base.scale * std::cos(cerf.rho[k] * proj + cerf.base.phase[k]);
                        }
                    }
                    if (counter) counter->ops += ops;
                });
            },
            [&](const BlockedCerf& cerf) {
                const auto prepared = prepare_blocks(cerf);
                const auto d = static_cast<std::size_t>(cerf.padded_dim);
                // Output column of each feature, or -1 when inactive.
                std::vector<Eigen::Index> column(static_cast<std::size_t>(cerf.features()), -1);
                for (std::size_t c = 0; c < active.size(); ++c) column[active[c]] = static_cast<Eigen::Index>(c);
                std::vector<bool> block_used(prepared.size(), false);
                for (auto k : active) block_used[static_cast<std::size_t>(k) / d] = true;

                parallel_for(static_cast<std::size_t>(rows), [&](std::size_t begin, std::size_t end) {
                    std::vector<double> x(d, 0.0), y(d), scratch(d);
                    std::uint64_t ops = 0;
                    for (std::size_t n = begin; n < end; ++n) {
                        for (Eigen::Index i = 0; i < dim; ++i) x[i] = data(static_cast<Eigen::Index>(n), i);
                        for (std::size_t j = 0; j < prepared.size(); ++j) {
                            if (!block_used[j]) continue;
                            ops += apply_block(prepared[j], x, y, scratch);
                            for (std::size_t i = 0; i < d; ++i) {
                                const std::size_t k = j * d + i;
                                const Eigen::Index c = column[k];
                                if (c < 0) continue;
                                out(static_cast<Eigen::Index>(n), c) =
                                    cerf.scale * std::cos(y[i] + cerf.phase[static_cast<Eigen::Index>(k)]);
                            }
                        }
                    }
                    if (counter) counter->ops += ops;
                });
            },
        },
        embedding.map);
    return out;
}

std::uint64_t mac_cost(const Embedding& embedding) {
    return std::visit(
        Overloaded{
            [&](const DenseRff& rff) {
                return static_cast<std::uint64_t>(embedding.active_features()) *
                       static_cast<std::uint64_t>(rff.input_dim());
            },
            [&](const MaskedCerf& cerf) {
                std::uint64_t total = 0;
                for (Eigen::Index k = 0; k < cerf.base.features(); ++k)
                    if (embedding.active(k)) total += static_cast<std::uint64_t>(cerf.mask.col(k).cast<int>().sum());
                return total;
            },
            [&](const BlockedCerf& cerf) {
                const auto d = static_cast<std::uint64_t>(cerf.padded_dim);
                const auto log_d = static_cast<std::uint64_t>(numerics::log2_exact(cerf.padded_dim));
                std::uint64_t used = 0;
                for (std::size_t j = 0; j < cerf.blocks.size(); ++j) {
                    bool any = false;
                    for (std::uint64_t i = 0; i < d && !any; ++i) any = embedding.active(static_cast<Eigen::Index>(j * d + i));
                    used += any ? 1 : 0;
                }
                return used * (2 * d * log_d + 3 * d);
            },
        },
        embedding.map);
}

}  // namespace cerf
