#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"

#include "cerf/error.hpp"
#include "cerf/io.hpp"

namespace cerf::io {

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const json& j, const std::string& what) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
        fail_data("archive: " + what + " has " + std::to_string(data.size()) + " entries for a " +
                  std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json dense_json(const DenseRff& rff) {
    return json{{"omega", matrix_json(rff.omega)}, {"phase", vector_json(rff.phase)}, {"scale", rff.scale}};
}

DenseRff dense_from(const json& j) {
    DenseRff rff;
    rff.omega = matrix_from(j.at("omega"), "omega");
    rff.phase = vector_from(j.at("phase"));
    rff.scale = j.at("scale").get<double>();
    return rff;
}

// One string of '0'/'1' per feature column.
json mask_json(const Mask& mask) {
    std::vector<std::string> cols;
    for (Eigen::Index k = 0; k < mask.cols(); ++k) {
        std::string s(static_cast<std::size_t>(mask.rows()), '0');
        for (Eigen::Index d = 0; d < mask.rows(); ++d)
            if (mask(d, k)) s[static_cast<std::size_t>(d)] = '1';
        cols.push_back(std::move(s));
    }
    return cols;
}

Mask mask_from(const json& j, Eigen::Index rows) {
    const auto cols = j.get<std::vector<std::string>>();
    Mask mask(rows, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (static_cast<Eigen::Index>(cols[k].size()) != rows)
            fail_data("archive: mask column " + std::to_string(k) + " has length " + std::to_string(cols[k].size()) +
                      ", expected " + std::to_string(rows));
        for (Eigen::Index d = 0; d < rows; ++d) {
            const char c = cols[k][static_cast<std::size_t>(d)];
            if (c != '0' && c != '1') fail_data("archive: mask entries must be 0 or 1");
            mask(d, static_cast<Eigen::Index>(k)) = c == '1';
        }
    }
    return mask;
}

json kernel_json(const KernelSpec& spec) {
    return json{{"family", to_string(spec.family)},
                {"bandwidth", spec.bandwidth},
                {"first_factor", to_string(spec.first_factor)},
                {"second_bandwidth", spec.second_bandwidth}};
}

KernelSpec kernel_from(const json& j) {
    KernelSpec spec;
    spec.family = parse_kernel_family(j.at("family").get<std::string>());
    spec.bandwidth = j.at("bandwidth").get<double>();
    spec.first_factor = parse_kernel_family(j.at("first_factor").get<std::string>());
    spec.second_bandwidth = j.at("second_bandwidth").get<double>();
    spec.validate();
    return spec;
}

json map_json(const Embedding& e) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseRff>) {
                return dense_json(m);
            } else if constexpr (std::is_same_v<T, MaskedCerf>) {
                return json{{"base", dense_json(m.base)},
                            {"mask", mask_json(m.mask)},
                            {"rho", vector_json(m.rho)},
                            {"group_exponent", m.group_exponent}};
            } else {
                json blocks = json::array();
                for (const auto& b : m.blocks)
                    blocks.push_back(json{{"sign", b.sign}, {"perm", b.perm}, {"gauss", b.gauss}, {"row_scale", b.row_scale}});
                return json{{"input_dim", m.input_dim}, {"padded_dim", m.padded_dim}, {"bandwidth", m.bandwidth},
                            {"scale", m.scale},         {"phase", vector_json(m.phase)}, {"blocks", blocks}};
            }
        },
        e.map);
}

void check_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) fail_data("archive: " + what + " contains non-finite values");
}

void validate_dense(const DenseRff& rff, const std::string& what) {
    if (rff.omega.rows() < 1 || rff.omega.cols() < 1) fail_data("archive: " + what + " frequency matrix is empty");
    if (rff.phase.size() != rff.omega.cols())
        fail_data("archive: " + what + " has " + std::to_string(rff.phase.size()) + " phases for " +
                  std::to_string(rff.omega.cols()) + " features");
    check_finite(rff.omega, what + " omega");
    check_finite(rff.phase, what + " phase");
    if (!(rff.scale > 0.0) || !std::isfinite(rff.scale)) fail_data("archive: " + what + " scale must be positive");
}

}  // namespace

void Archive::validate() const {
    std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DenseRff>) {
                validate_dense(m, "dense map");
            } else if constexpr (std::is_same_v<T, MaskedCerf>) {
                validate_dense(m.base, "masked base");
                if (m.mask.rows() != m.base.input_dim() || m.mask.cols() != m.base.features())
                    fail_data("archive: mask shape does not match the base map");
                if (m.rho.size() != m.base.features()) fail_data("archive: rho has the wrong length");
                check_finite(m.rho, "rho");
                if (m.group_exponent < 0) fail_data("archive: group exponent is negative");
            } else {
                const auto d = m.padded_dim;
                if (m.input_dim < 1 || d < m.input_dim || (d & (d - 1)) != 0)
                    fail_data("archive: blocked map needs a power-of-two padded dimension >= input dimension");
                if (m.blocks.empty()) fail_data("archive: blocked map has no blocks");
                if (m.phase.size() != m.features()) fail_data("archive: blocked map phase has the wrong length");
                if (!(m.bandwidth > 0.0) || !(m.scale > 0.0)) fail_data("archive: blocked map scales must be positive");
                const auto n = static_cast<std::size_t>(d);
                for (const auto& b : m.blocks) {
                    if (b.sign.size() != n || b.perm.size() != n || b.gauss.size() != n || b.row_scale.size() != n)
                        fail_data("archive: Fastfood block vectors must have the padded length");
                    std::vector<std::uint32_t> sorted = b.perm;
                    std::sort(sorted.begin(), sorted.end());
                    for (std::size_t i = 0; i < n; ++i)
                        if (sorted[i] != i) fail_data("archive: Fastfood permutation is not a permutation");
                }
            }
        },
        embedding.map);
    const auto K = embedding.features();
    if (!embedding.selector.empty() && static_cast<Eigen::Index>(embedding.selector.size()) != K)
        fail_data("archive: selector has " + std::to_string(embedding.selector.size()) + " entries for " +
                  std::to_string(K) + " features");
    if (embedding.active_features() < 1) fail_data("archive: no feature is active");
    if (trained) {
        if (W.rows() != K || W.cols() != K)
            fail_data("archive: W must be " + std::to_string(K) + "x" + std::to_string(K));
        check_finite(W, "W");
        if (!(c > 0.0) || !std::isfinite(c)) fail_data("archive: c must be positive");
    }
}

Eigen::Index Archive::output_dim() const { return trained ? W.rows() : embedding.active_features(); }

Matrix Archive::features(const Matrix& X) const {
    const Matrix psi = embed(embedding, X);
    if (!trained) return psi;
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < embedding.features(); ++k)
        if (embedding.active(k)) active.push_back(k);
    return c * psi * W(Eigen::all, active).transpose();
}

Archive archive_from_trained(const cvem::TrainedCerf& trained) {
    Archive a;
    a.embedding = trained.learner;
    a.embedding.selector = trained.z;
    a.trained = true;
    a.W = trained.W;
    a.c = trained.c;
    a.diagnostics = trained.diagnostics;
    return a;
}

std::string archive_to_json(const Archive& archive) {
    archive.validate();
    json j;
    j["format"] = kArchiveFormat;
    j["kind"] = archive.embedding.kind();
    j["map"] = map_json(archive.embedding);
    j["selector"] = std::vector<int>(archive.embedding.selector.begin(), archive.embedding.selector.end());
    if (archive.kernel) j["kernel"] = kernel_json(*archive.kernel);
    j["seeds"] = archive.seeds;
    if (archive.trained) {
        json trace = json::array();
        for (const auto& r : archive.diagnostics.trace)
            trace.push_back(json{{"stage", r.stage}, {"elbo", r.elbo}, {"residual", r.residual},
                                 {"spectral_norm_W", r.spectral_norm_W}, {"alpha", r.alpha}});
        j["trained"] = json{{"c", archive.c},
                            {"W", matrix_json(archive.W)},
                            {"em_stages", archive.diagnostics.em_stages},
                            {"admm_iterations", archive.diagnostics.admm_iterations},
                            {"residual", archive.diagnostics.residual},
                            {"trace", trace}};
    }
    return j.dump(1) + "\n";
}

Archive archive_from_json(const std::string& text) {
    Archive a;
    try {
        const json j = json::parse(text);
        const auto format = j.at("format").get<std::string>();
        if (format != kArchiveFormat)
            fail_data("archive: format '" + format + "' is not supported (expected " + kArchiveFormat + ")");
        const auto kind = j.at("kind").get<std::string>();
        const json& m = j.at("map");
        if (kind == "dense") {
            a.embedding.map = dense_from(m);
        } else if (kind == "masked") {
            MaskedCerf masked;
            masked.base = dense_from(m.at("base"));
            masked.mask = mask_from(m.at("mask"), masked.base.input_dim());
            masked.rho = vector_from(m.at("rho"));
            masked.group_exponent = m.at("group_exponent").get<int>();
            a.embedding.map = std::move(masked);
        } else if (kind == "blocked") {
            BlockedCerf blocked;
            blocked.input_dim = m.at("input_dim").get<Eigen::Index>();
            blocked.padded_dim = m.at("padded_dim").get<Eigen::Index>();
            blocked.bandwidth = m.at("bandwidth").get<double>();
            blocked.scale = m.at("scale").get<double>();
            blocked.phase = vector_from(m.at("phase"));
            for (const auto& b : m.at("blocks"))
                blocked.blocks.push_back(FastfoodBlock{b.at("sign").get<std::vector<double>>(),
                                                       b.at("perm").get<std::vector<std::uint32_t>>(),
                                                       b.at("gauss").get<std::vector<double>>(),
                                                       b.at("row_scale").get<std::vector<double>>()});
            a.embedding.map = std::move(blocked);
        } else {
            fail_data("archive: unknown embedding kind '" + kind + "'");
        }
        for (int s : j.at("selector").get<std::vector<int>>()) {
            if (s != 0 && s != 1) fail_data("archive: selector entries must be 0 or 1");
            a.embedding.selector.push_back(static_cast<std::uint8_t>(s));
        }
        if (j.contains("kernel")) a.kernel = kernel_from(j.at("kernel"));
        a.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
        if (j.contains("trained")) {
            const json& t = j.at("trained");
            a.trained = true;
            a.c = t.at("c").get<double>();
            a.W = matrix_from(t.at("W"), "W");
            a.diagnostics.em_stages = t.at("em_stages").get<int>();
            a.diagnostics.admm_iterations = t.at("admm_iterations").get<int>();
            a.diagnostics.residual = t.at("residual").get<double>();
            for (const auto& r : t.at("trace"))
                a.diagnostics.trace.push_back(cvem::StageRecord{r.at("stage").get<int>(), r.at("elbo").get<double>(),
                                                                r.at("residual").get<double>(),
                                                                r.at("spectral_norm_W").get<double>(),
                                                                r.at("alpha").get<double>()});
        }
    } catch (const json::exception& e) {
        fail_data(std::string("archive: ") + e.what());
    }
    a.validate();
    return a;
}

void save_archive(const std::string& path, const Archive& archive) { write_file(path, archive_to_json(archive)); }

Archive load_archive(const std::string& path) {
    try {
        return archive_from_json(read_file(path));
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

}  // namespace cerf::io
