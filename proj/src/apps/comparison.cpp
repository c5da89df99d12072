#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "cerf/apps.hpp"
#include "cerf/error.hpp"
#include "cerf/rng.hpp"

namespace cerf::apps {

namespace {

std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string brief(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

template <class T, class Parse>
T parse_cell(const std::string& cell, std::size_t line, const char* column, Parse parse) {
    try {
        std::size_t used = 0;
        const T v = parse(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        fail_data("report line " + std::to_string(line) + ": bad " + column + " '" + cell + "'");
    }
}

}  // namespace

void ComparisonReport::add(ReportRow row) {
    if (row.method.empty() || row.method.find_first_of(",\t\n\r") != std::string::npos)
        fail_argument("report: method name '" + row.method + "' is empty or contains a separator");
    if (row.metric.empty()) row.metric = metric_;
    if (metric_.empty()) metric_ = row.metric;
    if (row.metric != metric_)
        fail_argument("report: metric '" + row.metric + "' does not match the report metric '" + metric_ + "'");
    if (metric_.find_first_of(",\t\n\r") != std::string::npos) fail_argument("report: metric name contains a separator");
    rows_.push_back(std::move(row));
}

std::vector<ReportSummary> ComparisonReport::summarize() const {
    std::vector<ReportSummary> out;
    std::vector<std::vector<double>> values;
    for (const auto& r : rows_) {
        std::size_t i = 0;
        while (i < out.size() && !(out[i].method == r.method && out[i].density == r.density)) ++i;
        if (i == out.size()) {
            out.push_back(ReportSummary{r.method, r.density});
            values.emplace_back();
        }
        out[i].mac += static_cast<double>(r.mac);
        out[i].features += static_cast<double>(r.features);
        values[i].push_back(r.value);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& v = values[i];
        const double n = static_cast<double>(v.size());
        out[i].repeats = v.size();
        out[i].mac /= n;
        out[i].features /= n;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        out[i].mean = mean;
        out[i].stderr_ = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
    }
    return out;
}

double ComparisonReport::value(const std::string& method, double density, std::uint64_t seed) const {
    for (const auto& r : rows_)
        if (r.method == method && r.density == density && r.seed == seed) return r.value;
    fail_argument("report: no row for method '" + method + "', density " + number(density) + ", seed " +
                  std::to_string(seed));
}

std::string ComparisonReport::to_csv() const {
    std::string out = "method,mac,K,density,metric,value,seed\n";
    for (const auto& r : rows_)
        out += r.method + "," + std::to_string(r.mac) + "," + std::to_string(r.features) + "," + number(r.density) +
               "," + r.metric + "," + number(r.value) + "," + std::to_string(r.seed) + "\n";
    return out;
}

std::string ComparisonReport::to_tsv() const {
    std::string out = "# metric: " + metric_ + "\n# method\tdensity\tmac\tK\trepeats\tmean\tstderr\n";
    for (const auto& s : summarize())
        out += s.method + "\t" + number(s.density) + "\t" + number(s.mac) + "\t" + number(s.features) + "\t" +
               std::to_string(s.repeats) + "\t" + number(s.mean) + "\t" + number(s.stderr_) + "\n";
    return out;
}

ComparisonReport ComparisonReport::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t number_of_line = 0;
    ComparisonReport report;
    bool header = false;
    while (std::getline(in, line)) {
        ++number_of_line;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != "method,mac,K,density,metric,value,seed")
                fail_data("report line " + std::to_string(number_of_line) + ": expected the report header");
            header = true;
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != 7)
            fail_data("report line " + std::to_string(number_of_line) + ": expected 7 columns, got " +
                      std::to_string(cells.size()));
        ReportRow r;
        r.method = cells[0];
        r.mac = parse_cell<std::uint64_t>(cells[1], number_of_line, "mac",
                                          [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
        r.features = parse_cell<Eigen::Index>(cells[2], number_of_line, "K",
                                              [](const std::string& s, std::size_t* u) { return std::stoll(s, u); });
        r.density = parse_cell<double>(cells[3], number_of_line, "density",
                                       [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
        r.metric = cells[4];
        r.value = parse_cell<double>(cells[5], number_of_line, "value",
                                     [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
        r.seed = parse_cell<std::uint64_t>(cells[6], number_of_line, "seed",
                                           [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
        try {
            report.add(std::move(r));
        } catch (const Error& e) {
            fail_data("report line " + std::to_string(number_of_line) + ": " + e.what());
        }
    }
    if (!header) fail_data("report is empty");
    return report;
}

ProtocolConfig::ProtocolConfig() {
    train.sigma2 = 0.1;
    train.admm.max_iters = 50;
}

void ProtocolConfig::validate() const {
    require(input_dim >= 2 && latent_dim >= 1, "protocol: dimensions must be positive (D >= 2)");
    require(train_samples >= 2 && eval_samples >= 2, "protocol: need at least two train and eval rows");
    require(noise >= 0.0 && std::isfinite(noise), "protocol: noise must be nonnegative");
    require(bandwidth >= 0.0 && std::isfinite(bandwidth), "protocol: bandwidth must be nonnegative (0 = median)");
    require(second_bandwidth > 0.0 && std::isfinite(second_bandwidth), "protocol: second bandwidth must be positive");
    require(first_factor != KernelFamily::product, "protocol: the first factor must be gaussian or cauchy");
    require(teacher_features >= 1 && reference_features >= 1 && dictionary_features >= 1,
            "protocol: feature counts must be positive");
    require(teacher_features == dictionary_features, "protocol: teacher and learner must have the same K");
    require(components >= 1 && spread >= 0.0, "protocol: dictionary components must be positive, spread >= 0");
    require(mask_density > 0.0 && mask_density <= 1.0, "protocol: mask density must lie in (0, 1]");
    require(group_exponent >= 0 && (Eigen::Index{1} << group_exponent) <= input_dim,
            "protocol: group size must not exceed D");
    require(!budgets.empty() && !seeds.empty(), "protocol: budgets and seeds must be non-empty");
    for (double b : budgets) require(b > 0.0 && b <= 1.0, "protocol: budgets must lie in (0, 1]");
    require(missing_fraction > 0.0 && missing_fraction < 1.0, "protocol: missing fraction must lie in (0, 1)");
    require(kernel_task || autoencoder_task || completion_task, "protocol: no task selected");
    train.validate();
}

ProtocolResult run_protocol(const ProtocolConfig& config, const ProgressSink& progress) {
    config.validate();
    auto say = [&](const std::string& msg) {
        if (progress) progress(msg);
    };

    const Dataset all = make_manifold(config.train_samples + config.eval_samples, config.input_dim,
                                      config.latent_dim, config.noise, config.data_seed);
    const Matrix x_train = all.X.topRows(config.train_samples);
    const Dataset eval{all.X.bottomRows(config.eval_samples), {}};
    const Eigen::Index D = config.input_dim;

    ProtocolResult result;
    result.bandwidth = config.bandwidth > 0.0 ? config.bandwidth : median_bandwidth(eval.X);
    KernelSpec teacher_spec{KernelFamily::product, result.bandwidth, config.first_factor, config.second_bandwidth};
    teacher_spec.validate();
    const KernelSpec base = teacher_spec.base_density();

    Matrix reference;
    if (config.kernel_task) {
        say("reference gram: " + std::to_string(config.reference_features) + " features");
        reference = reference_gram(teacher_spec, eval.X, config.reference_features,
                                   Rng::derive(config.data_seed, 0x7ef).next_u64());
    }
    const bool downstream = config.autoencoder_task || config.completion_task;
    const double mask_gamma = bbp_gamma_for_density(config.mask_density, config.dictionary_features);
    auto note = [&result](const cvem::TrainedCerf& t) {
        const Eigen::Index K = t.W.rows();
        ++result.trainings;
        result.max_orthogonality_error = std::max(result.max_orthogonality_error,
                                                  (t.W.transpose() * t.W - Matrix::Identity(K, K)).norm());
    };

    for (std::uint64_t seed : config.seeds) {
        auto stream = [seed](std::uint64_t k) { return Rng::derive(seed, k).next_u64(); };
        const Embedding teacher{sample_rff(teacher_spec, D, config.teacher_features, stream(1)), {}};
        const Matrix phi = embed(teacher, x_train);

        Embedding dictionary, masked;
        Matrix psi_dict, psi_mask;
        if (config.kernel_task) {
            dictionary.map = sample_learner_dictionary(base, D, config.dictionary_features, config.components,
                                                       config.spread, stream(2));
            psi_dict = embed(dictionary, x_train);
        }
        if (downstream) {
            const DenseRff dense = sample_rff(base, D, config.dictionary_features, stream(3));
            masked.map = build_masked_cerf(dense, mask_gamma, config.mask_density, config.group_exponent, stream(4));
            psi_mask = embed(masked, x_train);
        }

        for (std::size_t b = 0; b < config.budgets.size(); ++b) {
            const double budget = config.budgets[b];
            cvem::TrainConfig cfg = config.train;
            cfg.target_density = budget;
            cfg.seed = seed;
            const std::string tag = "seed " + std::to_string(seed) + " budget " + brief(budget);

            if (config.kernel_task) {
                const auto trained = cvem::train(phi, psi_dict, dictionary, cfg);
                note(trained);
                const Eigen::Index k_rff = equal_mac_budget(trained.learner, D);
                const Embedding rff{sample_rff(base, D, k_rff, stream(10 + b)), {}};
                const double e_cerf = kernel_approx_error(reference, gram(trained_features(trained, eval.X)), true);
                const double e_rff = kernel_approx_error(reference, gram(embed(rff, eval.X)), true);
                result.kernel.add({"cerf", mac_cost(trained.learner), trained.learner.active_features(), budget,
                                   "kernel_error", e_cerf, seed});
                result.kernel.add({"rff", mac_cost(rff), k_rff, budget, "kernel_error", e_rff, seed});
                say(tag + " kernel: cerf " + brief(e_cerf) + " rff " + brief(e_rff));
            }
            if (downstream) {
                const auto trained = cvem::train(phi, psi_mask, masked, cfg);
                note(trained);
                const Eigen::Index k_rff = equal_mac_budget(trained.learner, D);
                const Embedding rff{sample_rff(base, D, k_rff, stream(20 + b)), {}};
                EvalOptions options = config.eval;
                options.seed = stream(30 + b);
                const FeatureFn f_cerf = feature_fn(trained);
                const FeatureFn f_rff = feature_fn(rff);
                if (config.autoencoder_task) {
                    const double e_cerf = autoencoder_eval(eval, f_cerf, options);
                    const double e_rff = autoencoder_eval(eval, f_rff, options);
                    result.autoencoder.add({"cerf", mac_cost(trained.learner), trained.learner.active_features(),
                                            budget, "autoencoder_error", e_cerf, seed});
                    result.autoencoder.add({"rff", mac_cost(rff), k_rff, budget, "autoencoder_error", e_rff, seed});
                    say(tag + " autoencoder: cerf " + brief(e_cerf) + " rff " + brief(e_rff));
                }
                if (config.completion_task) {
                    const double e_cerf = completion_eval(eval, f_cerf, config.missing_fraction, options);
                    const double e_rff = completion_eval(eval, f_rff, config.missing_fraction, options);
                    result.completion.add({"cerf", mac_cost(trained.learner), trained.learner.active_features(),
                                           budget, "completion_error", e_cerf, seed});
                    result.completion.add({"rff", mac_cost(rff), k_rff, budget, "completion_error", e_rff, seed});
                    say(tag + " completion: cerf " + brief(e_cerf) + " rff " + brief(e_rff));
                }
            }
        }
    }
    return result;
}

}  // namespace cerf::apps
