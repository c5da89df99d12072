#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "cerf/error.hpp"
#include "cerf/io.hpp"
#include "cerf/parallel.hpp"
#include "cerf/rng.hpp"

#ifndef CERF_VERSION
#define CERF_VERSION "0.0.0"
#endif

namespace cerf::io {

namespace {

namespace fs = std::filesystem;
using VT = ValueType;

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string number(double v) {
    // Shortest text that parses back to v.
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    return std::string(buf, end);
}

std::string default_lambdas() {
    std::string out;
    for (double l : apps::default_lambda_grid()) out += (out.empty() ? "" : ",") + number(l);
    return out;
}

// Keys shared by every command that reads a data file.
Schema data_keys(const std::string& section) {
    return {
        {section + ".data", VT::text, "", "input data file"},
        {section + ".format", VT::text, "csv", "csv (dense, no header) or libsvm"},
        {section + ".dim", VT::integer, "0", "input dimension of a libsvm file"},
        {section + ".has_label", VT::boolean, "false", "csv: the last column is an integer label"},
    };
}

Schema label_keys() {
    return {
        {"report.method", VT::text, "", "method name in the report (default: embedding kind)"},
        {"report.seed", VT::unsigned_integer, "0", "seed column of the report row"},
        {"report.density", VT::real, "-1", "density column (< 0: fraction of active features)"},
    };
}

Schema eval_keys(bool completion) {
    Schema s = data_keys("eval");
    s.push_back({"eval.embedding", VT::text, "", "embedding archive"});
    s.push_back({"eval.components", VT::integer, "15", "rkpca components J"});
    s.push_back({"eval.folds", VT::integer, "5", "cross-validation folds"});
    s.push_back({"eval.seed", VT::unsigned_integer, "0", "split and fold seed"});
    s.push_back({"eval.lambdas", VT::real_list, default_lambdas(), "ridge lambda grid"});
    if (completion) s.push_back({"eval.missing_fraction", VT::real, "0.2", "fraction of hidden coordinates"});
    for (auto& k : label_keys()) s.push_back(k);
    return s;
}

Schema cvem_keys(const cvem::TrainConfig& d) {
    return {
        {"cvem.c", VT::real, number(d.c), "output scale (0: sqrt(K / K'))"},
        {"cvem.sigma2", VT::real, number(d.sigma2), "noise variance"},
        {"cvem.gamma", VT::real, number(d.gamma), "BBP mass (0: prior mean equals target density)"},
        {"cvem.target_density", VT::real, number(d.target_density), "selected fraction K'/K"},
        {"cvem.max_stages", VT::integer, std::to_string(d.max_stages), "EM stages"},
        {"cvem.e_sweeps", VT::integer, std::to_string(d.e_sweeps), "E-step sweeps per stage"},
        {"cvem.post_stages", VT::integer, std::to_string(d.post_stages), "E-step-only stages after orthogonalization"},
        {"cvem.seed", VT::unsigned_integer, std::to_string(d.seed), "training seed"},
        {"admm.mu", VT::real, number(d.admm.mu), "initial ADMM penalty"},
        {"admm.alpha0", VT::real, number(d.admm.alpha0), "initial spectral penalty"},
        {"admm.max_iters", VT::integer, std::to_string(d.admm.max_iters), "ADMM iterations per M-step"},
        {"admm.primal_tol", VT::real, number(d.admm.primal_tol), "ADMM residual tolerance"},
        {"admm.hull", VT::boolean, d.admm.hull ? "true" : "false", "keep iterates in the spectral unit ball"},
    };
}

cvem::TrainConfig train_config(const Settings& s) {
    cvem::TrainConfig cfg;
    cfg.c = s.real("cvem.c");
    cfg.sigma2 = s.real("cvem.sigma2");
    cfg.gamma = s.real("cvem.gamma");
    cfg.target_density = s.real("cvem.target_density");
    cfg.max_stages = static_cast<int>(s.integer("cvem.max_stages"));
    cfg.e_sweeps = static_cast<int>(s.integer("cvem.e_sweeps"));
    cfg.post_stages = static_cast<int>(s.integer("cvem.post_stages"));
    cfg.seed = s.unsigned_integer("cvem.seed");
    cfg.admm.mu = s.real("admm.mu");
    cfg.admm.alpha0 = s.real("admm.alpha0");
    cfg.admm.max_iters = static_cast<int>(s.integer("admm.max_iters"));
    cfg.admm.primal_tol = s.real("admm.primal_tol");
    cfg.admm.hull = s.flag("admm.hull");
    cfg.validate();
    return cfg;
}

Schema protocol_keys() {
    const apps::ProtocolConfig d;
    Schema s = {
        {"protocol.input_dim", VT::integer, std::to_string(d.input_dim), "data dimension D"},
        {"protocol.latent_dim", VT::integer, std::to_string(d.latent_dim), "manifold dimension"},
        {"protocol.train_samples", VT::integer, std::to_string(d.train_samples), "CVEM training rows"},
        {"protocol.eval_samples", VT::integer, std::to_string(d.eval_samples), "evaluation rows"},
        {"protocol.noise", VT::real, number(d.noise), "additive data noise"},
        {"protocol.data_seed", VT::unsigned_integer, std::to_string(d.data_seed), "data seed"},
        {"protocol.bandwidth", VT::real, number(d.bandwidth), "kernel bandwidth (0: median heuristic)"},
        {"protocol.first_factor", VT::text, to_string(d.first_factor), "first product factor"},
        {"protocol.second_bandwidth", VT::real, number(d.second_bandwidth), "second product factor bandwidth"},
        {"protocol.teacher_features", VT::integer, std::to_string(d.teacher_features), "teacher K"},
        {"protocol.reference_features", VT::integer, std::to_string(d.reference_features), "reference gram features"},
        {"protocol.dictionary_features", VT::integer, std::to_string(d.dictionary_features), "learner K"},
        {"protocol.components", VT::integer, std::to_string(d.components), "dictionary mixture components"},
        {"protocol.spread", VT::real, number(d.spread), "dictionary mixture spread"},
        {"protocol.mask_density", VT::real, number(d.mask_density), "masked learner density"},
        {"protocol.group_exponent", VT::integer, std::to_string(d.group_exponent), "mask group size 2^e"},
        {"protocol.budgets", VT::real_list, "0.2,0.4", "budgets K'/K"},
        {"protocol.seeds", VT::integer_list, "1,2,3", "repeat seeds"},
        {"protocol.kernel_task", VT::boolean, "true", "run the kernel approximation task"},
        {"protocol.autoencoder_task", VT::boolean, "true", "run the autoencoder task"},
        {"protocol.completion_task", VT::boolean, "true", "run the completion task"},
        {"protocol.missing_fraction", VT::real, number(d.missing_fraction), "completion missing fraction"},
        {"eval.components", VT::integer, std::to_string(d.eval.components), "rkpca components J"},
        {"eval.folds", VT::integer, std::to_string(d.eval.folds), "cross-validation folds"},
        {"eval.lambdas", VT::real_list, default_lambdas(), "ridge lambda grid"},
    };
    for (auto& k : cvem_keys(d.train))
        if (k.name != "cvem.target_density" && k.name != "cvem.seed") s.push_back(k);
    return s;
}

struct Command {
    std::string help;
    Schema schema;
    std::string seed_key;  // principal seed recorded in the manifest
};

const std::map<std::string, Command>& commands() {
    static const std::map<std::string, Command> table = [] {
        std::map<std::string, Command> t;
        t["gen-data"] = {"generate a synthetic dataset (manifold, blobs, or planted teacher-learner)",
                         {{"data.kind", VT::text, "manifold", "manifold, blobs, or planted"},
                          {"data.samples", VT::integer, "300", "rows"},
                          {"data.dim", VT::integer, "16", "columns D"},
                          {"data.latent", VT::integer, "4", "manifold dimension"},
                          {"data.noise", VT::real, "0.05", "manifold noise"},
                          {"data.classes", VT::integer, "3", "blob classes"},
                          {"data.separation", VT::real, "3", "blob centre scale"},
                          {"data.seed", VT::unsigned_integer, "1", "seed"},
                          {"planted.features", VT::integer, "64", "planted K"},
                          {"planted.density", VT::real, "0.4", "planted selector density"},
                          {"planted.bandwidth", VT::real, "1", "planted learner bandwidth"}},
                         "data.seed"};

        Schema sample = {
            {"embedding.kind", VT::text, "dense", "dense, dictionary, masked, or blocked"},
            {"embedding.input_dim", VT::integer, "0", "D (0: taken from embedding.data)"},
            {"embedding.data", VT::text, "", "optional csv for D and the median bandwidth"},
            {"embedding.has_label", VT::boolean, "false", "the csv has a label column"},
            {"embedding.features", VT::integer, "256", "features K"},
            {"embedding.density", VT::real, "0.4", "masked: target mask density"},
            {"embedding.gamma", VT::real, "0", "masked: BBP mass (0: matches the density)"},
            {"embedding.group_exponent", VT::integer, "0", "masked: group size 2^e"},
            {"embedding.blocks", VT::integer, "4", "blocked: Fastfood blocks"},
            {"embedding.components", VT::integer, "32", "dictionary: mixture components"},
            {"embedding.spread", VT::real, "0.1", "dictionary: mixture spread"},
            {"embedding.seed", VT::unsigned_integer, "1", "seed"},
            {"kernel.family", VT::text, "gaussian", "gaussian, cauchy, or product"},
            {"kernel.bandwidth", VT::real, "0", "bandwidth (0: median heuristic on embedding.data)"},
            {"kernel.first_factor", VT::text, "gaussian", "product: first factor"},
            {"kernel.second_bandwidth", VT::real, "1", "product: second factor bandwidth"},
        };
        t["sample"] = {"sample a random feature embedding archive", sample, "embedding.seed"};

        Schema train = data_keys("train");
        train.push_back({"train.teacher", VT::text, "", "teacher archive"});
        train.push_back({"train.learner", VT::text, "", "learner archive (untrained)"});
        for (auto& k : cvem_keys(cvem::TrainConfig{})) train.push_back(k);
        t["train"] = {"train a CERF against a teacher embedding", train, "cvem.seed"};

        Schema approx = data_keys("approx");
        approx.push_back({"approx.teacher", VT::text, "", "teacher archive"});
        approx.push_back({"approx.learner", VT::text, "", "learner archive"});
        approx.push_back({"approx.normalize", VT::boolean, "true", "divide by the mean |teacher gram|"});
        for (auto& k : label_keys()) approx.push_back(k);
        t["eval-approx"] = {"kernel approximation error between two embeddings", approx, "report.seed"};

        t["eval-autoencoder"] = {"rkpca + ridge reconstruction error", eval_keys(false), "eval.seed"};
        t["eval-completion"] = {"rkpca + ridge completion error", eval_keys(true), "eval.seed"};
        t["eval-classify"] = {"ridge classification accuracy", eval_keys(false), "eval.seed"};
        t["report"] = {"aggregate report CSVs into a TSV summary",
                       {{"report.inputs", VT::text, "", "comma-separated report CSV files"}},
                       ""};
        t["compare"] = {"equal-MAC CERF vs RFF comparison on the synthetic protocol", protocol_keys(),
                        "protocol.data_seed"};
        return t;
    }();
    return table;
}

// ---------------------------------------------------------------------------

struct Context {
    const Settings& settings;
    fs::path out_dir;
    std::ostream& out;
    std::ostream& err;
    std::vector<std::string> written;

    void write(const std::string& name, const std::string& contents) {
        write_file((out_dir / name).string(), contents);
        written.push_back(name);
    }
};

std::string required_text(const Settings& s, const std::string& key) {
    const std::string& v = s.text(key);
    if (v.empty()) fail_argument("'" + key + "' is required");
    return v;
}

apps::Dataset load_data(const Settings& s, const std::string& section) {
    const std::string path = required_text(s, section + ".data");
    const std::string& format = s.text(section + ".format");
    if (format == "csv") return to_dataset(load_dense_csv(path, s.flag(section + ".has_label")));
    if (format == "libsvm") {
        const auto dim = s.integer(section + ".dim");
        if (dim < 1) fail_argument("'" + section + ".dim' must be positive for libsvm input");
        return to_dataset(load_libsvm(path, dim));
    }
    fail_argument("'" + section + ".format' must be csv or libsvm, got '" + format + "'");
}

Archive load_embedding(const Settings& s, const std::string& key, Eigen::Index input_dim) {
    const Archive a = load_archive(required_text(s, key));
    if (a.input_dim() != input_dim)
        fail_data("'" + key + "' expects D = " + std::to_string(a.input_dim()) + " but the data has D = " +
                  std::to_string(input_dim));
    return a;
}

apps::ReportRow report_row(const Settings& s, const Archive& a, const std::string& metric, double value) {
    apps::ReportRow row;
    row.method = s.text("report.method").empty() ? (a.trained ? "cerf-" : "") + a.embedding.kind()
                                                 : s.text("report.method");
    row.mac = static_cast<double>(a.mac());
    row.features = static_cast<double>(a.embedding.active_features());
    const double d = s.real("report.density");
    row.density = d >= 0.0 ? d
                           : static_cast<double>(a.embedding.active_features()) /
                                 static_cast<double>(a.embedding.features());
    row.metric = metric;
    row.value = value;
    row.seed = s.unsigned_integer("report.seed");
    return row;
}

void emit_report(Context& ctx, const std::string& stem, const apps::ComparisonReport& report) {
    ctx.write(stem + ".csv", report.to_csv());
    ctx.write(stem + ".tsv", report.to_tsv());
}

KernelSpec kernel_spec(const Settings& s, const apps::Dataset* data) {
    KernelSpec spec;
    spec.family = parse_kernel_family(s.text("kernel.family"));
    spec.bandwidth = s.real("kernel.bandwidth");
    spec.first_factor = parse_kernel_family(s.text("kernel.first_factor"));
    spec.second_bandwidth = s.real("kernel.second_bandwidth");
    if (spec.bandwidth == 0.0) {
        if (!data) fail_argument("'kernel.bandwidth' is 0 (median heuristic) but no 'embedding.data' was given");
        spec.bandwidth = apps::median_bandwidth(data->X);
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(Context& ctx) {
    const Settings& s = ctx.settings;
    const std::string& kind = s.text("data.kind");
    const auto samples = s.integer("data.samples");
    const auto dim = s.integer("data.dim");
    const auto seed = s.unsigned_integer("data.seed");
    require(samples >= 1 && dim >= 1, "gen-data: samples and dim must be positive");
    if (kind == "manifold") {
        const auto data = apps::make_manifold(samples, dim, s.integer("data.latent"), s.real("data.noise"), seed);
        ctx.write("data.csv", format_dense_csv(data.X));
    } else if (kind == "blobs") {
        const auto data = apps::make_blobs(samples, dim, static_cast<int>(s.integer("data.classes")),
                                           s.real("data.separation"), seed);
        ctx.write("data.csv", format_dense_csv(data.X, data.labels));
    } else if (kind == "planted") {
        // Teacher = c W* (z* (.) psi) for a random orthogonal W* and selector z*.
        const auto K = s.integer("planted.features");
        const double density = s.real("planted.density");
        require(K >= 1, "gen-data: planted.features must be positive");
        Rng rng = Rng::derive(seed, 1);
        Matrix X(samples, dim);
        for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = rng.normal();
        const KernelSpec spec{KernelFamily::gaussian, s.real("planted.bandwidth")};
        spec.validate();
        Archive learner;
        learner.embedding.map = sample_rff(spec, dim, K, Rng::derive(seed, 2).next_u64());
        learner.kernel = spec;
        learner.seeds = {{"data", seed}};

        Matrix G(K, K);
        for (Eigen::Index i = 0; i < G.size(); ++i) G(i) = rng.normal();
        const auto active = cvem::selected_count(density, K);
        std::vector<Eigen::Index> order(static_cast<std::size_t>(K));
        for (Eigen::Index k = 0; k < K; ++k) order[static_cast<std::size_t>(k)] = k;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        Archive teacher = learner;
        teacher.trained = true;
        teacher.W = numerics::nearest_orthogonal(G);
        teacher.c = std::sqrt(static_cast<double>(K) / static_cast<double>(active));
        teacher.embedding.selector.assign(static_cast<std::size_t>(K), 0);
        for (Eigen::Index i = 0; i < active; ++i) teacher.embedding.selector[static_cast<std::size_t>(order[i])] = 1;

        ctx.write("data.csv", format_dense_csv(X));
        ctx.write("learner.json", archive_to_json(learner));
        ctx.write("teacher.json", archive_to_json(teacher));
    } else {
        fail_argument("'data.kind' must be manifold, blobs, or planted, got '" + kind + "'");
    }
}

void cmd_sample(Context& ctx) {
    const Settings& s = ctx.settings;
    std::optional<apps::Dataset> data;
    if (!s.text("embedding.data").empty())
        data = to_dataset(load_dense_csv(s.text("embedding.data"), s.flag("embedding.has_label")));
    Eigen::Index dim = s.integer("embedding.input_dim");
    if (dim == 0) {
        if (!data) fail_argument("give 'embedding.input_dim' or 'embedding.data'");
        dim = data->X.cols();
    } else if (data && data->X.cols() != dim) {
        fail_argument("'embedding.input_dim' disagrees with the data dimension");
    }
    require(dim >= 1, "'embedding.input_dim' must be positive");
    const KernelSpec spec = kernel_spec(s, data ? &*data : nullptr);
    const auto K = s.integer("embedding.features");
    const auto seed = s.unsigned_integer("embedding.seed");
    const std::string& kind = s.text("embedding.kind");

    Archive a;
    a.kernel = spec;
    a.seeds = {{"embedding", seed}};
    if (kind == "dense") {
        a.embedding.map = sample_rff(spec, dim, K, seed);
    } else if (kind == "dictionary") {
        a.embedding.map = sample_learner_dictionary(spec, dim, K, static_cast<int>(s.integer("embedding.components")),
                                                    s.real("embedding.spread"), seed);
    } else if (kind == "masked") {
        const double density = s.real("embedding.density");
        const double gamma = s.real("embedding.gamma") > 0.0 ? s.real("embedding.gamma")
                                                             : bbp_gamma_for_density(density, K);
        const DenseRff base = sample_rff(spec.base_density(), dim, K, Rng::derive(seed, 1).next_u64());
        a.embedding.map = build_masked_cerf(base, gamma, density, static_cast<int>(s.integer("embedding.group_exponent")),
                                           Rng::derive(seed, 2).next_u64());
    } else if (kind == "blocked") {
        a.embedding.map = build_blocked_cerf(spec, dim, static_cast<int>(s.integer("embedding.blocks")), seed);
    } else {
        fail_argument("'embedding.kind' must be dense, dictionary, masked, or blocked, got '" + kind + "'");
    }
    ctx.write("embedding.json", archive_to_json(a));
    ctx.out << "features " << a.embedding.features() << "\nmac " << a.mac() << "\n";
}

void cmd_train(Context& ctx) {
    const Settings& s = ctx.settings;
    const cvem::TrainConfig cfg = train_config(s);
    const auto data = load_data(s, "train");
    const Archive teacher = load_embedding(s, "train.teacher", data.X.cols());
    const Archive learner = load_embedding(s, "train.learner", data.X.cols());
    if (learner.trained) fail_argument("'train.learner' must be an untrained embedding");
    if (teacher.output_dim() != learner.embedding.features())
        fail_data("teacher has " + std::to_string(teacher.output_dim()) + " outputs but the learner has K = " +
                  std::to_string(learner.embedding.features()));
    Embedding all = learner.embedding;
    all.selector.clear();

    std::string trace;
    const auto trained = cvem::train(teacher.features(data.X), embed(all, data.X), all, cfg,
                                     [&](const cvem::StageRecord& r) { trace += cvem::to_json_line(r) + "\n"; });
    Archive result = archive_from_trained(trained);
    result.kernel = learner.kernel;
    result.seeds = learner.seeds;
    result.seeds["train"] = cfg.seed;
    ctx.write("trained.json", archive_to_json(result));
    ctx.write("trace.jsonl", trace);
    ctx.out << "stages " << trained.diagnostics.em_stages << "\nselected " << result.embedding.active_features()
            << "\nresidual " << number(trained.diagnostics.residual) << "\n";
}

void cmd_eval_approx(Context& ctx) {
    const Settings& s = ctx.settings;
    const auto data = load_data(s, "approx");
    const Archive teacher = load_embedding(s, "approx.teacher", data.X.cols());
    const Archive learner = load_embedding(s, "approx.learner", data.X.cols());
    const double value = apps::kernel_approx_error(apps::gram(teacher.features(data.X)),
                                                   apps::gram(learner.features(data.X)), s.flag("approx.normalize"));
    apps::ComparisonReport report("kernel_error");
    report.add(report_row(s, learner, "kernel_error", value));
    emit_report(ctx, "approx", report);
    ctx.out << "kernel_error " << number(value) << "\n";
}

apps::EvalOptions eval_options(const Settings& s) {
    apps::EvalOptions o;
    o.components = s.integer("eval.components");
    o.folds = static_cast<int>(s.integer("eval.folds"));
    o.seed = s.unsigned_integer("eval.seed");
    o.lambdas = s.reals("eval.lambdas");
    return o;
}

void cmd_eval(Context& ctx, const std::string& task) {
    const Settings& s = ctx.settings;
    const auto data = load_data(s, "eval");
    const Archive a = load_embedding(s, "eval.embedding", data.X.cols());
    const apps::FeatureFn f = [&a](const Matrix& X) { return a.features(X); };
    const apps::EvalOptions options = eval_options(s);
    std::string metric;
    double value = 0.0;
    if (task == "autoencoder") {
        metric = "autoencoder_error";
        value = apps::autoencoder_eval(data, f, options);
    } else if (task == "completion") {
        metric = "completion_error";
        value = apps::completion_eval(data, f, s.real("eval.missing_fraction"), options);
    } else {
        metric = "accuracy";
        const auto r = apps::classify_eval(data, f, options);
        if (r.degenerate) ctx.err << "warning: the dataset has a single class; accuracy is trivially 1\n";
        value = r.accuracy;
    }
    apps::ComparisonReport report(metric);
    report.add(report_row(s, a, metric, value));
    emit_report(ctx, task, report);
    ctx.out << metric << " " << number(value) << "\n";
}

void cmd_report(Context& ctx) {
    const std::string inputs = required_text(ctx.settings, "report.inputs");
    std::optional<apps::ComparisonReport> merged;
    std::istringstream list(inputs);
    std::string path;
    while (std::getline(list, path, ',')) {
        path.erase(0, path.find_first_not_of(" \t"));
        path.erase(path.find_last_not_of(" \t") + 1);
        if (path.empty()) continue;
        apps::ComparisonReport part;
        try {
            part = apps::ComparisonReport::from_csv(read_file(path));
        } catch (const Error& e) {
            throw Error(e.kind(), path + ": " + e.what());
        }
        if (!merged) merged.emplace(part.metric());
        for (const auto& row : part.rows()) {
            if (row.metric != merged->metric())
                fail_data(path + ": metric '" + row.metric + "' differs from '" + merged->metric() + "'");
            merged->add(row);
        }
    }
    if (!merged) fail_argument("'report.inputs' lists no files");
    emit_report(ctx, "report", *merged);
}

void cmd_compare(Context& ctx) {
    const Settings& s = ctx.settings;
    apps::ProtocolConfig p;
    p.input_dim = s.integer("protocol.input_dim");
    p.latent_dim = s.integer("protocol.latent_dim");
    p.train_samples = s.integer("protocol.train_samples");
    p.eval_samples = s.integer("protocol.eval_samples");
    p.noise = s.real("protocol.noise");
    p.data_seed = s.unsigned_integer("protocol.data_seed");
    p.bandwidth = s.real("protocol.bandwidth");
    p.first_factor = parse_kernel_family(s.text("protocol.first_factor"));
    p.second_bandwidth = s.real("protocol.second_bandwidth");
    p.teacher_features = s.integer("protocol.teacher_features");
    p.reference_features = s.integer("protocol.reference_features");
    p.dictionary_features = s.integer("protocol.dictionary_features");
    p.components = static_cast<int>(s.integer("protocol.components"));
    p.spread = s.real("protocol.spread");
    p.mask_density = s.real("protocol.mask_density");
    p.group_exponent = static_cast<int>(s.integer("protocol.group_exponent"));
    p.budgets = s.reals("protocol.budgets");
    p.seeds.clear();
    for (long long v : s.integers("protocol.seeds")) {
        require(v >= 0, "'protocol.seeds' must be nonnegative");
        p.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    p.kernel_task = s.flag("protocol.kernel_task");
    p.autoencoder_task = s.flag("protocol.autoencoder_task");
    p.completion_task = s.flag("protocol.completion_task");
    p.missing_fraction = s.real("protocol.missing_fraction");
    p.eval.components = s.integer("eval.components");
    p.eval.folds = static_cast<int>(s.integer("eval.folds"));
    p.eval.lambdas = s.reals("eval.lambdas");
    p.train.c = s.real("cvem.c");
    p.train.sigma2 = s.real("cvem.sigma2");
    p.train.gamma = s.real("cvem.gamma");
    p.train.max_stages = static_cast<int>(s.integer("cvem.max_stages"));
    p.train.e_sweeps = static_cast<int>(s.integer("cvem.e_sweeps"));
    p.train.post_stages = static_cast<int>(s.integer("cvem.post_stages"));
    p.train.admm.mu = s.real("admm.mu");
    p.train.admm.alpha0 = s.real("admm.alpha0");
    p.train.admm.max_iters = static_cast<int>(s.integer("admm.max_iters"));
    p.train.admm.primal_tol = s.real("admm.primal_tol");
    p.train.admm.hull = s.flag("admm.hull");

    const auto result = apps::run_protocol(p, [&](const std::string& msg) { ctx.err << msg << "\n"; });
    if (p.kernel_task) emit_report(ctx, "kernel", result.kernel);
    if (p.autoencoder_task) emit_report(ctx, "autoencoder", result.autoencoder);
    if (p.completion_task) emit_report(ctx, "completion", result.completion);
    ctx.out << "bandwidth " << number(result.bandwidth) << "\n";
}

void dispatch(const std::string& name, Context& ctx) {
    if (name == "gen-data") return cmd_gen_data(ctx);
    if (name == "sample") return cmd_sample(ctx);
    if (name == "train") return cmd_train(ctx);
    if (name == "eval-approx") return cmd_eval_approx(ctx);
    if (name == "eval-autoencoder") return cmd_eval(ctx, "autoencoder");
    if (name == "eval-completion") return cmd_eval(ctx, "completion");
    if (name == "eval-classify") return cmd_eval(ctx, "classify");
    if (name == "report") return cmd_report(ctx);
    if (name == "compare") return cmd_compare(ctx);
    fail_argument("unknown command '" + name + "'");
}

std::string manifest_text(const std::string& name, const Settings& settings) {
    const Command& cmd = commands().at(name);
    const std::uint64_t seed = cmd.seed_key.empty() ? 0 : settings.unsigned_integer(cmd.seed_key);
    std::string out = "# cerf run manifest; replay with: cerf replay <this file> --out <dir>\n";
    out += "[manifest]\n";
    out += "command = " + name + "\n";
    out += "config_hash = " + hex64(settings.hash()) + "\n";
    out += "seed = " + std::to_string(seed) + "\n";
    out += "version = " + version() + "\n\n";
    out += settings.canonical();
    return out;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return 1;
        case ErrorKind::data: return 2;
        case ErrorKind::numerical: return 3;
    }
    return 3;
}

// Runs one command with resolved settings; writes outputs and the manifest.
void execute(const std::string& name, const ConfigText& text, const std::string& out_dir, std::ostream& out,
             std::ostream& err) {
    const Settings settings = Settings::resolve(commands().at(name).schema, text);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail_data("cannot create output directory '" + out_dir + "': " + ec.message());
    Context ctx{settings, fs::path(out_dir), out, err, {}};
    dispatch(name, ctx);
    ctx.write("manifest.ini", manifest_text(name, settings));
}

}  // namespace

std::string version() { return CERF_VERSION; }

const std::map<std::string, Schema>& command_schemas() {
    static const std::map<std::string, Schema> schemas = [] {
        std::map<std::string, Schema> s;
        for (const auto& [name, cmd] : commands()) s[name] = cmd.schema;
        return s;
    }();
    return schemas;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"cerf: computation-efficient random Fourier features", "cerf"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version());
    int threads = -1;
    app.add_option("--threads", threads, "cap on worker threads (default: CERF_THREADS, else all cores)")
        ->check(CLI::NonNegativeNumber);

    struct Parsed {
        std::string config_path;
        std::string out_dir = ".";
        std::map<std::string, std::string> flags;
    };
    std::map<std::string, Parsed> parsed;
    for (const auto& [name, cmd] : commands()) {
        CLI::App* sub = app.add_subcommand(name, cmd.help);
        Parsed& p = parsed[name];
        sub->add_option("-c,--config", p.config_path, "config file ([section] / key = value)");
        sub->add_option("-o,--out", p.out_dir, "output directory")->capture_default_str();
        for (const auto& key : cmd.schema) {
            std::string help = key.help + " [" + key.fallback + "]";
            sub->add_option_function<std::string>(
                   "--" + key.name, [&p, k = key.name](const std::string& v) { p.flags[k] = v; }, help)
                ->type_name("");
        }
    }
    std::string manifest_path, replay_out;
    CLI::App* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    replay->add_option("manifest", manifest_path, "manifest.ini written by an earlier run")->required();
    replay->add_option("-o,--out", replay_out, "output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    struct ThreadGuard {
        bool active;
        ~ThreadGuard() {
            if (active) set_thread_limit(0);
        }
    } guard{threads >= 0};
    if (threads >= 0) set_thread_limit(threads);

    try {
        if (replay->parsed()) {
            ConfigText text = ConfigText::parse(read_file(manifest_path), manifest_path);
            auto header = text.take_section("manifest");
            const auto command = header.find("command");
            if (command == header.end() || !commands().count(command->second))
                fail_data(manifest_path + ": missing or unknown [manifest] command");
            const Settings settings = Settings::resolve(commands().at(command->second).schema, text);
            if (header["config_hash"] != hex64(settings.hash()))
                fail_data(manifest_path + ": config_hash does not match the recorded configuration");
            if (header["version"] != version())
                err << "warning: manifest written by version " << header["version"] << ", running " << version()
                    << "\n";
            execute(command->second, text, replay_out, out, err);
            return 0;
        }
        for (const auto& [name, p] : parsed) {
            if (!app.got_subcommand(name)) continue;
            ConfigText text;
            if (!p.config_path.empty()) text = ConfigText::parse(read_file(p.config_path), p.config_path);
            for (const auto& [key, value] : p.flags) text.set(key, value, "--" + key);
            execute(name, text, p.out_dir, out, err);
            return 0;
        }
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace cerf::io
