// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "planted.hpp"

#include "cerf/apps.hpp"
#include "cerf/cvem.hpp"
#include "cerf/features.hpp"
#include "cerf/io.hpp"
#include "cerf/numerics.hpp"
#include "cerf/rng.hpp"

using namespace cerf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

Matrix normal_rows(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix X(rows, cols);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = rng.normal();
    return X;
}

// ---------------------------------------------------------------------------
// 1. RFF convergence

Outcome rff_convergence() {
    const int D = 8, pairs = 1000, seeds = 16;
    const KernelSpec spec{KernelFamily::gaussian, std::sqrt(static_cast<double>(D))};
    std::vector<double> mae256, mae4096;
    for (int s = 1; s <= seeds; ++s) {
        const Matrix X = normal_rows(pairs, D, Rng::derive(s, 1).next_u64());
        const Matrix Y = normal_rows(pairs, D, Rng::derive(s, 2).next_u64());
        Vector exact(pairs);
        for (int i = 0; i < pairs; ++i) exact[i] = kernel_exact(spec, X.row(i).transpose(), Y.row(i).transpose());
        for (auto [K, out] : {std::pair{256, &mae256}, std::pair{4096, &mae4096}}) {
            const Embedding e{sample_rff(spec, D, K, Rng::derive(s, 3 + K).next_u64()), {}};
            const Vector approx = embed(e, X).cwiseProduct(embed(e, Y)).rowwise().sum();
            out->push_back((approx - exact).cwiseAbs().mean());
        }
    }
    const double a = mean(mae256), b = mean(mae4096);
    return {b <= 0.02 && b <= 0.5 * a,
            "MAE(4096) = " + fmt("%.5f", b) + " (<= 0.02), MAE(256) = " + fmt("%.5f", a) + ", ratio " +
                fmt("%.3f", b / a) + " (<= 0.5)"};
}

// ---------------------------------------------------------------------------
// 2. Fastfood fidelity

Outcome fastfood_fidelity() {
    const int D = 64, N = 200, blocks = 64, seeds = 16;
    const KernelSpec spec{KernelFamily::gaussian, std::sqrt(static_cast<double>(D))};
    std::vector<double> ff, rff;
    for (int s = 1; s <= seeds; ++s) {
        const Matrix X = normal_rows(N, D, Rng::derive(s, 11).next_u64());
        Matrix exact(N, N);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) exact(i, j) = kernel_exact(spec, X.row(i).transpose(), X.row(j).transpose());
        const Embedding blocked{build_blocked_cerf(spec, D, blocks, Rng::derive(s, 12).next_u64()), {}};
        const Embedding dense{sample_rff(spec, D, blocked.features(), Rng::derive(s, 13).next_u64()), {}};
        ff.push_back(apps::kernel_approx_error(exact, apps::gram(embed(blocked, X)), false));
        rff.push_back(apps::kernel_approx_error(exact, apps::gram(embed(dense, X)), false));
    }
    const double a = mean(ff), b = mean(rff);
    return {a <= 1.5 * b, "K = 4096: blocked MAE " + fmt("%.5f", a) + ", dense MAE " + fmt("%.5f", b) + ", ratio " +
                              fmt("%.3f", a / b) + " (<= 1.5)"};
}

// ---------------------------------------------------------------------------
// 3. Numerics oracles

// Spectral prox by projected gradient on the clip level t in [0, s_1]:
// g(t) = 1/2 sum (s_i - min(s_i, t))^2 + beta t is 1-strongly convex with an
// n-Lipschitz derivative, so steps of 1/n converge linearly.
Matrix prox_projected_gradient(const Matrix& a, double beta) {
    const Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector s = svd.singularValues();
    const double step = 1.0 / static_cast<double>(s.size());
    double t = s[0];
    for (int it = 0; it < 5000; ++it) {
        double slope = beta;
        for (Eigen::Index i = 0; i < s.size(); ++i) slope -= std::max(s[i] - t, 0.0);
        t = std::clamp(t - step * slope, 0.0, s[0]);
    }
    return svd.matrixU() * s.cwiseMin(t).asDiagonal() * svd.matrixV().transpose();
}

Outcome numerics_oracles() {
    Outcome o;
    std::mt19937_64 gen(3);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    double l1_worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = 1 + static_cast<int>(gen() % 100);
        Vector v(n);
        for (int i = 0; i < n; ++i) v[i] = 3.0 * normal(gen);
        const double radius = 0.01 + 2.0 * unit(gen) * v.lpNorm<1>();
        l1_worst = std::max(l1_worst, (numerics::project_l1_ball(v, radius) - oracle::project_l1_sorted(v, radius))
                                          .lpNorm<Eigen::Infinity>());
    }

    double prox_worst = 0.0;
    int beaten = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix a = (0.5 + 2.0 * unit(gen)) * oracle::random_matrix(5, 5, gen);
        const double beta = 0.05 + 4.0 * unit(gen);
        const Matrix x = numerics::prox_spectral(a, beta);
        prox_worst = std::max(prox_worst, (x - prox_projected_gradient(a, beta)).norm());
        const double best = oracle::prox_objective(x, a, beta);
        for (int p = 0; p < 1000; ++p) {
            const double scale = std::pow(10.0, -4.0 + 3.0 * unit(gen));
            if (oracle::prox_objective(x + scale * oracle::random_matrix(5, 5, gen), a, beta) < best - 1e-12) ++beaten;
        }
    }

    double digamma_worst = 0.0;
    for (int trial = 0; trial < 2000; ++trial) {
        const double x = 0.01 + 60.0 * unit(gen);
        digamma_worst = std::max(digamma_worst, std::abs(numerics::digamma(x + 1.0) - numerics::digamma(x) - 1.0 / x));
        const double dup = 0.5 * numerics::digamma(x) + 0.5 * numerics::digamma(x + 0.5) + std::log(2.0);
        digamma_worst = std::max(digamma_worst, std::abs(numerics::digamma(2.0 * x) - dup));
    }

    o.pass = l1_worst <= 1e-10 && prox_worst <= 1e-4 && beaten == 0 && digamma_worst <= 1e-10;
    o.detail = "L1 max err " + fmt("%.2e", l1_worst) + " (1e4 instances); prox vs projected gradient " +
               fmt("%.2e", prox_worst) + ", perturbations better than prox: " + std::to_string(beaten) +
               " of 1e5; digamma identities " + fmt("%.2e", digamma_worst);
    return o;
}

// ---------------------------------------------------------------------------
// 4. ADMM correctness

Outcome admm_correctness() {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0, residual = 0.0;
    bool converged = true;
    for (int trial = 0; trial < 20; ++trial) {
        const int N = 200, K = 16;
        const Matrix phi = oracle::random_matrix(N, K, gen);
        const Matrix psi = oracle::random_matrix(N, K, gen);
        cvem::TrainConfig cfg;
        cfg.target_density = 0.3 + 0.5 * unit(gen);
        cfg.sigma2 = 0.5 + 2.0 * unit(gen);
        cfg.admm.hull = false;
        cvem::VariationalState state;
        state.gamma = 1.0;
        state.nu.resize(N, K);
        for (Eigen::Index i = 0; i < state.nu.size(); ++i) state.nu(i) = 0.05 + 0.9 * unit(gen);
        state.tau.resize(K, 2);
        cvem::update_tau(state);
        const double c = cfg.scale_for(K);
        const Matrix W_ls = (c * state.nu.cwiseProduct(psi)).colPivHouseholderQr().solve(phi).transpose();
        const auto out = cvem::mstep_admm(phi, psi, state, Matrix::Identity(K, K), 0.0, cfg);
        worst = std::max(worst, (out.W - W_ls).norm() / W_ls.norm());
        residual = std::max(residual, out.primal_residual);
        converged = converged && out.converged;
    }
    return {worst <= 1e-4 && residual < 1e-5 && converged,
            "20 instances K=16 N=200: max relative error " + fmt("%.2e", worst) + " (<= 1e-4), max primal residual " +
                fmt("%.2e", residual) + " (< 1e-5)" + (converged ? "" : ", not all converged")};
}

// ---------------------------------------------------------------------------
// 5. E-step soundness

Outcome estep_soundness() {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst_drop = 0.0, tau_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int N = 20 + trial, K = 3 + trial % 7;
        const Matrix phi = oracle::random_matrix(N, K, gen);
        const Matrix psi = oracle::random_matrix(N, K, gen);
        const Matrix W = 0.7 * oracle::random_matrix(K, K, gen);
        cvem::TrainConfig cfg;
        cfg.target_density = 0.3 + 0.5 * unit(gen);
        cfg.sigma2 = 0.5 + 2.0 * unit(gen);
        cfg.gamma = 0.5 + 3.0 * unit(gen);
        cvem::VariationalState state = cvem::initial_state(N, K, cfg);
        double previous = cvem::elbo(phi, psi, state, W, cfg);
        for (int sweep = 0; sweep < 8; ++sweep) {
            cvem::estep_sweep(phi, psi, W, state, cfg);
            const double current = cvem::elbo(phi, psi, state, W, cfg);
            worst_drop = std::max(worst_drop, previous - current);
            previous = current;
            const double total = N + state.gamma / K + 1.0;
            for (int k = 0; k < K; ++k)
                tau_err = std::max(tau_err, std::abs(state.tau(k, 0) + state.tau(k, 1) - total) / total);
        }
    }

    cvem::TrainConfig cfg;
    cfg.c = 1.0;
    cfg.sigma2 = 1.0;
    cvem::VariationalState one;
    one.gamma = 1.0;
    one.nu = Matrix::Ones(1, 1);
    one.tau = Matrix::Ones(1, 2);
    cvem::estep_sweep(Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Identity(1, 1), one, cfg);
    // Hand computation: xi = 1, Delta = -1, E[ln pi] = E[ln(1 - pi)] = -1.
    const double hand = 1.0 / (1.0 + std::exp(-0.5));
    const double hand_err = std::abs(one.nu(0, 0) - hand);

    return {worst_drop <= 1e-8 && hand_err <= 1e-6 && tau_err <= 1e-14,
            "max ELBO drop " + fmt("%.2e", std::max(worst_drop, 0.0)) + " (<= 1e-8) over 20 instances; nu' = " +
                fmt("%.7f", one.nu(0, 0)) + " (hand " + fmt("%.7f", hand) + "); tau sum relative error " +
                fmt("%.1e", tau_err)};
}

// ---------------------------------------------------------------------------
// 6. Planted recovery

std::vector<cvem::TrainedCerf> planted_models;

Outcome planted_recovery() {
    int good = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto inst = planted::make(seed, 400, 64, 0.4, 0.01);
        cvem::TrainConfig cfg;
        cfg.target_density = 0.4;
        auto t = cvem::train(inst.phi, inst.psi, inst.learner, cfg);
        const double f1 = planted::f1(t.z, inst.z_star);
        const double res = planted::heldout_residual(inst, t);
        good += f1 >= 0.9 && res <= 0.1;
        per_seed += " " + fmt("%.2f", f1) + "/" + fmt("%.3f", res);
        planted_models.push_back(std::move(t));
    }
    return {good >= 8, std::to_string(good) + "/10 seeds with F1 >= 0.9 and held-out residual <= 0.1 (F1/residual:" +
                           per_seed + ")"};
}

// ---------------------------------------------------------------------------
// 7 and 10: synthetic protocol

const std::vector<std::uint64_t> kProtocolSeeds{101, 102, 103, 104, 105, 106, 107, 108, 109, 110};

apps::ProtocolConfig protocol_config() {
    apps::ProtocolConfig cfg;
    cfg.seeds = kProtocolSeeds;
    return cfg;
}

std::optional<apps::ProtocolResult> main_protocol;

const apps::ProtocolResult& protocol() {
    if (!main_protocol) {
        main_protocol = apps::run_protocol(protocol_config(), [](const std::string& m) { std::cout << "  " << m << "\n"; });
        std::cout << std::flush;
    }
    return *main_protocol;
}

Outcome equal_mac_direction() {
    const auto& r = protocol();
    Outcome o;
    for (const apps::ComparisonReport* report : {&r.kernel, &r.autoencoder, &r.completion}) {
        for (double budget : protocol_config().budgets) {
            int wins = 0;
            std::vector<double> cerf, rff;
            for (auto seed : kProtocolSeeds) {
                const double a = report->value("cerf", budget, seed);
                const double b = report->value("rff", budget, seed);
                wins += a <= b;
                cerf.push_back(a);
                rff.push_back(b);
            }
            const bool ok = wins >= 8;
            o.pass = o.pass && ok;
            o.detail += (o.detail.empty() ? "" : "; ") + report->metric() + "@" + fmt("%.1f", budget) + " " +
                        std::to_string(wins) + "/10 (mean cerf " + fmt("%.4f", mean(cerf)) + ", rff " +
                        fmt("%.4f", mean(rff)) + ")";
        }
    }
    return o;
}

Outcome grouped_masks() {
    const auto& base = protocol().autoencoder;
    Outcome o;
    for (int e = 1; e <= 4; ++e) {
        apps::ProtocolConfig cfg = protocol_config();
        cfg.kernel_task = false;
        cfg.completion_task = false;
        cfg.group_exponent = e;
        const auto r = apps::run_protocol(cfg, [](const std::string& m) { std::cout << "  " << m << "\n"; });
        std::cout << std::flush;
        for (double budget : cfg.budgets) {
            std::vector<double> g0, ge;
            for (auto seed : kProtocolSeeds) {
                g0.push_back(base.value("cerf", budget, seed));
                ge.push_back(r.autoencoder.value("cerf", budget, seed));
            }
            const double diff = std::abs(mean(ge) - mean(g0));
            const double se = std::hypot(stderr_of(ge), stderr_of(g0));
            const bool ok = diff <= 2.0 * se;
            o.pass = o.pass && ok;
            o.detail += (o.detail.empty() ? "" : "; ") + std::string("group ") + std::to_string(1 << e) + "@" +
                        fmt("%.1f", budget) + " |diff| " + fmt("%.4f", diff) + " vs 2se " + fmt("%.4f", 2.0 * se);
        }
    }
    return o;
}

// ---------------------------------------------------------------------------
// 8. Orthogonality and CLI determinism

struct Cli {
    int code;
    std::string err;
};

Cli cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = io::run_cli(args, out, err);
    return {code, err.str()};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
    for (const auto& entry : fs::directory_iterator(a)) {
        const fs::path other = b / entry.path().filename();
        if (!fs::exists(other) || io::read_file(entry.path().string()) != io::read_file(other.string())) {
            why = entry.path().string() + " differs on replay";
            return false;
        }
    }
    return true;
}

Outcome orthogonality_and_determinism() {
    double worst = 0.0;
    int checked = 0;
    for (const auto& t : planted_models) {
        const auto K = t.W.rows();
        worst = std::max(worst, (t.W.transpose() * t.W - Matrix::Identity(K, K)).norm());
        ++checked;
    }
    if (main_protocol) {
        worst = std::max(worst, main_protocol->max_orthogonality_error);
        checked += main_protocol->trainings;
    }

    const fs::path root = fs::temp_directory_path() / "cerf_acceptance_cli";
    fs::remove_all(root);
    const std::string r = root.string();
    const std::vector<std::vector<std::string>> runs = {
        {"gen-data", "--data.kind", "planted", "--data.samples", "300", "--data.dim", "8", "--planted.features", "48",
         "--out", r + "/planted"},
        {"train", "--train.data", r + "/planted/data.csv", "--train.teacher", r + "/planted/teacher.json",
         "--train.learner", r + "/planted/learner.json", "--out", r + "/train"},
        {"gen-data", "--data.kind", "blobs", "--data.samples", "200", "--data.dim", "8", "--out", r + "/blobs"},
        {"sample", "--embedding.kind", "masked", "--embedding.data", r + "/blobs/data.csv", "--embedding.has_label",
         "true", "--embedding.features", "128", "--out", r + "/masked"},
        {"sample", "--embedding.kind", "blocked", "--embedding.data", r + "/blobs/data.csv", "--embedding.has_label",
         "true", "--out", r + "/blocked"},
        {"eval-approx", "--approx.data", r + "/planted/data.csv", "--approx.teacher", r + "/planted/teacher.json",
         "--approx.learner", r + "/train/trained.json", "--out", r + "/approx"},
        {"eval-autoencoder", "--eval.data", r + "/blobs/data.csv", "--eval.has_label", "true", "--eval.embedding",
         r + "/masked/embedding.json", "--out", r + "/autoencoder"},
        {"eval-completion", "--eval.data", r + "/blobs/data.csv", "--eval.has_label", "true", "--eval.embedding",
         r + "/blocked/embedding.json", "--out", r + "/completion"},
        {"eval-classify", "--eval.data", r + "/blobs/data.csv", "--eval.has_label", "true", "--eval.embedding",
         r + "/masked/embedding.json", "--out", r + "/classify"},
        {"report", "--report.inputs", r + "/autoencoder/autoencoder.csv", "--out", r + "/report"},
        {"compare", "--protocol.seeds", "5", "--protocol.budgets", "0.4", "--protocol.train_samples", "100",
         "--protocol.eval_samples", "100", "--protocol.teacher_features", "64", "--protocol.dictionary_features", "64",
         "--protocol.reference_features", "4096", "--eval.components", "5", "--out", r + "/compare"},
    };
    std::string why;
    int replayed = 0;
    for (const auto& args : runs) {
        const auto run = cli(args);
        if (run.code != 0) {
            why = args[0] + " exited " + std::to_string(run.code) + ": " + run.err;
            break;
        }
        const std::string dir = args.back();
        const auto again = cli({"replay", dir + "/manifest.ini", "--out", dir + "_replay"});
        if (again.code != 0) {
            why = "replay of " + args[0] + " exited " + std::to_string(again.code);
            break;
        }
        if (!same_tree(dir, dir + "_replay", why)) break;
        ++replayed;
    }
    const io::Archive trained = io::load_archive(r + "/train/trained.json");
    const auto K = trained.W.rows();
    worst = std::max(worst, (trained.W.transpose() * trained.W - Matrix::Identity(K, K)).norm());
    ++checked;
    fs::remove_all(root);

    const bool ok = worst <= 1e-6 && why.empty();
    return {ok, "max |W^T W - I|_F " + fmt("%.2e", worst) + " over " + std::to_string(checked) +
                    " trained models; " + std::to_string(replayed) + "/" + std::to_string(runs.size()) +
                    " CLI runs byte-identical on replay" + (why.empty() ? "" : " (" + why + ")")};
}

// ---------------------------------------------------------------------------
// 9. MAC accounting

Outcome mac_accounting() {
    std::mt19937_64 gen(9);
    int mismatches = 0, total = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int dim = 1 + static_cast<int>(gen() % 48);
        const int features = 1 + static_cast<int>(gen() % 96);
        const KernelSpec spec{KernelFamily::gaussian, 1.0 + static_cast<double>(gen() % 5)};
        std::vector<Embedding> kinds(3);
        kinds[0].map = sample_rff(spec, dim, features, gen());
        const double density = 0.1 + 0.8 * static_cast<double>(gen() % 100) / 100.0;
        int exponent = static_cast<int>(gen() % 4);
        while ((1 << exponent) > dim) --exponent;
        kinds[1].map = build_masked_cerf(sample_rff(spec, dim, features, gen()),
                                         bbp_gamma_for_density(density, features), density, exponent, gen());
        kinds[2].map = build_blocked_cerf(spec, dim, 1 + static_cast<int>(gen() % 4), gen());
        for (auto& e : kinds) {
            if (gen() % 2) {
                e.selector.assign(static_cast<std::size_t>(e.features()), 0);
                for (auto& s : e.selector) s = gen() % 3 != 0;
                e.selector[0] = 1;
            }
            const int rows = 1 + static_cast<int>(gen() % 5);
            OpCounter counter;
            embed(e, normal_rows(rows, dim, gen()), &counter);
            mismatches += counter.ops.load() != static_cast<std::uint64_t>(rows) * mac_cost(e);
            ++total;
        }
    }
    return {mismatches == 0, std::to_string(total - mismatches) + "/" + std::to_string(total) +
                                 " embeddings (dense, masked, blocked x 50 configurations) count exactly mac_cost per row"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
        double max_seconds;  // 0: no runtime bound
    };
    const std::vector<Criterion> criteria = {
        {1, "RFF convergence", rff_convergence, 30.0},
        {2, "Fastfood fidelity", fastfood_fidelity, 60.0},
        {3, "numerics oracles", numerics_oracles, 0.0},
        {4, "ADMM correctness", admm_correctness, 0.0},
        {5, "E-step soundness", estep_soundness, 0.0},
        {6, "planted-model recovery", planted_recovery, 120.0},
        {7, "equal-MAC direction", equal_mac_direction, 0.0},
        {10, "grouped masks", grouped_masks, 0.0},
        {9, "MAC accounting", mac_accounting, 0.0},
        {8, "orthogonality and determinism", orthogonality_and_determinism, 0.0},
    };

    int failed = 0;
    std::vector<std::string> lines(11);
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.max_seconds > 0.0 && seconds >= c.max_seconds) {
            o.pass = false;
            o.detail += "; runtime " + fmt("%.1f", seconds) + " s exceeds " + fmt("%.0f", c.max_seconds) + " s";
        }
        failed += !o.pass;
        lines[static_cast<std::size_t>(c.id)] = std::string(o.pass ? "PASS" : "FAIL") + " criterion " +
                                                 std::to_string(c.id) + " (" + c.name + "): " + o.detail + " [" +
                                                 fmt("%.1f", seconds) + " s]";
        std::cout << lines[static_cast<std::size_t>(c.id)] << "\n" << std::flush;
    }
    std::cout << "\nSummary\n";
    for (const auto& l : lines)
        if (!l.empty()) std::cout << l << "\n";
    return failed == 0 ? 0 : 1;
}
