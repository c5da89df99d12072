#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "planted.hpp"

#include "cerf/apps.hpp"
#include "cerf/error.hpp"
#include "cerf/parallel.hpp"

using namespace cerf;
using namespace cerf::apps;

namespace {

Matrix two_by_two(double a, double b, double c, double d) {
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

// Rows in a `rank`-dimensional linear subspace of R^D (plus an offset).
Matrix subspace_rows(int rows, int dim, int rank, std::mt19937_64& gen) {
    const Matrix basis = oracle::random_matrix(rank, dim, gen);
    Matrix out = oracle::random_matrix(rows, rank, gen) * basis;
    out.rowwise() += oracle::random_matrix(1, dim, gen).row(0);
    return out;
}

FeatureFn identity() {
    return [](const Matrix& X) { return X; };
}

}  // namespace

TEST_CASE("kernel_approx_error examples") {
    const Matrix t = two_by_two(1, 0.5, 0.5, 1);
    const Matrix l = two_by_two(1, 0.3, 0.3, 1);
    CHECK(kernel_approx_error(t, t, true) == 0.0);
    CHECK(kernel_approx_error(t, l, false) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(kernel_approx_error(t, l, true) == doctest::Approx(0.1 / 0.75).epsilon(1e-14));
    CHECK_THROWS_AS(kernel_approx_error(t, Matrix::Zero(3, 3), false), Error);
}

TEST_CASE("kernel_approx_error is a pseudometric on grams") {
    std::mt19937_64 gen(1);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix a = gram(oracle::random_matrix(6, 4, gen));
        const Matrix b = gram(oracle::random_matrix(6, 4, gen));
        const Matrix c = gram(oracle::random_matrix(6, 4, gen));
        CHECK(kernel_approx_error(a, b, false) == kernel_approx_error(b, a, false));
        CHECK(kernel_approx_error(a, b, false) > 0.0);
        CHECK(kernel_approx_error(a, c, false) <=
              kernel_approx_error(a, b, false) + kernel_approx_error(b, c, false) + 1e-15);
    }
}

TEST_CASE("gram and reference gram") {
    std::mt19937_64 gen(2);
    const Matrix F = oracle::random_matrix(7, 3, gen);
    CHECK((gram(F) - F * F.transpose()).norm() <= 1e-13);

    // Gaussian kernel has a closed form to compare the Monte-Carlo gram with.
    const KernelSpec spec{KernelFamily::gaussian, 1.5};
    const Matrix X = oracle::random_matrix(12, 3, gen);
    const Matrix ref = reference_gram(spec, X, 1 << 16, 11, 5000);
    double worst = 0.0;
    for (int i = 0; i < X.rows(); ++i)
        for (int j = 0; j < X.rows(); ++j)
            worst = std::max(worst, std::abs(ref(i, j) - kernel_exact(spec, X.row(i).transpose(), X.row(j).transpose())));
    CHECK(worst <= 0.03);
    // The chunk size only changes how the same total is accumulated.
    const Matrix one = reference_gram(spec, X, 3000, 5, 3000);
    const Matrix same = reference_gram(spec, X, 3000, 5, 3000);
    CHECK(one == same);
    CHECK((ref - ref.transpose()).norm() == 0.0);
}

TEST_CASE("median_bandwidth and the synthetic generators") {
    Matrix line(3, 1);
    line << 0.0, 1.0, 2.0;
    CHECK(median_bandwidth(line) == 1.0);  // distances {1, 2, 1}
    CHECK_THROWS_AS(median_bandwidth(Matrix::Zero(1, 2)), Error);

    const Dataset a = make_manifold(50, 8, 3, 0.05, 9);
    const Dataset b = make_manifold(50, 8, 3, 0.05, 9);
    CHECK(a.X == b.X);
    CHECK(a.X.rows() == 50);
    CHECK(a.X.cols() == 8);
    CHECK(!a.has_labels());
    // Without noise every coordinate is a tanh and lies in (-1, 1).
    CHECK(make_manifold(40, 5, 2, 0.0, 3).X.cwiseAbs().maxCoeff() < 1.0);

    const Dataset blobs = make_blobs(30, 4, 3, 5.0, 2);
    CHECK(blobs.num_classes() == 3);
    CHECK(blobs.labels[4] == 1);
    blobs.validate();
}

TEST_CASE("rkpca keeps an exact subspace and matches the covariance eigensolver") {
    std::mt19937_64 gen(3);
    const Matrix F = subspace_rows(40, 12, 4, gen);
    const RkpcaModel m = rkpca_fit(F, 4);
    CHECK((m.projection.transpose() * m.projection - Matrix::Identity(4, 4)).norm() <= 1e-8);
    const Matrix G = rkpca_project(m, F);
    double worst = 0.0;
    for (int i = 0; i < F.rows(); ++i)
        for (int j = 0; j < F.rows(); ++j)
            worst = std::max(worst, std::abs((F.row(i) - F.row(j)).norm() - (G.row(i) - G.row(j)).norm()));
    CHECK(worst <= 1e-8);
    CHECK(m.captured == doctest::Approx(1.0).epsilon(1e-12));

    for (int rep = 0; rep < 10; ++rep) {
        const Matrix H = oracle::random_matrix(30, 20, gen);
        const RkpcaModel r = rkpca_fit(H, 5);
        const Matrix centred = H.rowwise() - H.colwise().mean();
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(centred.transpose() * centred);
        const Vector ev = eig.eigenvalues().reverse();
        CHECK(r.captured == doctest::Approx(ev.head(5).sum() / ev.sum()).epsilon(1e-10));
        for (int j = 0; j < 5; ++j) CHECK(r.singular_values[j] == doctest::Approx(std::sqrt(ev[j])).epsilon(1e-10));
        // Same subspace as the top eigenvectors.
        const Matrix top = eig.eigenvectors().rightCols(5);
        CHECK((top * top.transpose() - r.projection * r.projection.transpose()).norm() <= 1e-8);
    }
}

TEST_CASE("rkpca ignores a constant shift of the features and validates J") {
    std::mt19937_64 gen(4);
    const Matrix F = oracle::random_matrix(25, 8, gen);
    const Matrix shifted = F.rowwise() + oracle::random_matrix(1, 8, gen).row(0);
    const Matrix a = rkpca_project(rkpca_fit(F, 3), F);
    const Matrix b = rkpca_project(rkpca_fit(shifted, 3), shifted);
    CHECK((a - b).norm() <= 1e-9);
    CHECK_THROWS_AS(rkpca_fit(F, 9), Error);
    CHECK_THROWS_AS(rkpca_fit(F, 0), Error);
    CHECK_THROWS_AS(rkpca_project(rkpca_fit(F, 3), Matrix::Zero(2, 7)), Error);
}

TEST_CASE("ridge examples and limits") {
    Matrix x(3, 1), y(3, 1);
    x << 1, 2, 3;
    y << 2, 4, 6;
    const RidgeModel m = ridge_fit(x, y, 0.0);
    CHECK(m.weights(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(std::abs(m.intercept[0]) <= 1e-12);

    std::mt19937_64 gen(5);
    const Matrix xi = oracle::random_matrix(20, 4, gen);
    const Matrix yi = oracle::random_matrix(20, 2, gen);
    const RidgeModel heavy = ridge_fit(xi, yi, 1e9);
    CHECK(heavy.weights.cwiseAbs().maxCoeff() <= 1e-6);
    const Matrix pred = ridge_predict(heavy, xi);
    for (int t = 0; t < 2; ++t) CHECK(std::abs(pred(0, t) - yi.col(t).mean()) <= 1e-6);

    Matrix dup(5, 2);
    dup << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10;
    CHECK_THROWS_AS(ridge_fit(dup, Matrix::Ones(5, 1), 0.0), Error);
    CHECK_NOTHROW(ridge_fit(dup, Matrix::Ones(5, 1), 0.1));
}

TEST_CASE("ridge matches the augmented least-squares oracle") {
    std::mt19937_64 gen(6);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 30, j = 6, t = 3;
        const Matrix x = oracle::random_matrix(n, j, gen);
        const Matrix y = oracle::random_matrix(n, t, gen);
        const double lambda = std::pow(10.0, -3 + rep % 5);
        // min |Xc w - Yc|^2 + lambda |w|^2 as the stacked system [Xc; sqrt(l) I] w = [Yc; 0].
        const Matrix xc = x.rowwise() - x.colwise().mean();
        const Matrix yc = y.rowwise() - y.colwise().mean();
        Matrix a(n + j, j), b = Matrix::Zero(n + j, t);
        a << xc, std::sqrt(lambda) * Matrix::Identity(j, j);
        b.topRows(n) = yc;
        const Matrix w = a.colPivHouseholderQr().solve(b);
        const RidgeModel m = ridge_fit(x, y, lambda);
        CHECK((m.weights - w).norm() <= 1e-8 * std::max(1.0, w.norm()));
        const Vector b0 = y.colwise().mean().transpose() - w.transpose() * x.colwise().mean().transpose();
        CHECK((m.intercept - b0).norm() <= 1e-8);
    }
}

TEST_CASE("select_lambda prefers small lambdas for clean fits and large ones for noise") {
    std::mt19937_64 gen(7);
    const Matrix x = oracle::random_matrix(60, 5, gen);
    const Matrix clean = x * oracle::random_matrix(5, 2, gen);
    const auto grid = default_lambda_grid();
    CHECK(grid.size() == 10);
    CHECK(grid.front() == 1e3);
    CHECK(grid.back() == doctest::Approx(1e-6));
    CHECK(select_lambda(x, clean, grid, 5, 1) == grid.back());
    const Matrix noise = oracle::random_matrix(60, 2, gen);
    CHECK(select_lambda(x, noise, grid, 5, 1) >= 10.0);
    CHECK(select_lambda(x, noise, grid, 5, 1) == select_lambda(x, noise, grid, 5, 1));
    CHECK(select_lambda(x, noise, {3.0}, 5, 1) == 3.0);
    CHECK_THROWS_AS(select_lambda(x, noise, {}, 5, 1), Error);
}

TEST_CASE("autoencoder_eval: exact subspace, mean predictor, and preconditions") {
    std::mt19937_64 gen(8);
    Dataset data{subspace_rows(100, 20, 15, gen), {}};
    EvalOptions options;
    CHECK(autoencoder_eval(data, identity(), options) <= 1e-10);

    options.lambdas = {1e12};
    const double mean_only = autoencoder_eval(data, identity(), options);
    CHECK(mean_only == doctest::Approx(1.0).epsilon(1e-6));

    Dataset small{oracle::random_matrix(20, 20, gen), {}};
    CHECK_THROWS_AS(autoencoder_eval(small, identity(), EvalOptions{}), Error);
    // Noise-only data cannot be reconstructed from 5 of 20 directions.
    Dataset noise{oracle::random_matrix(200, 20, gen), {}};
    EvalOptions five;
    five.components = 5;
    const double e = autoencoder_eval(noise, identity(), five);
    CHECK(e > 0.5);
    CHECK(e < 1.05);
}

TEST_CASE("completion_eval: mask contract and exact recoverability") {
    for (int dim : {5, 10, 16, 33})
        for (double f : {0.1, 0.2, 0.5}) {
            const auto mask = completion_mask(dim, f, 3);
            const auto expected = std::max<long>(1, std::lround(f * dim));
            CHECK(static_cast<long>(mask.size()) == expected);
            CHECK(std::set<Eigen::Index>(mask.begin(), mask.end()).size() == mask.size());
            CHECK(mask.back() < dim);
        }
    CHECK(completion_mask(16, 0.2, 3) == completion_mask(16, 0.2, 3));
    CHECK_THROWS_AS(completion_mask(16, 0.0, 3), Error);
    CHECK_THROWS_AS(completion_mask(16, 1.0, 3), Error);

    // Rank-3 data: any single coordinate is a linear function of the others.
    std::mt19937_64 gen(9);
    Dataset data{subspace_rows(120, 10, 3, gen), {}};
    EvalOptions options;
    options.components = 4;
    CHECK(completion_mask(10, 0.01, options.seed).size() == 1);
    CHECK(completion_eval(data, identity(), 0.01, options) <= 1e-8);
}

TEST_CASE("classify_eval on separated blobs, degenerate labels, and fold assignment") {
    const Dataset blobs = make_blobs(200, 5, 2, 4.0, 3);
    const KernelSpec spec{KernelFamily::gaussian, median_bandwidth(blobs.X)};
    const Embedding rff{sample_rff(spec, 5, 256, 4), {}};
    const ClassifyResult r = classify_eval(blobs, feature_fn(rff), EvalOptions{});
    CHECK(r.accuracy >= 0.95);
    CHECK(!r.degenerate);

    Dataset single{blobs.X, std::vector<int>(200, 0)};
    const ClassifyResult s = classify_eval(single, feature_fn(rff), EvalOptions{});
    CHECK(s.accuracy == 1.0);
    CHECK(s.degenerate);

    const auto folds = stratified_folds(blobs.labels, 5, 11);
    CHECK(folds == stratified_folds(blobs.labels, 5, 11));
    CHECK(folds != stratified_folds(blobs.labels, 5, 12));
    for (int f = 0; f < 5; ++f) {
        int per_class[2] = {0, 0};
        for (std::size_t i = 0; i < folds.size(); ++i)
            if (folds[i] == f) ++per_class[blobs.labels[i]];
        CHECK(per_class[0] == 20);
        CHECK(per_class[1] == 20);
    }

    Dataset sparse = blobs;
    sparse.labels.assign(200, 0);
    sparse.labels[0] = sparse.labels[1] = 1;
    CHECK_THROWS_AS(classify_eval(sparse, feature_fn(rff), EvalOptions{}), Error);
    CHECK_THROWS_AS(classify_eval(Dataset{blobs.X, {}}, feature_fn(rff), EvalOptions{}), Error);
}

TEST_CASE("equal_mac_budget examples and floor property") {
    const Embedding dense{sample_rff(KernelSpec{}, 64, 100, 1), {}};
    CHECK(mac_cost(dense) == 6400);
    CHECK(equal_mac_budget(dense, 64) == 100);

    // 50 selected columns with 16-active masks at D = 40.
    MaskedCerf masked;
    masked.base = sample_rff(KernelSpec{}, 40, 60, 2);
    masked.mask.setZero(40, 60);
    masked.mask.topRows(16).setOnes();
    masked.rho = Vector::Constant(60, std::sqrt(40.0 / 16.0));
    Embedding e{masked, Selector(60, 0)};
    for (int k = 0; k < 50; ++k) e.selector[static_cast<std::size_t>(k)] = 1;
    CHECK(mac_cost(e) == 800);
    CHECK(equal_mac_budget(e, 40) == 20);

    std::mt19937_64 gen(12);
    for (int rep = 0; rep < 50; ++rep) {
        const int D = 3 + static_cast<int>(gen() % 30);
        const DenseRff base = sample_rff(KernelSpec{}, D, 20 + static_cast<int>(gen() % 40), gen());
        const Embedding m{build_masked_cerf(base, bbp_gamma_for_density(0.5, base.features()), 0.5, 0, gen()), {}};
        const Eigen::Index k = equal_mac_budget(m, D);
        const Embedding at{sample_rff(KernelSpec{}, D, k, 1), {}};
        const Embedding above{sample_rff(KernelSpec{}, D, k + 1, 1), {}};
        CHECK(mac_cost(at) <= mac_cost(m));
        CHECK(mac_cost(m) < mac_cost(above));
    }
    const Embedding tiny{sample_rff(KernelSpec{}, 64, 1, 1), Selector{1}};
    CHECK(equal_mac_budget(tiny, 64) == 1);
    CHECK_THROWS_AS(equal_mac_budget(tiny, 65), Error);
}

TEST_CASE("ComparisonReport aggregates and round-trips through CSV") {
    ComparisonReport report("kernel_error");
    report.add({"cerf", 100, 10, 0.2, "", 1.0, 1});
    report.add({"cerf", 120, 12, 0.2, "kernel_error", 2.0, 2});
    report.add({"cerf", 110, 11, 0.2, "kernel_error", 4.0, 3});
    report.add({"rff", 96, 6, 0.2, "kernel_error", 0.125, 1});
    CHECK_THROWS_AS(report.add({"rff", 1, 1, 0.2, "autoencoder_error", 1.0, 1}), Error);
    CHECK_THROWS_AS(report.add({"a,b", 1, 1, 0.2, "", 1.0, 1}), Error);

    const auto summary = report.summarize();
    REQUIRE(summary.size() == 2);
    CHECK(summary[0].method == "cerf");
    CHECK(summary[0].repeats == 3);
    CHECK(summary[0].mean == doctest::Approx(7.0 / 3.0));
    // Sample sd of {1, 2, 4} is sqrt(7/3).
    CHECK(summary[0].stderr_ == doctest::Approx(std::sqrt(7.0 / 3.0) / std::sqrt(3.0)));
    CHECK(summary[0].mac == doctest::Approx(110.0));
    CHECK(summary[1].stderr_ == 0.0);
    CHECK(report.value("cerf", 0.2, 2) == 2.0);
    CHECK_THROWS_AS(report.value("cerf", 0.4, 2), Error);

    const std::string csv = report.to_csv();
    CHECK(csv.rfind("method,mac,K,density,metric,value,seed\n", 0) == 0);
    const ComparisonReport back = ComparisonReport::from_csv(csv);
    CHECK(back.to_csv() == csv);
    CHECK(back.to_tsv() == report.to_tsv());
    CHECK(report.to_tsv().find("cerf\t0.20000000000000001\t110\t11\t3\t") != std::string::npos);

    CHECK_THROWS_AS(ComparisonReport::from_csv("nope\n"), Error);
    try {
        ComparisonReport::from_csv("method,mac,K,density,metric,value,seed\ncerf,1,1,0.2,m,1.0,1\ncerf,x,1,0.2,m,1,1\n");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        CHECK(e.kind() == ErrorKind::data);
    }
}

TEST_CASE("trained features have the gram of the rescaled selected learner features") {
    const auto inst = planted::make(5, 120, 16);
    cvem::TrainConfig cfg;
    cfg.target_density = 0.5;
    cfg.max_stages = 4;
    const auto t = cvem::train(inst.phi, inst.psi, inst.learner, cfg);
    std::mt19937_64 gen(13);
    const Matrix X = oracle::random_matrix(9, 6, gen);
    const Matrix f = trained_features(t, X);
    CHECK(f.cols() == 16);
    const Matrix selected = embed(t.learner, X);
    CHECK(selected.cols() == 8);
    CHECK((gram(f) - t.c * t.c * gram(selected)).norm() <= 1e-10);
    CHECK((feature_fn(t)(X) - f).norm() == 0.0);
}

TEST_CASE("protocol runs are deterministic and thread-count invariant") {
    ProtocolConfig cfg;
    cfg.input_dim = 8;
    cfg.train_samples = 60;
    cfg.eval_samples = 60;
    cfg.teacher_features = cfg.dictionary_features = 32;
    cfg.reference_features = 2048;
    cfg.components = 8;
    cfg.budgets = {0.5};
    cfg.seeds = {4};
    cfg.train.max_stages = 3;
    cfg.train.admm.max_iters = 20;
    cfg.eval.components = 4;

    set_thread_limit(1);
    const ProtocolResult a = run_protocol(cfg);
    set_thread_limit(4);
    const ProtocolResult b = run_protocol(cfg);
    set_thread_limit(0);
    CHECK(a.kernel.to_csv() == b.kernel.to_csv());
    CHECK(a.autoencoder.to_csv() == b.autoencoder.to_csv());
    CHECK(a.completion.to_csv() == b.completion.to_csv());
    CHECK(a.kernel.rows().size() == 2);
    CHECK(a.trainings == 2);
    CHECK(a.max_orthogonality_error <= 1e-6);
    CHECK(a.autoencoder.rows().size() == 2);
    // Equal-MAC baseline never exceeds the trained embedding's budget.
    for (const auto* r : {&a.kernel, &a.autoencoder}) {
        CHECK(r->rows()[1].mac <= r->rows()[0].mac);
        CHECK(r->rows()[1].mac + 8 > r->rows()[0].mac);
    }
    for (const auto& row : a.autoencoder.rows()) {
        CHECK(row.value >= 0.0);
        CHECK(row.value < 1.0);
    }

    ProtocolConfig bad = cfg;
    bad.budgets = {1.5};
    CHECK_THROWS_AS(run_protocol(bad), Error);
}
