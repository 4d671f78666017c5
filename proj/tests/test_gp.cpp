#include <catch2/catch_amalgamated.hpp>

#include "agecal/gp.hpp"
#include "agecal/synth.hpp"
#include "test_support.hpp"

using namespace agecal;

namespace {

std::vector<TrainingRow> rows_from(const std::vector<InputVector>& X, const Eigen::VectorXd& y) {
    std::vector<TrainingRow> rows;
    for (std::size_t i = 0; i < X.size(); ++i)
        rows.push_back(TrainingRow{X[i].dt, X[i].inv_temp, X[i].soc,
                                   y[static_cast<Eigen::Index>(i)]});
    return rows;
}

} // namespace

TEST_CASE("log marginal likelihood: single zero observation") {
    Hyperparameters h;
    h.theta_t = 1e-3;
    h.theta_soc = 50.0;
    h.theta_dt = 10.0;
    h.sigma_f2 = 0.7;
    h.sigma_n2 = 0.02;
    const std::vector<InputVector> X = {{3.3e-3, 80.0, 30.0}};
    Eigen::VectorXd y(1);
    y << 0.0;
    const double k = composed_kernel(X[0], X[0], h, true);
    const auto eval = log_marginal_likelihood(X, y, h);
    CHECK(eval.value ==
          Catch::Approx(-0.5 * std::log(k) - 0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));
}

TEST_CASE("log marginal likelihood matches the dense determinant oracle") {
    testsup::Rng rng(101);
    for (int rep = 0; rep < 30; ++rep) {
        const auto n = 2 + static_cast<std::size_t>(rng.uniform(0.0, 10.0));
        const auto X = testsup::random_inputs(rng, n);
        const Hyperparameters h = testsup::random_hypers(rng);
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = rng.normal();
        const auto eval = log_marginal_likelihood(X, y, h);
        const auto oracle = testsup::dense_gp_oracle(X, y, {X[0]}, h);
        CHECK(eval.value == Catch::Approx(oracle.lml).margin(1e-10).epsilon(1e-10));
    }
}

TEST_CASE("log marginal likelihood gradient matches central finite differences") {
    testsup::Rng rng(103);
    for (int rep = 0; rep < 20; ++rep) {
        const auto X = testsup::random_inputs_tame(rng, 8);
        const Hyperparameters h = testsup::random_hypers_tame(rng);
        Eigen::VectorXd y(8);
        for (Eigen::Index i = 0; i < 8; ++i) y[i] = rng.normal();

        const auto eval = log_marginal_likelihood(X, y, h);
        const double analytic[5] = {eval.grad.theta_t, eval.grad.theta_soc, eval.grad.theta_dt,
                                    eval.grad.sigma_f2, eval.grad.sigma_n2};
        double grad_norm = 1e-8;
        for (double g : analytic) grad_norm = std::max(grad_norm, std::abs(g));
        for (int coord = 0; coord < 5; ++coord) {
            const double fd = testsup::lml_log_space_fd(X, y, h, coord);
            INFO("rep " << rep << " coord " << coord << " analytic " << analytic[coord] << " fd "
                        << fd);
            CHECK(std::abs(analytic[coord] - fd) / grad_norm < 1e-4);
        }
    }
}

TEST_CASE("log marginal likelihood is invariant under row permutation") {
    testsup::Rng rng(107);
    const auto X = testsup::random_inputs(rng, 10);
    const Hyperparameters h = testsup::random_hypers(rng);
    Eigen::VectorXd y(10);
    for (Eigen::Index i = 0; i < 10; ++i) y[i] = rng.normal();

    std::vector<InputVector> Xp = X;
    Eigen::VectorXd yp = y;
    std::vector<std::size_t> perm = {7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
    for (std::size_t i = 0; i < perm.size(); ++i) {
        Xp[i] = X[perm[i]];
        yp[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(perm[i])];
    }
    const auto a = log_marginal_likelihood(X, y, h);
    const auto b = log_marginal_likelihood(Xp, yp, h);
    CHECK(a.value == Catch::Approx(b.value).margin(1e-12).epsilon(1e-12));
    CHECK(a.grad.theta_t == Catch::Approx(b.grad.theta_t).margin(1e-12).epsilon(1e-10));
    CHECK(a.grad.sigma_n2 == Catch::Approx(b.grad.sigma_n2).margin(1e-12).epsilon(1e-10));
}

TEST_CASE("replicated-input reduction reproduces the dense likelihood and gradient") {
    testsup::Rng rng(109);
    for (int rep = 0; rep < 15; ++rep) {
        // distinct base inputs, each replicated 1-4 times with different targets
        const auto base = testsup::random_inputs_tame(rng, 4);
        std::vector<InputVector> X;
        for (const auto& x : base) {
            const int k = 1 + static_cast<int>(rng.uniform(0.0, 4.0));
            for (int i = 0; i < k; ++i) X.push_back(x);
        }
        Eigen::VectorXd y(static_cast<Eigen::Index>(X.size()));
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = rng.normal();
        const Hyperparameters h = testsup::random_hypers_tame(rng);

        const auto dense = log_marginal_likelihood(X, y, h);
        const auto reduced_data = detail::reduce_rows(rows_from(X, y));
        LogSpaceGrad grad;
        const double reduced = detail::lml_reduced(reduced_data, h, 1e-8, &grad);

        CHECK(reduced == Catch::Approx(dense.value).margin(1e-9).epsilon(1e-10));
        CHECK(grad.theta_t == Catch::Approx(dense.grad.theta_t).margin(1e-8).epsilon(1e-8));
        CHECK(grad.theta_soc == Catch::Approx(dense.grad.theta_soc).margin(1e-8).epsilon(1e-8));
        CHECK(grad.theta_dt == Catch::Approx(dense.grad.theta_dt).margin(1e-8).epsilon(1e-8));
        CHECK(grad.sigma_f2 == Catch::Approx(dense.grad.sigma_f2).margin(1e-8).epsilon(1e-8));
        CHECK(grad.sigma_n2 == Catch::Approx(dense.grad.sigma_n2).margin(1e-8).epsilon(1e-8));
    }
}

TEST_CASE("fit recovers a noiseless linear-in-dt law at one condition") {
    std::vector<TrainingRow> rows;
    const double rate = 0.004; // percent/day
    for (double t0 : {0.0, 30.0, 60.0}) {
        (void)t0;
        for (double dt : {30.0, 60.0, 90.0})
            rows.push_back(TrainingRow{dt, 1.0 / 308.15, 80.0, -rate * dt});
    }
    FitConfig cfg;
    cfg.restarts = 5;
    cfg.max_iters = 150;
    cfg.seed = 5;
    const GpModel model = fit(rows, cfg, {"theta_soc"});
    std::vector<InputVector> Xs;
    for (const auto& r : rows) Xs.push_back(input_of(r));
    const Posterior post = predict(model, Xs, false);
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(std::abs(post.mean[static_cast<Eigen::Index>(i)] - rows[i].dq) < 1e-6);
}

TEST_CASE("fit absorbs replicate disagreement into the noise variance") {
    const double eps = 0.08;
    std::vector<TrainingRow> rows;
    for (double dt : {30.0, 60.0, 90.0}) {
        rows.push_back(TrainingRow{dt, 1.0 / 308.15, 80.0, -0.004 * dt});
        rows.push_back(TrainingRow{dt, 1.0 / 308.15, 80.0, -0.004 * dt + eps});
    }
    FitConfig cfg;
    cfg.restarts = 6;
    cfg.max_iters = 150;
    cfg.seed = 7;
    const GpModel model = fit(rows, cfg, {"theta_soc"});
    CHECK(model.h.sigma_n2 > 0.1 * eps * eps);
}

TEST_CASE("pinned hyperparameters keep their initial value exactly") {
    std::vector<TrainingRow> rows;
    for (double dt : {30.0, 60.0, 90.0})
        for (double it : {1.0 / 298.15, 1.0 / 318.15})
            rows.push_back(TrainingRow{dt, it, 80.0, -0.003 * dt * (it < 3.3e-3 ? 1.4 : 1.0)});
    FitConfig cfg;
    cfg.restarts = 3;
    cfg.max_iters = 60;
    cfg.seed = 11;
    cfg.init.theta_soc = 1e6;
    const GpModel model = fit(rows, cfg, {"theta_soc"});
    CHECK(model.h.theta_soc == 1e6);
    CHECK(model.h.pinned.count("theta_soc") == 1);
}

TEST_CASE("noiseless GP interpolates its training data") {
    testsup::Rng rng(113);
    const auto X = testsup::random_inputs(rng, 8);
    Hyperparameters h = testsup::random_hypers(rng);
    h.sigma_n2 = 0.0;
    Eigen::VectorXd y(8);
    for (Eigen::Index i = 0; i < 8; ++i) y[i] = rng.normal();
    const GpModel model = assemble_model(rows_from(X, y), h, 0);
    const Posterior post = predict(model, X, false);
    for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK(std::abs(post.mean[i] - y[i]) < 1e-8);
        CHECK(post.std[i] <= 1e-4 * std::sqrt(h.sigma_f2));
    }
}

TEST_CASE("far from training data the posterior reverts to the prior") {
    Hyperparameters h;
    h.theta_t = 2e-5; // tiny length-scales push the Matern factors to ~0
    h.theta_soc = 0.5;
    h.theta_dt = 10.0;
    h.sigma_f2 = 2.0;
    h.sigma_n2 = 0.01;
    std::vector<TrainingRow> rows = {{30.0, 1.0 / 318.15, 20.0, -0.5},
                                     {60.0, 1.0 / 318.15, 20.0, -0.9}};
    const GpModel model = assemble_model(rows, h, 0);
    const InputVector far{1.0 / 298.15, 95.0, 45.0};
    const Posterior post = predict(model, {far}, false);
    CHECK(std::abs(post.mean[0]) < 1e-9);
    CHECK(post.var[0] == Catch::Approx(composed_kernel(far, far, h, false)).epsilon(1e-9));
}

TEST_CASE("predict matches the dense-inverse oracle") {
    testsup::Rng rng(127);
    for (int rep = 0; rep < 30; ++rep) {
        const auto n = 2 + static_cast<std::size_t>(rng.uniform(0.0, 12.0));
        const auto X = testsup::random_inputs_tame(rng, n);
        const auto Xs = testsup::random_inputs_tame(rng, 5);
        const Hyperparameters h = testsup::random_hypers_tame(rng);
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = rng.normal();

        const GpModel model = assemble_model(rows_from(X, y), h, 0);
        const Posterior post = predict(model, Xs, true);
        const auto oracle = testsup::dense_gp_oracle(X, y, Xs, h);
        CHECK((post.mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((post.cov - oracle.cov).cwiseAbs().maxCoeff() < 1e-9);

        // diagonal-only path agrees with the full-covariance path
        const Posterior diag = predict(model, Xs, false);
        CHECK((diag.var - post.var).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("posterior variance never exceeds the prior variance") {
    testsup::Rng rng(131);
    for (int rep = 0; rep < 10; ++rep) {
        const auto X = testsup::random_inputs(rng, 10);
        const auto Xs = testsup::random_inputs(rng, 10);
        const Hyperparameters h = testsup::random_hypers(rng);
        Eigen::VectorXd y(10);
        for (Eigen::Index i = 0; i < 10; ++i) y[i] = rng.normal();
        const GpModel model = assemble_model(rows_from(X, y), h, 0);
        const Posterior post = predict(model, Xs, false);
        for (std::size_t j = 0; j < Xs.size(); ++j)
            CHECK(post.var[static_cast<Eigen::Index>(j)] <=
                  composed_kernel(Xs[j], Xs[j], h, false) + 1e-10);
    }
}

TEST_CASE("with fixed hyperparameters extra data never increases posterior variance") {
    testsup::Rng rng(137);
    for (int rep = 0; rep < 20; ++rep) {
        Hyperparameters h = testsup::random_hypers(rng);
        h.sigma_f2 = rng.log_uniform(0.1, 2.0); // moderate scales keep rounding below tolerance
        auto X = testsup::random_inputs(rng, 6);
        for (auto& x : X) x.dt = rng.uniform(1.0, 10.0);
        auto Xs = testsup::random_inputs(rng, 8);
        for (auto& x : Xs) x.dt = rng.uniform(1.0, 10.0);
        Eigen::VectorXd y(6);
        for (Eigen::Index i = 0; i < 6; ++i) y[i] = rng.normal();

        const GpModel base = assemble_model(rows_from(X, y), h, 0);
        const Posterior before = predict(base, Xs, false);

        auto X2 = X;
        InputVector extra = testsup::random_input(rng);
        extra.dt = rng.uniform(1.0, 10.0);
        X2.push_back(extra);
        Eigen::VectorXd y2(7);
        y2.head(6) = y;
        y2[6] = rng.normal();
        const GpModel bigger = assemble_model(rows_from(X2, y2), h, 0);
        const Posterior after = predict(bigger, Xs, false);

        for (Eigen::Index j = 0; j < before.var.size(); ++j)
            CHECK(after.var[j] <= before.var[j] + 1e-12);
    }
}

TEST_CASE("fit is deterministic given the seed") {
    testsup::Rng rng(139);
    std::vector<TrainingRow> rows;
    for (int i = 0; i < 12; ++i) {
        const auto x = testsup::random_input(rng);
        rows.push_back(TrainingRow{x.dt, x.inv_temp, x.soc, rng.normal()});
    }
    FitConfig cfg;
    cfg.restarts = 4;
    cfg.max_iters = 60;
    cfg.seed = 99;
    const GpModel a = fit(rows, cfg);
    const GpModel b = fit(rows, cfg);
    CHECK(a.h.theta_t == b.h.theta_t);
    CHECK(a.h.theta_soc == b.h.theta_soc);
    CHECK(a.h.theta_dt == b.h.theta_dt);
    CHECK(a.h.sigma_f2 == b.h.sigma_f2);
    CHECK(a.h.sigma_n2 == b.h.sigma_n2);
    CHECK(a.lml == b.lml);
    CHECK((a.alpha - b.alpha).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit rejects degenerate inputs") {
    CHECK_THROWS_AS(fit({TrainingRow{30.0, 3.3e-3, 80.0, -0.1}}, FitConfig{}), FitError);
    const std::vector<TrainingRow> same = {{30.0, 3.3e-3, 80.0, -0.1},
                                           {30.0, 3.3e-3, 80.0, -0.2}};
    CHECK_THROWS_AS(fit(same, FitConfig{}), FitError);
    std::vector<TrainingRow> nan_rows = {{30.0, 3.3e-3, 80.0, -0.1},
                                         {60.0, 3.3e-3, 80.0, std::nan("")}};
    CHECK_THROWS_AS(fit(nan_rows, FitConfig{}), DataError);
}

TEST_CASE("hyperparameters recovered from prior draws (sanity, loose bounds)") {
    Hyperparameters truth;
    truth.theta_t = 3e-4;
    truth.theta_soc = 40.0;
    truth.theta_dt = 20.0;
    truth.sigma_f2 = 1.0;
    truth.sigma_n2 = 0.01;
    testsup::Rng rng(149);
    // replicated inputs make the noise variance identifiable
    const auto base = testsup::random_inputs_tame(rng, 40);
    std::vector<InputVector> X;
    for (const auto& x : base)
        for (int r = 0; r < 3; ++r) X.push_back(x);
    const Eigen::VectorXd y = sample_from_prior(X, truth, 7);
    FitConfig cfg;
    cfg.restarts = 6;
    cfg.max_iters = 120;
    cfg.seed = 3;
    std::vector<TrainingRow> rows = rows_from(X, y);
    const GpModel model = fit(rows, cfg);
    // order-of-magnitude recovery, plus the optimizer must not undershoot the truth
    CHECK(std::abs(std::log(model.h.sigma_f2 / truth.sigma_f2)) < 2.5);
    CHECK(std::abs(std::log(model.h.sigma_n2 / truth.sigma_n2)) < 2.5);
    const auto at_truth = log_marginal_likelihood(X, y, truth);
    CHECK(model.lml >= at_truth.value - 1e-6);
}

TEST_CASE("relevance shares") {
    std::vector<TrainingRow> rows;
    for (double it : {1.0 / 298.15, 1.0 / 318.15})
        for (double soc : {50.0, 80.0}) rows.push_back(TrainingRow{30.0, it, soc, -0.1});
    rows.push_back(TrainingRow{60.0, 1.0 / 298.15, 50.0, -0.2});

    Hyperparameters h;
    const double span_t = 1.0 / 298.15 - 1.0 / 318.15;
    h.theta_t = span_t;
    h.theta_soc = 30.0; // equals the SOC span
    h.theta_dt = 10.0;
    h.sigma_f2 = 1.0;
    h.sigma_n2 = 0.01;
    GpModel model = assemble_model(rows, h, 0);
    const Relevance r = relevance(model);
    CHECK(r.temperature == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(r.soc == Catch::Approx(0.5).epsilon(1e-12));

    // halving theta_t strictly increases the temperature share
    model.h.theta_t = span_t / 2.0;
    const Relevance r2 = relevance(model);
    CHECK(r2.temperature > r.temperature);

    // a pinned huge theta_soc drives the SOC share to ~0
    model.h.theta_t = span_t;
    model.h.theta_soc = 1e6;
    const Relevance r3 = relevance(model);
    CHECK(r3.soc < 0.01);
    CHECK(r3.temperature > 0.99);
}

TEST_CASE("relevance is undefined when nothing varies") {
    std::vector<TrainingRow> rows = {{30.0, 3.3e-3, 80.0, -0.1}, {30.0, 3.3e-3, 80.0, -0.2}};
    Hyperparameters h;
    h.theta_t = 1e-3;
    h.theta_soc = 10.0;
    h.sigma_n2 = 0.1;
    const GpModel model = assemble_model(rows, h, 0);
    CHECK_THROWS_AS(relevance(model), UndefinedRelevanceError);
}
