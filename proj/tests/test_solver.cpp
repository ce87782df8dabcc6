#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "hdrisk/solver.hpp"

using namespace hdrisk;

namespace {

Dataset random_dataset(int n, int p, std::uint64_t seed, double signal_sd = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset d;
    d.X.resize(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) d.X(i, j) = g(gen) / std::sqrt(double(n));
    Vector beta(p);
    for (int j = 0; j < p; ++j) beta(j) = signal_sd * g(gen);
    d.y = d.X * beta;
    for (int i = 0; i < n; ++i) d.y(i) += g(gen);
    return d;
}

PenalizedModel squared_ridge(double lambda) {
    return PenalizedModel(ScalarFamily::squared(), ScalarFamily::ridge(), lambda);
}

PenalizedModel huber_ridge(double lambda, double mu = 1.0) {
    return PenalizedModel(ScalarFamily::pseudo_huber(mu), ScalarFamily::ridge(), lambda);
}

} // namespace

TEST_CASE("ridge fit matches the closed form") {
    for (std::uint64_t seed : {1, 2, 3}) {
        Dataset d = random_dataset(20, 10, seed);
        PenalizedModel m = squared_ridge(0.7);
        FitResult r = fit(m, d);
        Matrix A = d.X.transpose() * d.X + 0.7 * Matrix::Identity(10, 10);
        Vector closed = A.ldlt().solve(d.X.transpose() * d.y);
        CHECK((r.beta_hat - closed).lpNorm<Eigen::Infinity>() <= 1e-8);
        CHECK(r.grad_inf_norm <= 1e-10);
        CHECK((r.residuals - (d.y - d.X * r.beta_hat)).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("vanishing penalty recovers an interpolating solution") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset d;
    d.X.resize(30, 8);
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 8; ++j) d.X(i, j) = g(gen);
    Vector beta0(8);
    for (int j = 0; j < 8; ++j) beta0(j) = g(gen);
    d.y = d.X * beta0; // exactly realizable
    FitResult r = fit(squared_ridge(1e-10), d);
    CHECK((r.beta_hat - beta0).lpNorm<Eigen::Infinity>() <= 1e-5);
}

TEST_CASE("starting at the solution costs no iterations") {
    Dataset d = random_dataset(25, 6, 9);
    PenalizedModel m = huber_ridge(1.1);
    FitResult first = fit(m, d);
    FitResult again = fit(m, d, first.beta_hat);
    CHECK(again.iterations <= 1);
    CHECK((again.beta_hat - first.beta_hat).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("curvature matrix construction") {
    Dataset d = random_dataset(18, 5, 21);
    PenalizedModel m = squared_ridge(0.4);
    Vector beta = Vector::Constant(5, 0.3);
    Matrix H = hessian(m, d, beta);
    Matrix expect = d.X.transpose() * d.X + 0.4 * Matrix::Identity(5, 5);
    CHECK((H - expect).lpNorm<Eigen::Infinity>() <= 1e-14);
    CHECK((H - H.transpose()).lpNorm<Eigen::Infinity>() == 0.0);

    PenalizedModel ph = huber_ridge(0.4);
    FitResult r = fit(ph, d);
    Matrix Hc = hessian(ph, d, r.beta_hat);
    CHECK((Hc - Hc.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
    // Rayleigh bound: X'DX dominates min(D) X'X, plus the nonnegative penalty
    Eigen::SelfAdjointEigenSolver<Matrix> gram(d.X.transpose() * d.X,
                                               Eigen::EigenvaluesOnly);
    double min_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d.n(); ++i)
        min_d = std::min(min_d, ph.loss.d2(r.residuals(i)));
    Eigen::SelfAdjointEigenSolver<Matrix> eh(Hc, Eigen::EigenvaluesOnly);
    CHECK(eh.eigenvalues().minCoeff() >=
          min_d * gram.eigenvalues().minCoeff() - 1e-12);
}

TEST_CASE("objective decreases monotonically across iterations") {
    Dataset d = random_dataset(40, 12, 31);
    PenalizedModel m(ScalarFamily::logistic_residual(), ScalarFamily::ridge(), 0.3);
    std::vector<double> history;
    fit(m, d, Vector::Constant(12, 5.0), {}, &history); // deliberately bad start
    REQUIRE(history.size() >= 2);
    for (std::size_t k = 1; k < history.size(); ++k)
        CHECK(history[k] <= history[k - 1] + 1e-10);
}

TEST_CASE("fit is deterministic") {
    Dataset d = random_dataset(30, 10, 55);
    PenalizedModel m = huber_ridge(0.9);
    FitResult a = fit(m, d);
    FitResult b = fit(m, d);
    CHECK((a.beta_hat - b.beta_hat).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("iteration cap carries the best iterate out") {
    Dataset d = random_dataset(25, 8, 13);
    PenalizedModel m = huber_ridge(0.5);
    SolverConfig cfg;
    cfg.max_iter = 1;
    try {
        fit(m, d, Vector::Constant(8, 50.0), cfg);
        FAIL("expected NewtonMaxIter");
    } catch (const NewtonMaxIter& e) {
        CHECK(e.best_iterate.beta_hat.size() == 8);
        CHECK(e.best_grad_inf_norm > 0.0);
        CHECK(std::isfinite(e.best_iterate.objective));
    }
}

TEST_CASE("leave-one-out scalar closed form") {
    Dataset d;
    d.X.resize(3, 1);
    d.X << 1.0, -0.5, 2.0;
    d.y.resize(3);
    d.y << 0.4, 1.0, -0.3;
    PenalizedModel m = squared_ridge(0.8);
    FitResult full = fit(m, d);
    LooContext ctx = make_loo_context(m, d, full);
    for (int i = 0; i < 3; ++i) {
        double num = 0.0, den = 0.8;
        for (int j = 0; j < 3; ++j) {
            if (j == i) continue;
            num += d.X(j, 0) * d.y(j);
            den += d.X(j, 0) * d.X(j, 0);
        }
        FitResult r = fit_loo(m, d, i, full, {}, &ctx);
        CHECK(r.beta_hat(0) == Catch::Approx(num / den).margin(1e-10));
        FitResult slow = fit_loo(m, d, i, full);
        CHECK(slow.beta_hat(0) == Catch::Approx(num / den).margin(1e-10));
    }
}

TEST_CASE("deleted-row refit improves the reduced objective") {
    Dataset d = random_dataset(20, 6, 101);
    d.X.row(7) = d.X.row(3); // plant a duplicate row
    d.y(7) = d.y(3);
    PenalizedModel m = huber_ridge(0.6);
    FitResult full = fit(m, d);
    LooContext ctx = make_loo_context(m, d, full);
    for (int i : {3, 7, 11}) {
        FitResult r = fit_loo(m, d, i, full, {}, &ctx);
        double reduced_at_full = 0.0;
        for (int k = 0; k < 20; ++k)
            if (k != i) reduced_at_full += m.loss.value(full.residuals(k));
        for (int j = 0; j < 6; ++j)
            reduced_at_full += m.lambda * m.regularizer.value(full.beta_hat(j));
        CHECK(r.objective <= reduced_at_full + 1e-12);
    }
}

TEST_CASE("context-accelerated refits agree with plain refits") {
    Dataset d = random_dataset(60, 30, 17);
    PenalizedModel m = huber_ridge(1.0);
    FitResult full = fit(m, d);
    LooContext ctx = make_loo_context(m, d, full);
    for (int i : {0, 13, 59}) {
        FitResult fast = fit_loo(m, d, i, full, {}, &ctx);
        FitResult slow = fit_loo(m, d, i, full);
        CHECK((fast.beta_hat - slow.beta_hat).lpNorm<Eigen::Infinity>() <= 1e-8);
        CHECK(fast.grad_inf_norm <= 1e-10);
    }
}

TEST_CASE("warm starts beat cold starts on refits") {
    Dataset d = random_dataset(200, 100, 23);
    PenalizedModel m = huber_ridge(1.0);
    FitResult full = fit(m, d);
    SolverConfig cfg;
    int warm_total = 0, cold_total = 0;
    for (int i : {0, 50, 150}) {
        Vector w = Vector::Ones(200);
        w(i) = 0.0;
        warm_total += fit_loo(m, d, i, full, cfg).iterations;
        FitResult cold = detail::fit_weighted(m, d, &w, std::nullopt, cfg);
        cold_total += cold.iterations;
    }
    CHECK(warm_total <= cold_total);
}

TEST_CASE("argument validation") {
    Dataset d = random_dataset(10, 3, 1);
    PenalizedModel m = squared_ridge(1.0);
    FitResult full = fit(m, d);
    CHECK_THROWS_AS(fit_loo(m, d, -1, full), std::invalid_argument);
    CHECK_THROWS_AS(fit_loo(m, d, 10, full), std::invalid_argument);
    CHECK_THROWS_AS(fit(m, d, Vector::Zero(5)), std::invalid_argument);
    SolverConfig bad;
    bad.grad_tol = 0.0;
    CHECK_THROWS_AS(fit(m, d, std::nullopt, bad), std::invalid_argument);
    SolverConfig tiny_cap;
    tiny_cap.dim_cap = 2;
    CHECK_THROWS_AS(fit(m, d, std::nullopt, tiny_cap), std::invalid_argument);
}
