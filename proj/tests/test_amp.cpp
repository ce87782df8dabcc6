#include <catch2/catch_amalgamated.hpp>

#include "hdrisk/amp.hpp"
#include "hdrisk/datagen.hpp"
#include "hdrisk/risk.hpp"

using namespace hdrisk;

namespace {

Dataset synthetic(int n, int p, std::uint64_t seed) {
    SyntheticSpec s;
    s.n = n;
    s.p = p;
    s.beta_prior = SyntheticSpec::BetaPrior::gaussian(4.0);
    s.seed = seed;
    return generate(s).data;
}

PenalizedModel squared_ridge(double lambda) {
    return PenalizedModel(ScalarFamily::squared(), ScalarFamily::ridge(), lambda);
}

PenalizedModel huber_ridge(double lambda) {
    return PenalizedModel(ScalarFamily::pseudo_huber(1.0), ScalarFamily::ridge(), lambda);
}

SolverConfig tight() {
    SolverConfig cfg;
    cfg.grad_tol = 1e-12;
    return cfg;
}

} // namespace

TEST_CASE("initial state") {
    Dataset d = synthetic(20, 10, 1);
    PenalizedModel m = squared_ridge(1.0);
    AmpState s0 = amp_init(m, d, 1.0);
    CHECK(s0.t == 0);
    CHECK(s0.beta.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((s0.z - d.y).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s0.psi_prev.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s0.tau == 1.0);
    CHECK(s0.theta > 0.0);
}

TEST_CASE("first iterate by hand for the quadratic pair") {
    // From beta = 0 with squared loss the Onsager-normalized update is
    // X'y regardless of theta, so one step lands on X'y / (1 + tau).
    Dataset d = synthetic(16, 8, 2);
    PenalizedModel m = squared_ridge(1.0);
    const double tau0 = 0.7;
    AmpState s0 = amp_init(m, d, tau0);
    AmpState s1 = amp_step(m, d, s0);
    Vector expect = (d.X.transpose() * d.y) / (1.0 + tau0);
    CHECK((s1.beta - expect).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(s1.t == 1);
    // the residual update keeps the memory term
    Vector psi0 = s0.theta / (1.0 + s0.theta) * s0.z;
    CHECK((s1.z - (d.y - d.X * s1.beta + psi0)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("onsager scale equation has hand-checkable roots") {
    Dataset d = synthetic(12, 6, 3);
    PenalizedModel m = squared_ridge(1.0);
    // psi'(z, theta) = theta/(1+theta) and eta' = 1/(1+tau) are constant, so
    // theta/(1+theta) = (1/delta) / (1+tau); delta = 2, tau = 1 gives 1/3.
    Vector z = d.y;
    Vector beta = Vector::Zero(6);
    double theta = solve_theta_t(z, beta, 1.0, m, 2.0, d);
    CHECK(theta == Catch::Approx(1.0 / 3.0).margin(1e-10));

    // large aspect ratio: root collapses toward rhs/(1-rhs)
    double rhs = (1.0 / 1e8) / 2.0;
    double small = solve_theta_t(z, beta, 1.0, m, 1e8, d);
    CHECK(small == Catch::Approx(rhs / (1.0 - rhs)).margin(1e-10));
}

TEST_CASE("onsager scale solution satisfies its equation off closed forms") {
    Dataset d = synthetic(30, 15, 4);
    PenalizedModel m = huber_ridge(0.8);
    Vector beta = Vector::Constant(15, 0.2);
    Vector z = d.y - d.X * beta;
    const double tau = 0.9, delta = 2.0;
    double theta = solve_theta_t(z, beta, tau, m, delta, d);
    auto [psi_vals, psi_mean] = detail::psi_vector(m.loss, z, theta);
    Vector arg = beta + d.X.transpose() * psi_vals / psi_mean;
    double eta_mean = 0.0;
    for (int j = 0; j < 15; ++j) eta_mean += m.regularizer.prox_derivative(arg(j), tau);
    eta_mean /= 15.0;
    CHECK(std::abs(psi_mean - eta_mean / delta) <= 1e-10);
    CHECK(psi_mean > 0.0);
    CHECK(psi_mean < 1.0);
}

TEST_CASE("a state assembled from the direct solution does not move") {
    for (auto& m : {squared_ridge(1.0), huber_ridge(1.0)}) {
        Dataset d = synthetic(40, 20, 5);
        FitResult full = fit(m, d, std::nullopt, tight());
        AmpState fp = fixed_point_state(m, d, full, d.aspect_ratio());
        AmpState next = amp_step(m, d, fp);
        CHECK((next.beta - fp.beta).lpNorm<Eigen::Infinity>() <= 1e-9);
        CHECK((next.z - fp.z).lpNorm<Eigen::Infinity>() <= 1e-8);

        FixedPointResidual res = check_fixed_point(fp, m, d, d.aspect_ratio());
        CHECK(res.stationarity <= 1e-8);
        CHECK(res.tau_eq <= 1e-8);
        CHECK(res.theta_eq <= 1e-8);
        CHECK(res.z_eq <= 1e-8);
    }
}

TEST_CASE("perturbed states are flagged by the residual check") {
    Dataset d = synthetic(40, 20, 6);
    PenalizedModel m = huber_ridge(1.0);
    FitResult full = fit(m, d, std::nullopt, tight());
    AmpState fp = fixed_point_state(m, d, full, d.aspect_ratio());
    fp.beta.array() += 0.05;
    FixedPointResidual res = check_fixed_point(fp, m, d, d.aspect_ratio());
    CHECK(res.stationarity > 1e-4);
}

TEST_CASE("fixed point residuals are invariant under row permutation") {
    Dataset d = synthetic(25, 10, 7);
    PenalizedModel m = huber_ridge(0.6);
    FitResult full = fit(m, d, std::nullopt, tight());
    AmpState fp = fixed_point_state(m, d, full, d.aspect_ratio());
    FixedPointResidual base = check_fixed_point(fp, m, d, d.aspect_ratio());

    std::vector<int> perm(25);
    for (int i = 0; i < 25; ++i) perm[i] = (i * 7 + 3) % 25; // a fixed permutation
    Dataset pd;
    pd.X.resize(25, 10);
    pd.y.resize(25);
    AmpState pfp = fp;
    for (int i = 0; i < 25; ++i) {
        pd.X.row(i) = d.X.row(perm[i]);
        pd.y(i) = d.y(perm[i]);
        pfp.z(i) = fp.z(perm[i]);
        pfp.psi_prev(i) = fp.psi_prev(perm[i]);
    }
    FixedPointResidual permuted = check_fixed_point(pfp, m, pd, d.aspect_ratio());
    CHECK(std::abs(permuted.stationarity - base.stationarity) <= 1e-12);
    CHECK(std::abs(permuted.tau_eq - base.tau_eq) <= 1e-12);
    CHECK(std::abs(permuted.theta_eq - base.theta_eq) <= 1e-12);
    CHECK(std::abs(permuted.z_eq - base.z_eq) <= 1e-12);
}

TEST_CASE("iteration reaches the direct solution") {
    Dataset d = synthetic(200, 100, 8);
    for (auto& m : {squared_ridge(1.0), huber_ridge(1.0)}) {
        FitResult full = fit(m, d, std::nullopt, tight());
        double tau = solve_tau_hat(full, m, d.aspect_ratio());
        AmpRunOptions opts;
        opts.tol = 1e-10;
        opts.max_iter = 2000;
        AmpResult run = amp_run(m, d, TauSchedule::constant(tau), std::nullopt, opts);
        CHECK((run.final.beta - full.beta_hat).lpNorm<Eigen::Infinity>() <= 1e-6);
        REQUIRE(run.trace.size() >= 2);
        CHECK(run.trace.front().t == 0);
        CHECK(run.trace.back().t == run.final.t);
        CHECK(run.trace.back().delta_beta_inf <= opts.tol);
        // the contraction is eventually monotone
        std::size_t last = run.trace.size() - 1;
        for (std::size_t k = std::max<std::size_t>(1, last - 3); k < last; ++k)
            CHECK(run.trace[k + 1].delta_beta_inf <= run.trace[k].delta_beta_inf);
    }
}

TEST_CASE("uninformative design collapses to the pure penalty solution") {
    Dataset d;
    d.X = Matrix::Zero(10, 4);
    d.y = Vector::LinSpaced(10, -2.0, 2.0);
    PenalizedModel m = squared_ridge(1.0);
    AmpResult run = amp_run(m, d, TauSchedule::constant(1.0));
    CHECK(run.final.beta.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(run.final.t <= 2);
}

TEST_CASE("iteration budget violations carry their trace") {
    Dataset d = synthetic(30, 15, 9);
    PenalizedModel m = huber_ridge(1.0);
    AmpRunOptions opts;
    opts.max_iter = 1;
    opts.tol = 1e-12;
    try {
        amp_run(m, d, TauSchedule::constant(1.0), std::nullopt, opts);
        FAIL("expected NonConvergence");
    } catch (const NonConvergence& e) {
        CHECK(e.trace.size() == 2);
        CHECK(e.last.t == 1);
        CHECK(e.last.beta.lpNorm<Eigen::Infinity>() > 0.0);
    }
}

TEST_CASE("degenerate memory coefficient is rejected") {
    Dataset d = synthetic(12, 6, 10);
    PenalizedModel m = squared_ridge(1.0);
    AmpState s;
    s.t = 0;
    s.beta = Vector::Zero(6);
    s.z = d.y;
    s.psi_prev = Vector::Zero(12);
    s.theta = 1e-13; // valid state, but psi' collapses below the usable floor
    s.tau = 1.0;
    CHECK_THROWS_AS(amp_step(m, d, s), DegenerateOnsager);
}

TEST_CASE("prox scale schedules") {
    TauSchedule c = TauSchedule::constant(2.0);
    CHECK(c.at(0) == 2.0);
    CHECK(c.at(7) == 2.0);
    TauSchedule g = TauSchedule::geometric(2.0, 0.5, 0.9);
    CHECK(g.at(0) == Catch::Approx(3.0).margin(1e-15));
    CHECK(g.at(1) == Catch::Approx(2.0 * (1.0 + 0.45)).margin(1e-15));
    CHECK(g.at(200) == Catch::Approx(2.0).margin(1e-8));
    CHECK_THROWS_AS(TauSchedule::constant(0.0), std::invalid_argument);
}

TEST_CASE("state validation") {
    AmpState s;
    s.t = 0;
    s.beta = Vector::Zero(3);
    s.z = Vector::Zero(5);
    s.psi_prev = Vector::Zero(5);
    s.theta = 0.1;
    s.tau = 1.0;
    s.validate();
    s.beta(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.beta(1) = 0.0;
    s.tau = -1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
