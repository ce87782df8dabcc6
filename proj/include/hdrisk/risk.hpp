#pragma once

#include <map>
#include <optional>
#include <vector>

#include "hdrisk/datagen.hpp"
#include "hdrisk/parallel.hpp"
#include "hdrisk/rootfind.hpp"
#include "hdrisk/solver.hpp"

namespace hdrisk {

// One row of risk numbers for a fitted model.  Absent estimates are left
// disengaged; serialization writes empty cells for them.
struct RiskReport {
    double lambda = 0.0;
    std::optional<double> lo;
    std::optional<double> alo;
    std::optional<double> amp;
    std::map<int, double> kfold;
    std::optional<double> oracle;
    std::optional<double> tau_hat;
    std::optional<double> theta_hat;
    std::optional<Vector> leverages;

    void validate() const {
        if (amp.has_value() != theta_hat.has_value() || amp.has_value() != tau_hat.has_value())
            throw std::invalid_argument("RiskReport: amp, tau_hat, theta_hat must co-occur");
        if (alo.has_value() != leverages.has_value())
            throw std::invalid_argument("RiskReport: alo and leverages must co-occur");
    }

    static std::string csv_header() {
        return "lambda,lo,alo,amp,kfold2,kfold3,kfold5,oracle,tau_hat,theta_hat";
    }

    std::string csv_row() const {
        auto cell = [](const std::optional<double>& v) {
            return v ? detail::fmt(*v) : std::string();
        };
        auto kcell = [&](int k) {
            auto it = kfold.find(k);
            return it == kfold.end() ? std::string() : detail::fmt(it->second);
        };
        return detail::fmt(lambda) + "," + cell(lo) + "," + cell(alo) + "," + cell(amp) +
               "," + kcell(2) + "," + kcell(3) + "," + kcell(5) + "," + cell(oracle) + "," +
               cell(tau_hat) + "," + cell(theta_hat);
    }
};

// ---------------------------------------------------------------------------
// Exact leave-one-out.

struct LooRisk {
    double lo;
    Vector residuals; // y_i - x_i' beta_tilde^i, the held-out residuals
};

// (1/n) sum_i l(y_i - x_i' beta_tilde^i) where beta_tilde^i refits without
// row i.  Refits share one factorization context and run in parallel; each
// result lands in its own slot so the output is schedule-independent.
inline LooRisk loocv_risk(const PenalizedModel& model, const Dataset& data,
                          const SolverConfig& cfg = {}, const FitResult* full_fit = nullptr,
                          const LooContext* shared_ctx = nullptr) {
    data.validate();
    const int n = data.n();
    FitResult local;
    if (!full_fit) {
        local = fit(model, data, std::nullopt, cfg);
        full_fit = &local;
    }
    LooContext ctx_local;
    if (!shared_ctx) {
        ctx_local = make_loo_context(model, data, *full_fit);
        shared_ctx = &ctx_local;
    }
    Vector loo_resid(n);
    parallel::parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        try {
            FitResult r = fit_loo(model, data, static_cast<int>(i), *full_fit, cfg, shared_ctx);
            loo_resid(static_cast<int>(i)) = r.residuals(static_cast<int>(i));
        } catch (const NumericalError& e) {
            throw NumericalError("loocv_risk: index " + std::to_string(i) + ": " + e.what());
        }
    });
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += model.loss.value(loo_resid(i));
    return {sum / n, std::move(loo_resid)};
}

// ---------------------------------------------------------------------------
// Approximate leave-one-out via leverages.

namespace detail {
inline Vector leverages_impl(const PenalizedModel& model, const Dataset& data,
                             const FitResult& fit, const Matrix* solved_xt) {
    const int n = data.n();
    Vector r = data.y - data.X * fit.beta_hat;
    Matrix solved_local;
    if (!solved_xt) {
        Matrix H = hessian(model, data, fit.beta_hat);
        Eigen::LLT<Matrix> llt(H);
        if (llt.info() != Eigen::Success)
            throw SingularHessian("alo_leverages: curvature matrix not positive definite");
        solved_local = llt.solve(data.X.transpose());
        solved_xt = &solved_local;
    }
    // H_ii = l''(r_i) * x_i' A^{-1} x_i; the quadratic forms are row-column
    // dots against the presolved system.
    Vector h(n);
    for (int i = 0; i < n; ++i) {
        double quad = data.X.row(i).dot(solved_xt->col(i));
        double hi = model.loss.d2(r(i)) * quad;
        if (hi >= 1.0 - 1e-8)
            throw LeverageOutOfRange(
                "alo_leverages: leverage at index " + std::to_string(i) +
                    " reached 1; leave-one-out correction undefined",
                i, hi);
        h(i) = std::max(hi, 0.0);
    }
    return h;
}
} // namespace detail

// Diagonal of the generalized hat matrix H = X A^{-1} X' D_l at the fit,
// with A the curvature matrix of the objective.  One factorization, n solves.
inline Vector alo_leverages(const PenalizedModel& model, const Dataset& data,
                            const FitResult& fit) {
    data.validate();
    return detail::leverages_impl(model, data, fit, nullptr);
}

struct AloRisk {
    double alo;
    Vector residuals; // leverage-corrected residuals
    Vector leverages;
};

namespace detail {
inline AloRisk alo_risk_impl(const PenalizedModel& model, const Dataset& data,
                             const FitResult& fit, const Matrix* solved_xt) {
    const int n = data.n();
    Vector r = data.y - data.X * fit.beta_hat;
    Vector h = leverages_impl(model, data, fit, solved_xt);
    Vector corrected(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double d2 = model.loss.d2(r(i));
        if (d2 <= 1e-12)
            throw ZeroCurvature("alo_risk: loss curvature vanished at residual " +
                                    std::to_string(i) + "; correction ratio undefined",
                                i);
        corrected(i) = r(i) + (model.loss.d1(r(i)) / d2) * h(i) / (1.0 - h(i));
        sum += model.loss.value(corrected(i));
    }
    return {sum / n, std::move(corrected), std::move(h)};
}
} // namespace detail

// One-Newton-step approximation of leave-one-out: each residual gets the
// influence correction (l'/l'') * h/(1-h).  Exact for quadratic problems.
inline AloRisk alo_risk(const PenalizedModel& model, const Dataset& data,
                        const FitResult& fit) {
    data.validate();
    return detail::alo_risk_impl(model, data, fit, nullptr);
}

// ---------------------------------------------------------------------------
// K-fold cross validation.

// Random equal-size partition (contiguous blocks of a seeded permutation,
// remainder spread one per fold), cold-start refits, average held-out loss
// over all n points.  K = n reproduces leave-one-out by construction.
inline double kfold_risk(const PenalizedModel& model, const Dataset& data, int K,
                         std::uint64_t seed, const SolverConfig& cfg = {}) {
    data.validate();
    const int n = data.n();
    if (K < 2 || K > n) throw std::invalid_argument("kfold_risk: need 2 <= K <= n");
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng::Stream st(seed, "kfold_partition");
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(st.uniform_int(static_cast<std::uint64_t>(i) + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<int> fold_of(n);
    int pos = 0;
    for (int k = 0; k < K; ++k) {
        int size = n / K + (k < n % K ? 1 : 0);
        for (int s = 0; s < size; ++s) fold_of[perm[pos++]] = k;
    }
    std::vector<double> fold_loss_sum(K, 0.0);
    parallel::parallel_for(static_cast<std::size_t>(K), [&](std::size_t k) {
        Vector weights = Vector::Ones(n);
        for (int i = 0; i < n; ++i)
            if (fold_of[i] == static_cast<int>(k)) weights(i) = 0.0;
        FitResult r;
        try {
            r = detail::fit_weighted(model, data, &weights, std::nullopt, cfg);
        } catch (const NumericalError& e) {
            throw NumericalError("kfold_risk: fold " + std::to_string(k) + ": " + e.what());
        }
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            if (fold_of[i] == static_cast<int>(k)) s += model.loss.value(r.residuals(i));
        fold_loss_sum[k] = s;
    });
    double total = 0.0;
    for (int k = 0; k < K; ++k) total += fold_loss_sum[k];
    return total / n;
}

// ---------------------------------------------------------------------------
// AMP calibration scalars.

namespace detail {
// <1/(1 + tau * R''(beta))> over coordinates.
inline double mean_reg_shrink(const PenalizedModel& model, const Vector& beta, double tau) {
    double s = 0.0;
    for (int j = 0; j < beta.size(); ++j)
        s += 1.0 / (1.0 + tau * model.regularizer.d2(beta(j)));
    return s / beta.size();
}

// <l''(r) / (1 + theta * l''(r))> over residuals.
inline double mean_loss_shrink(const PenalizedModel& model, const Vector& r, double theta) {
    double s = 0.0;
    for (int i = 0; i < r.size(); ++i) {
        double d2 = model.loss.d2(r(i));
        s += d2 / (1.0 + theta * d2);
    }
    return s / r.size();
}
} // namespace detail

// The correction magnitude implied by a given tau:
//   theta = (1/(delta*lambda)) * <tau / (1 + tau * R''(beta))>.
inline double theta_from_tau(const FitResult& fit, const PenalizedModel& model, double delta,
                             double tau) {
    return tau * detail::mean_reg_shrink(model, fit.beta_hat, tau) / (delta * model.lambda);
}

// The effective regularization implied by a given theta:
//   lambda / tau = <l''(r) / (1 + theta * l''(r))>.
inline double tau_from_theta(const FitResult& fit, const PenalizedModel& model, double theta) {
    double m = detail::mean_loss_shrink(model, fit.residuals, theta);
    if (!(m > 0.0))
        throw NumericalError("tau_from_theta: loss curvature vanished at every residual");
    return model.lambda / m;
}

// Solves for the unique tau_hat with
//   lambda = < l''(r) / (1/tau + (1/(delta*lambda)) <1/(1+tau R''(beta))> l''(r)) >.
// The left side is strictly increasing in tau, so a bracketing bisection is
// exact; the bracket grows from [1e-8, 1] and gives up outside [1e-12, 1e12].
inline double solve_tau_hat(const FitResult& fit, const PenalizedModel& model, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("solve_tau_hat: delta must be positive");
    const Vector& r = fit.residuals;
    const Vector& beta = fit.beta_hat;
    std::vector<double> loss_d2(static_cast<std::size_t>(r.size()));
    for (int i = 0; i < r.size(); ++i) loss_d2[static_cast<std::size_t>(i)] = model.loss.d2(r(i));
    auto residual = [&](double tau) {
        double c = detail::mean_reg_shrink(model, beta, tau) / (delta * model.lambda);
        double s = 0.0;
        for (double d2 : loss_d2) s += d2 / (1.0 / tau + c * d2);
        return s / static_cast<double>(loss_d2.size()) - model.lambda;
    };
    double lo = 1e-8, hi = 1.0;
    if (residual(lo) > 0.0) {
        lo = 1e-12;
        if (residual(lo) > 0.0)
            throw BracketFailure("solve_tau_hat: equation already positive at tau = 1e-12", lo,
                                 hi);
        hi = 1e-8;
    } else {
        rootfind::BracketOptions opt;
        opt.hi_cap = 1e12;
        std::tie(lo, hi) = rootfind::expand_upward(residual, lo, hi, opt);
    }
    return rootfind::bisect(residual, lo, hi, 1e-12 * model.lambda);
}

// G(theta) from the dual characterization; strictly decreasing with G(0) > 1,
// so G(theta_hat) = 1 has exactly one root.
inline double calibration_gap(const FitResult& fit, const PenalizedModel& model, double delta,
                              double theta) {
    double loss_shrink = detail::mean_loss_shrink(model, fit.residuals, theta);
    if (!(loss_shrink > 0.0))
        throw NumericalError("calibration_gap: loss curvature vanished at every residual");
    double one_plus = 0.0;
    for (int i = 0; i < fit.residuals.size(); ++i) {
        double d2 = model.loss.d2(fit.residuals(i));
        one_plus += 1.0 / (1.0 + theta * d2);
    }
    one_plus /= fit.residuals.size();
    double tau = model.lambda / loss_shrink;
    return one_plus + detail::mean_reg_shrink(model, fit.beta_hat, tau) / delta;
}

inline double solve_theta_hat(const FitResult& fit, const PenalizedModel& model, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("solve_theta_hat: delta must be positive");
    auto residual = [&](double theta) {
        return 1.0 - calibration_gap(fit, model, delta, theta); // increasing in theta
    };
    double lo = 0.0, hi = 1.0;
    if (residual(lo) >= 0.0)
        throw BracketFailure("solve_theta_hat: G(0) <= 1; calibration preconditions violated",
                             lo, hi);
    rootfind::BracketOptions opt;
    opt.hi_cap = 1e12;
    std::tie(lo, hi) = rootfind::expand_upward(residual, lo, hi, opt);
    return rootfind::bisect(residual, lo, hi, 1e-12);
}

// ---------------------------------------------------------------------------
// AMP-based risk estimate.

struct AmpRisk {
    double amp;
    double tau_hat;
    double theta_hat;
    Vector corrected_residuals; // z_i = r_i + theta_hat * l'(r_i)
};

// amp = (1/n) sum_i l(r_i + theta_hat l'(r_i)).  theta_hat comes from the
// G-equation route; the direct tau-equation route is recomputed and must
// agree to 1e-9, otherwise something upstream is broken and we say so.
inline AmpRisk amp_risk(const PenalizedModel& model, const Dataset& data, const FitResult& fit,
                        double delta) {
    double theta = solve_theta_hat(fit, model, delta);
    double tau = tau_from_theta(fit, model, theta);
    double tau_direct = solve_tau_hat(fit, model, delta);
    double theta_direct = theta_from_tau(fit, model, delta, tau_direct);
    if (std::abs(tau - tau_direct) > 1e-9 * (1.0 + std::abs(tau)) ||
        std::abs(theta - theta_direct) > 1e-9 * (1.0 + std::abs(theta)))
        throw CalibrationMismatch(
            "amp_risk: theta-first and tau-first calibrations disagree (theta " +
            std::to_string(theta) + " vs " + std::to_string(theta_direct) + ", tau " +
            std::to_string(tau) + " vs " + std::to_string(tau_direct) + ")");
    const int n = data.n();
    Vector r = data.y - data.X * fit.beta_hat;
    Vector z(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        z(i) = r(i) + theta * model.loss.d1(r(i));
        sum += model.loss.value(z(i));
    }
    return {sum / n, tau, theta, std::move(z)};
}

// ---------------------------------------------------------------------------
// Oracles.

// Closed-form out-of-sample risk for a quadratic loss under the Gaussian
// test law x_new ~ N(0, I/n), y_new = x_new' beta_star + N(0, noise_sd^2):
// the prediction error y_new - x_new' beta_hat is centered Gaussian with
// variance noise_sd^2 + |beta_hat - beta_star|^2 / n, and E l(u) for
// l(u) = c u^2 / 2 is c/2 times that variance.
inline double oracle_risk_gaussian(const FitResult& fit, const Vector& beta_star,
                                   double noise_sd, int n,
                                   const ScalarFamily& loss = ScalarFamily::squared()) {
    if (!loss.is_quadratic())
        throw std::invalid_argument(
            "oracle_risk_gaussian: closed form requires a quadratic loss; use oracle_risk_mc");
    if (beta_star.size() != fit.beta_hat.size())
        throw std::invalid_argument("oracle_risk_gaussian: beta_star length mismatch");
    if (!(noise_sd >= 0.0) || n < 1)
        throw std::invalid_argument("oracle_risk_gaussian: bad noise_sd or n");
    double err_var = noise_sd * noise_sd + (fit.beta_hat - beta_star).squaredNorm() / n;
    return 0.5 * loss.d2(0.0) * err_var;
}

struct McEstimate {
    double estimate;
    double std_error;
};

// Monte Carlo Err_out for any loss: m fresh draws of (x_new, y_new) from the
// synthetic law, averaging l(y_new - x_new' beta_hat).  Only the projection
// onto beta_star - beta_hat is needed, so memory stays O(p).
inline McEstimate oracle_risk_mc(const FitResult& fit, const PenalizedModel& model,
                                 const SyntheticSpec& gen, const Vector& beta_star, int m,
                                 std::uint64_t seed) {
    gen.validate();
    if (m < 100) throw std::invalid_argument("oracle_risk_mc: m must be >= 100");
    if (beta_star.size() != fit.beta_hat.size() || fit.beta_hat.size() != gen.p)
        throw std::invalid_argument("oracle_risk_mc: dimension mismatch");
    const double x_sd = 1.0 / std::sqrt(static_cast<double>(gen.n));
    Vector d = beta_star - fit.beta_hat;
    rng::Stream xs(seed, "test_design");
    rng::Stream ws(seed, "test_noise");
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < m; ++t) {
        double proj = 0.0;
        for (int j = 0; j < gen.p; ++j) proj += xs.gaussian() * d(j);
        double u = x_sd * proj + gen.noise_sd * ws.gaussian();
        double v = model.loss.value(u);
        sum += v;
        sum_sq += v * v;
    }
    double mean = sum / m;
    double var = std::max(0.0, (sum_sq - m * mean * mean) / (m - 1.0));
    return {mean, std::sqrt(var / m)};
}

// ---------------------------------------------------------------------------
// Bundled assessment used by the CLI and the experiment drivers: one fit,
// one factorization context shared between exact and approximate
// leave-one-out, then the remaining estimators.

struct RiskRequest {
    bool lo = true;
    bool alo = true;
    bool amp = true;
    std::vector<int> kfolds = {2, 3, 5};
    std::uint64_t seed = 1;
    SolverConfig solver;
    const Vector* beta_star = nullptr; // enables the oracle column
    double noise_sd = 1.0;
    int mc_points = 100000; // oracle draws when the loss has no closed form
};

inline RiskReport assess_risk(const PenalizedModel& model, const Dataset& data,
                              const RiskRequest& req = {}) {
    data.validate();
    RiskReport rep;
    rep.lambda = model.lambda;
    FitResult full = fit(model, data, std::nullopt, req.solver);
    if (req.lo || req.alo) {
        LooContext ctx = make_loo_context(model, data, full);
        if (req.lo) rep.lo = loocv_risk(model, data, req.solver, &full, &ctx).lo;
        if (req.alo) {
            AloRisk a = detail::alo_risk_impl(model, data, full, &ctx.solved_xt);
            rep.alo = a.alo;
            rep.leverages = std::move(a.leverages);
        }
    }
    if (req.amp) {
        AmpRisk a = amp_risk(model, data, full, data.aspect_ratio());
        rep.amp = a.amp;
        rep.tau_hat = a.tau_hat;
        rep.theta_hat = a.theta_hat;
    }
    for (int k : req.kfolds) rep.kfold[k] = kfold_risk(model, data, k, req.seed, req.solver);
    if (req.beta_star) {
        if (model.loss.is_quadratic()) {
            rep.oracle = oracle_risk_gaussian(full, *req.beta_star, req.noise_sd, data.n(),
                                              model.loss);
        } else {
            SyntheticSpec gen{data.n(), data.p(), SyntheticSpec::BetaPrior::constant(0.0),
                              req.noise_sd, req.seed};
            rep.oracle = oracle_risk_mc(full, model, gen, *req.beta_star, req.mc_points,
                                        rng::derive_seed(req.seed, "oracle_mc"))
                             .estimate;
        }
    }
    rep.validate();
    return rep;
}

} // namespace hdrisk
