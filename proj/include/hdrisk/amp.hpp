#pragma once

#include <cmath>
#include <vector>

#include "hdrisk/risk.hpp"

namespace hdrisk {

// The theta-equation bisection could not find a sign change; the instance
// violates the existence preconditions (e.g. delta <= 1).
struct ThetaBracketFailure : BracketFailure {
    using BracketFailure::BracketFailure;
};

// AMP iterate.  State at time t holds beta^t, z^t, the theta^t solved
// against z^t, the tau_t used for the next coordinate prox, and the Onsager
// memory psi(z^{t-1}, theta^{t-1}) entering the next residual update.
struct AmpState {
    int t = 0;
    Vector beta;     // p
    Vector z;        // n
    double theta;    // > 0
    double tau;      // > 0
    Vector psi_prev; // n; zero at initialization

    void validate() const {
        if (!(theta > 0.0) || !(tau > 0.0))
            throw std::invalid_argument("AmpState: theta and tau must be positive");
        if (!beta.allFinite() || !z.allFinite() || !psi_prev.allFinite())
            throw std::invalid_argument("AmpState: non-finite iterate");
    }
};

// Residuals of the four stationarity equations characterizing the AMP fixed
// point (with the effective regularization identified with lambda).
struct FixedPointResidual {
    double stationarity; // inf-norm of  -X' l'(y - X beta) + lambda R'(beta)
    double tau_eq;       // tau calibration equation residual
    double theta_eq;     // |theta - theta_from_tau(tau)|
    double z_eq;         // inf-norm of  z - (y - X beta + theta l'(y - X beta))
};

namespace detail {
// Evaluates psi over a residual vector; returns the values and <psi'>.
inline std::pair<Vector, double> psi_vector(const ScalarFamily& loss, const Vector& z,
                                            double theta) {
    Vector out(z.size());
    double mean_d1 = 0.0;
    for (int i = 0; i < z.size(); ++i) {
        PsiValue pv = psi(loss, z(i), theta);
        out(i) = pv.value;
        mean_d1 += pv.d1;
    }
    return {std::move(out), mean_d1 / z.size()};
}
} // namespace detail

// Solves the scalar equation tying theta^t to the current iterate:
//   <psi'(z, theta)>  =  (1/delta) <eta'(beta + X' psi(z, theta) / <psi'>, tau)>.
// The left side increases from 0 toward 1 while the right side stays within
// [0, 1/delta], so for delta > 1 a crossing exists; the smallest positive
// root is taken by bisection from 0 (existence, not uniqueness, is what the
// theory guarantees).  The design matrix is needed because the right side's
// argument moves with theta.
inline double solve_theta_t(const Vector& z, const Vector& beta_t, double tau,
                            const PenalizedModel& model, double delta, const Dataset& data) {
    if (!(tau > 0.0)) throw std::invalid_argument("solve_theta_t: tau must be positive");
    if (!(delta > 0.0)) throw std::invalid_argument("solve_theta_t: delta must be positive");
    auto gap = [&](double theta) {
        auto [psi_vals, mean_d1] = detail::psi_vector(model.loss, z, theta);
        if (mean_d1 <= 0.0) // correction degenerates; right side is positive,
                            // so keep the gap negative and expand further
            return -1.0 / delta;
        Vector arg = beta_t + data.X.transpose() * psi_vals / mean_d1;
        double mean_eta_d1 = 0.0;
        for (int j = 0; j < arg.size(); ++j)
            mean_eta_d1 += model.regularizer.prox_derivative(arg(j), tau);
        return mean_d1 - mean_eta_d1 / (delta * arg.size());
    };
    double lo = 1e-14, hi = 1.0;
    try {
        if (gap(lo) > 0.0) {
            // Root below the floor: resolve it on a log-spaced bracket.
            return rootfind::bisect(gap, 1e-300, lo, 1e-12);
        }
        rootfind::BracketOptions opt;
        opt.hi_cap = 1e12;
        std::tie(lo, hi) = rootfind::expand_upward(gap, lo, hi, opt);
    } catch (const BracketFailure& e) {
        throw ThetaBracketFailure(
            "solve_theta_t: no crossing of the theta equation (delta <= 1 instance?)", e.lo,
            e.hi);
    }
    return rootfind::bisect(gap, lo, hi, 1e-12);
}

// Initial state: beta^0 (default zero), no Onsager memory, z^0 = y - X beta^0,
// theta^0 solved against z^0.
inline AmpState amp_init(const PenalizedModel& model, const Dataset& data, double tau0,
                         std::optional<Vector> init = std::nullopt) {
    data.validate();
    if (!(tau0 > 0.0)) throw std::invalid_argument("amp_init: tau0 must be positive");
    AmpState s;
    s.t = 0;
    s.beta = init ? std::move(*init) : Vector::Zero(data.p());
    if (s.beta.size() != data.p()) throw std::invalid_argument("amp_init: init has wrong length");
    s.psi_prev = Vector::Zero(data.n());
    s.z = data.y - data.X * s.beta;
    s.tau = tau0;
    s.theta = solve_theta_t(s.z, s.beta, tau0, model, data.aspect_ratio(), data);
    s.validate();
    return s;
}

// One AMP update:
//   beta^{t+1} = eta(beta^t + X' psi(z^t, theta^t) / <psi'>, tau_t)
//   z^{t+1}    = y - X beta^{t+1} + psi(z^t, theta^t)
//   theta^{t+1} solves the theta equation at (z^{t+1}, beta^{t+1}, tau_next).
// Optional convex damping pulls beta^{t+1} back toward beta^t; z and theta
// stay consistent with the damped iterate.
inline AmpState amp_step(const PenalizedModel& model, const Dataset& data, const AmpState& state,
                         double tau_next = -1.0, double damping = 0.0) {
    state.validate();
    if (tau_next <= 0.0) tau_next = state.tau;
    if (!(damping >= 0.0 && damping < 1.0))
        throw std::invalid_argument("amp_step: damping must lie in [0,1)");
    auto [psi_vals, mean_d1] = detail::psi_vector(model.loss, state.z, state.theta);
    if (mean_d1 <= 1e-12)
        throw DegenerateOnsager("amp_step: <psi'> collapsed; correction term undefined");
    Vector arg = state.beta + data.X.transpose() * psi_vals / mean_d1;
    AmpState next;
    next.t = state.t + 1;
    next.beta.resize(data.p());
    for (int j = 0; j < data.p(); ++j)
        next.beta(j) = model.regularizer.prox(arg(j), state.tau);
    if (damping > 0.0) next.beta = (1.0 - damping) * next.beta + damping * state.beta;
    next.z = data.y - data.X * next.beta + psi_vals;
    next.tau = tau_next;
    next.theta = solve_theta_t(next.z, next.beta, tau_next, model, data.aspect_ratio(), data);
    next.psi_prev = std::move(psi_vals);
    next.validate();
    return next;
}

// tau_t sequence: constant base, optionally with a geometrically decaying
// ramp tau_t = base * (1 + ramp * rate^t).
struct TauSchedule {
    double base;
    double ramp = 0.0;
    double rate = 0.9;

    static TauSchedule constant(double tau) {
        if (!(tau > 0.0)) throw std::invalid_argument("TauSchedule: tau must be positive");
        return {tau, 0.0, 0.9};
    }
    static TauSchedule geometric(double tau, double ramp, double rate = 0.9) {
        if (!(tau > 0.0) || !(ramp >= 0.0) || !(rate > 0.0 && rate <= 1.0))
            throw std::invalid_argument(
                "TauSchedule: need tau > 0, ramp >= 0 and rate in (0, 1]");
        return {tau, ramp, rate};
    }

    double at(int t) const { return base * (1.0 + ramp * std::pow(rate, t)); }
};

struct AmpTraceRow {
    int t;
    double delta_beta_inf; // |beta^t - beta^{t-1}|_inf
    double theta_t;
    double tau_t;
    double train_risk; // (1/n) sum_i l(y_i - x_i' beta^t)

    static std::string csv_header() { return "t,delta_beta_inf,theta_t,tau_t,train_risk"; }
    std::string csv_row() const {
        return std::to_string(t) + "," + detail::fmt(delta_beta_inf) + "," +
               detail::fmt(theta_t) + "," + detail::fmt(tau_t) + "," + detail::fmt(train_risk);
    }
};

struct AmpResult {
    AmpState final;
    std::vector<AmpTraceRow> trace;
};

// The run diverged or ran out of iterations; the trace and last state ride
// along for inspection.
struct NonConvergence : NumericalError {
    NonConvergence(const std::string& what, AmpState last, std::vector<AmpTraceRow> trace)
        : NumericalError(what), last(std::move(last)), trace(std::move(trace)) {}
    AmpState last;
    std::vector<AmpTraceRow> trace;
};

struct AmpRunOptions {
    int max_iter = 500;
    double tol = 1e-9; // on |beta^{t+1} - beta^t|_inf
    double damping = 0.0;
};

inline AmpResult amp_run(const PenalizedModel& model, const Dataset& data,
                         const TauSchedule& schedule, std::optional<Vector> init = std::nullopt,
                         const AmpRunOptions& opts = {}) {
    if (opts.max_iter < 1 || !(opts.tol > 0.0))
        throw std::invalid_argument("amp_run: need max_iter >= 1 and tol > 0");
    const int n = data.n();
    auto train_risk = [&](const Vector& beta) {
        Vector r = data.y - data.X * beta;
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += model.loss.value(r(i));
        return s / n;
    };
    AmpState state = amp_init(model, data, schedule.at(0), std::move(init));
    std::vector<AmpTraceRow> trace;
    trace.push_back({0, std::numeric_limits<double>::infinity(), state.theta, state.tau,
                     train_risk(state.beta)});
    for (int t = 0; t < opts.max_iter; ++t) {
        AmpState next = amp_step(model, data, state, schedule.at(t + 1), opts.damping);
        double delta = (next.beta - state.beta).lpNorm<Eigen::Infinity>();
        trace.push_back({next.t, delta, next.theta, next.tau, train_risk(next.beta)});
        state = std::move(next);
        if (delta <= opts.tol) return {std::move(state), std::move(trace)};
    }
    throw NonConvergence("amp_run: no convergence in " + std::to_string(opts.max_iter) +
                             " iterations",
                         std::move(state), std::move(trace));
}

// Evaluates how far a state sits from the stationarity system
//   0 = -X' l'(y - X beta) + lambda R'(beta)
//   lambda = < l''(r) / (1/tau + (1/(delta lambda)) <1/(1+tau R'')> l''(r)) >
//   theta = (1/(delta lambda)) < tau / (1 + tau R''(beta)) >
//   z = y - X beta + theta l'(y - X beta).
inline FixedPointResidual check_fixed_point(const AmpState& state, const PenalizedModel& model,
                                            const Dataset& data, double delta) {
    state.validate();
    const Vector r = data.y - data.X * state.beta;
    Vector score(r.size());
    for (int i = 0; i < r.size(); ++i) score(i) = model.loss.d1(r(i));
    Vector grad = -(data.X.transpose() * score);
    for (int j = 0; j < state.beta.size(); ++j)
        grad(j) += model.lambda * model.regularizer.d1(state.beta(j));

    double c = detail::mean_reg_shrink(model, state.beta, state.tau) / (delta * model.lambda);
    double f = 0.0;
    for (int i = 0; i < r.size(); ++i) {
        double d2 = model.loss.d2(r(i));
        f += d2 / (1.0 / state.tau + c * d2);
    }
    f /= r.size();

    FixedPointResidual out;
    out.stationarity = grad.lpNorm<Eigen::Infinity>();
    out.tau_eq = std::abs(f - model.lambda);
    out.theta_eq = std::abs(state.theta - state.tau * detail::mean_reg_shrink(
                                              model, state.beta, state.tau) /
                                              (delta * model.lambda));
    out.z_eq = (state.z - r - state.theta * score).lpNorm<Eigen::Infinity>();
    return out;
}

// Assembles the state the theory predicts to be stationary for a converged
// fit: beta = beta_hat, z = corrected residuals, (tau, theta) = calibration.
inline AmpState fixed_point_state(const PenalizedModel& model, const Dataset& data,
                                  const FitResult& fit, double delta) {
    AmpRisk cal = amp_risk(model, data, fit, delta);
    AmpState s;
    s.t = 0;
    s.beta = fit.beta_hat;
    s.z = cal.corrected_residuals;
    s.theta = cal.theta_hat;
    s.tau = cal.tau_hat;
    auto [psi_vals, mean_d1] = detail::psi_vector(model.loss, s.z, s.theta);
    (void)mean_d1;
    s.psi_prev = std::move(psi_vals);
    s.validate();
    return s;
}

} // namespace hdrisk
