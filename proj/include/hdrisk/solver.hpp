#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "hdrisk/errors.hpp"
#include "hdrisk/model.hpp"

namespace hdrisk {

struct SolverConfig {
    double grad_tol = 1e-10;
    int max_iter = 200;
    double ls_shrink = 0.5;   // backtracking factor
    double ls_decrease = 1e-4; // Armijo sufficient-decrease constant
    int dim_cap = 4000;        // dense factorization guard

    void validate() const {
        if (!(grad_tol > 0.0)) throw std::invalid_argument("SolverConfig: grad_tol must be > 0");
        if (max_iter < 1) throw std::invalid_argument("SolverConfig: max_iter must be >= 1");
        if (!(ls_shrink > 0.0 && ls_shrink < 1.0) || !(ls_decrease > 0.0 && ls_decrease < 0.5))
            throw std::invalid_argument("SolverConfig: bad line-search parameters");
    }
};

// Newton hit its iteration cap (or stalled); the best iterate seen is
// attached so a caller can decide whether near-convergence is acceptable.
struct NewtonMaxIter : MaxIterExceeded {
    NewtonMaxIter(const std::string& what, FitResult best)
        : MaxIterExceeded(what, best.grad_inf_norm), best_iterate(std::move(best)) {}
    FitResult best_iterate;
};

namespace detail {

inline Matrix hessian_weighted(const PenalizedModel& model, const Dataset& data,
                               const Vector& beta, const Vector* weights) {
    check_eval_args(model, data, beta);
    const int n = data.n(), p = data.p();
    Vector r = data.y - data.X * beta;
    Vector root(n); // sqrt of the curvature weights, so the Gram form below
                    // is symmetric by construction
    for (int i = 0; i < n; ++i) {
        double w = weights ? (*weights)(i) : 1.0;
        root(i) = w == 0.0 ? 0.0 : std::sqrt(w * model.loss.d2(r(i)));
    }
    Matrix scaled = root.asDiagonal() * data.X; // n x p
    Matrix H(p, p);
    H.setZero();
    H.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    H = H.selfadjointView<Eigen::Lower>();
    for (int j = 0; j < p; ++j) H(j, j) += model.lambda * model.regularizer.d2(beta(j));
    return H;
}

// Backtracking Armijo search along direction s starting from beta with known
// objective f0 and directional derivative gs < 0.  Returns the accepted step
// size, or 0 when no decrease could be found down to the smallest step.
inline double armijo(const PenalizedModel& model, const Dataset& data, const Vector* weights,
                     const Vector& beta, const Vector& s, double f0, double gs,
                     const SolverConfig& cfg) {
    double t = 1.0;
    while (t > 1e-14) {
        Vector trial = beta + t * s;
        double ft = objective_weighted(model, data, trial, weights);
        if (ft <= f0 + cfg.ls_decrease * t * gs) return t;
        t *= cfg.ls_shrink;
    }
    return 0.0;
}

inline FitResult make_result(const PenalizedModel& model, const Dataset& data,
                             Vector beta, double grad_inf, int iterations,
                             const Vector* weights) {
    FitResult out;
    out.residuals = data.y - data.X * beta;
    out.beta_hat = std::move(beta);
    out.grad_inf_norm = grad_inf;
    out.iterations = iterations;
    out.objective = objective_weighted(model, data, out.beta_hat, weights);
    return out;
}

// Damped Newton on the (optionally row-weighted) objective.  Descent is
// guaranteed by positive definiteness of the Hessian plus Armijo; when the
// predicted decrease falls below the floating-point noise floor of the
// objective the unit step is taken as-is, since backtracking at that point
// only compares rounding error.
inline FitResult fit_weighted(const PenalizedModel& model, const Dataset& data,
                              const Vector* weights, std::optional<Vector> init,
                              const SolverConfig& cfg,
                              std::vector<double>* objective_history = nullptr) {
    cfg.validate();
    data.validate();
    const int p = data.p();
    if (p > cfg.dim_cap)
        throw std::invalid_argument("fit: p exceeds the dense solver cap");
    Vector beta = init ? std::move(*init) : Vector::Zero(p);
    if (beta.size() != p) throw std::invalid_argument("fit: init has wrong length");

    double best_gn = std::numeric_limits<double>::infinity();
    Vector best_beta = beta;
    for (int iter = 0; iter <= cfg.max_iter; ++iter) {
        double f0 = objective_weighted(model, data, beta, weights);
        Vector g = gradient_weighted(model, data, beta, weights);
        double gn = g.lpNorm<Eigen::Infinity>();
        if (objective_history) objective_history->push_back(f0);
        if (gn < best_gn) {
            best_gn = gn;
            best_beta = beta;
        }
        if (gn <= cfg.grad_tol)
            return make_result(model, data, std::move(beta), gn, iter, weights);
        if (iter == cfg.max_iter) break;

        Matrix H = hessian_weighted(model, data, beta, weights);
        Eigen::LLT<Matrix> llt(H);
        if (llt.info() != Eigen::Success)
            throw SingularHessian("fit: curvature matrix is not positive definite");
        Vector s = -llt.solve(g);
        double gs = g.dot(s);
        if (gs >= 0.0) break; // direction lost to rounding; cannot improve

        if (std::abs(gs) <= 1e-12 * (1.0 + std::abs(f0))) {
            beta += s; // noise-floor region: take the full Newton step
            continue;
        }
        double t = armijo(model, data, weights, beta, s, f0, gs, cfg);
        if (t == 0.0) break; // stalled
        beta += t * s;
    }
    throw NewtonMaxIter("fit: no convergence within iteration budget",
                        make_result(model, data, std::move(best_beta), best_gn, cfg.max_iter,
                                    weights));
}

} // namespace detail

inline Matrix hessian(const PenalizedModel& model, const Dataset& data, const Vector& beta) {
    return detail::hessian_weighted(model, data, beta, nullptr);
}

inline FitResult fit(const PenalizedModel& model, const Dataset& data,
                     std::optional<Vector> init = std::nullopt, const SolverConfig& cfg = {},
                     std::vector<double>* objective_history = nullptr) {
    return detail::fit_weighted(model, data, nullptr, std::move(init), cfg, objective_history);
}

// Shared state for the n leave-one-out refits: one factorization of the
// full-data curvature matrix at beta_hat plus the solved system A^{-1} X'.
// Column i of solved_xt and a rank-one downdate give the Newton direction of
// the i-th reduced problem in O(p) extra work instead of a fresh O(p^3)
// factorization (matrix inversion lemma).
struct LooContext {
    Vector beta;        // full-data minimizer the context was built at
    Vector residuals;   // y - X beta
    Vector loss_d1;     // l'(residuals)
    Vector loss_d2;     // l''(residuals)
    Vector grad;        // full-data gradient at beta (near zero)
    Eigen::LLT<Matrix> llt; // factorization of hessian(model, data, beta)
    Matrix solved_xt;   // A^{-1} X', p x n
    Vector solved_grad; // A^{-1} grad
};

inline LooContext make_loo_context(const PenalizedModel& model, const Dataset& data,
                                   const FitResult& full_fit) {
    LooContext ctx;
    ctx.beta = full_fit.beta_hat;
    ctx.residuals = data.y - data.X * ctx.beta;
    const int n = data.n();
    ctx.loss_d1.resize(n);
    ctx.loss_d2.resize(n);
    for (int i = 0; i < n; ++i) {
        ctx.loss_d1(i) = model.loss.d1(ctx.residuals(i));
        ctx.loss_d2(i) = model.loss.d2(ctx.residuals(i));
    }
    ctx.grad = gradient(model, data, ctx.beta);
    Matrix H = hessian(model, data, ctx.beta);
    ctx.llt.compute(H);
    if (ctx.llt.info() != Eigen::Success)
        throw SingularHessian("make_loo_context: curvature matrix is not positive definite");
    ctx.solved_xt = ctx.llt.solve(data.X.transpose());
    ctx.solved_grad = ctx.llt.solve(ctx.grad);
    return ctx;
}

// Minimizer over the dataset with row i deleted, warm-started at the
// full-data solution.  With a context the search directions come from the
// downdated full-data factorization (a chord method): the downdated matrix
// differs from the true reduced Hessian only through the small move away
// from beta_hat, so steps contract fast and each costs O(np), not O(p^3).
// Falls back to full Newton if the chord iteration is not pulling its
// weight.  The returned residuals cover all n rows (entry i is the held-out
// residual); objective and grad_inf_norm refer to the reduced problem.
inline FitResult fit_loo(const PenalizedModel& model, const Dataset& data, int i,
                         const FitResult& warm, const SolverConfig& cfg = {},
                         const LooContext* ctx = nullptr) {
    data.validate();
    if (i < 0 || i >= data.n()) throw std::invalid_argument("fit_loo: index out of range");
    if (data.n() - 1 < 1)
        throw std::invalid_argument("fit_loo: cannot delete a row from a 1-row dataset");
    Vector weights = Vector::Ones(data.n());
    weights(i) = 0.0;

    if (ctx == nullptr)
        return detail::fit_weighted(model, data, &weights, warm.beta_hat, cfg);

    const Vector u = ctx->solved_xt.col(i);
    const auto x_i = data.X.row(i).transpose();
    const double q = x_i.dot(u);
    const double c2 = ctx->loss_d2(i);
    const double denom = 1.0 - c2 * q;
    if (denom <= 1e-10) // deletion nearly annihilates the curvature: chord
                        // directions are untrustworthy, solve from scratch
        return detail::fit_weighted(model, data, &weights, warm.beta_hat, cfg);

    const int chord_cap = 15;
    int iters_done = 0;
    Vector beta = ctx->beta;
    // Reduced gradient at the warm point: removing row i adds l'(r_i) x_i.
    // The matching solve A^{-1} g_reduced reuses the precomputed pieces.
    Vector g_cur = ctx->grad + ctx->loss_d1(i) * x_i;
    Vector solved_g = ctx->solved_grad + ctx->loss_d1(i) * u;
    double gn = g_cur.lpNorm<Eigen::Infinity>();
    if (gn <= cfg.grad_tol) // row i carried no information; warm point stands
        return detail::make_result(model, data, std::move(beta), gn, 0, &weights);
    double f0 = detail::objective_weighted(model, data, beta, &weights);
    for (int iter = 1; iter <= chord_cap; ++iter) {
        Vector s = -(solved_g + u * (c2 * x_i.dot(solved_g) / denom));
        double gs = g_cur.dot(s);
        double t = 1.0;
        if (gs >= 0.0) {
            t = 0.0; // not a descent direction; hand off to full Newton
        } else if (std::abs(gs) > 1e-12 * (1.0 + std::abs(f0))) {
            t = detail::armijo(model, data, &weights, beta, s, f0, gs, cfg);
        }
        if (t == 0.0) break;
        beta += t * s;
        iters_done = iter;
        g_cur = detail::gradient_weighted(model, data, beta, &weights);
        gn = g_cur.lpNorm<Eigen::Infinity>();
        if (gn <= cfg.grad_tol)
            return detail::make_result(model, data, std::move(beta), gn, iter, &weights);
        f0 = detail::objective_weighted(model, data, beta, &weights);
        solved_g = ctx->llt.solve(g_cur);
    }
    FitResult out = detail::fit_weighted(model, data, &weights, beta, cfg);
    out.iterations += iters_done;
    return out;
}

} // namespace hdrisk
