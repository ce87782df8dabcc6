#pragma once

#include <Eigen/Eigenvalues>
#include <functional>

#include "hdrisk/amp.hpp"
#include "hdrisk/datagen.hpp"
#include "hdrisk/risk.hpp"

namespace hdrisk {

struct LooLinearization {
    double eps_norm;        // |eps|_2
    Vector formula_residual; // eps itself
};

// Linearization error of the leave-one-out refit:
//   eps^i = beta_tilde^i - beta_hat + l'(y_i - x_i' beta_hat) A_i^{-1} x_i,
// where A_i is the reduced-data curvature matrix evaluated at beta_tilde^i.
// Exactly zero for quadratic loss + quadratic regularizer, where one Newton
// step is the whole story; otherwise its size measures how nonlinear the
// refit really is.
inline LooLinearization loo_linearization_error(const PenalizedModel& model, const Dataset& data,
                                                int i, const FitResult& fit,
                                                const FitResult& fit_i) {
    data.validate();
    if (i < 0 || i >= data.n())
        throw std::invalid_argument("loo_linearization_error: index out of range");
    const Vector& beta_tilde = fit_i.beta_hat;
    Vector r_tilde = data.y - data.X * beta_tilde;
    Matrix A = hessian(model, data, beta_tilde);
    auto x_i = data.X.row(i).transpose();
    A -= model.loss.d2(r_tilde(i)) * (x_i * x_i.transpose());
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success)
        throw SingularHessian("loo_linearization_error: reduced curvature matrix singular");
    double score = model.loss.d1(data.y(i) - data.X.row(i).dot(fit.beta_hat));
    LooLinearization out;
    out.formula_residual = beta_tilde - fit.beta_hat + score * llt.solve(x_i);
    out.eps_norm = out.formula_residual.norm();
    return out;
}

// sup over rows of |x_i' G_i x_i - Tr(G_i)/n| for caller-provided symmetric
// matrices G_i.  The concentration statement this mirrors requires each G_i
// to be independent of x_i (e.g. built from the data with row i removed);
// that independence is the caller's responsibility.
inline double trace_concentration(const Dataset& data,
                                  const std::function<Matrix(int)>& matrices) {
    data.validate();
    const int n = data.n();
    double sup = 0.0;
    for (int i = 0; i < n; ++i) {
        Matrix g = matrices(i);
        if (g.rows() != data.p() || g.cols() != data.p())
            throw std::invalid_argument("trace_concentration: matrix " + std::to_string(i) +
                                        " has wrong dimensions");
        double quad = data.X.row(i) * g * data.X.row(i).transpose();
        sup = std::max(sup, std::abs(quad - g.trace() / n));
    }
    return sup;
}

struct SpectrumCheck {
    double sigma_min;         // smallest eigenvalue of X'X
    double sigma_max;         // largest eigenvalue of X'X
    double sigma_delta_bound; // theoretical lower bound for Gaussian designs
};

// Extreme eigenvalues of the Gram matrix against the theoretical envelope
// for variance-1/n Gaussian designs with aspect ratio delta = n/p > 1:
// sigma_min should exceed (1/2) min{(1 - sqrt(1/delta))^2, 1/delta} and
// sigma_max should stay below 9 delta^2.
inline SpectrumCheck spectrum_check(const Matrix& X) {
    if (X.rows() <= X.cols())
        throw std::invalid_argument("spectrum_check: requires n > p");
    const double delta = static_cast<double>(X.rows()) / X.cols();
    Matrix gram = X.transpose() * X;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    SpectrumCheck out;
    out.sigma_min = eig.eigenvalues().minCoeff();
    out.sigma_max = eig.eigenvalues().maxCoeff();
    double root = 1.0 - std::sqrt(1.0 / delta);
    out.sigma_delta_bound = 0.5 * std::min(root * root, 1.0 / delta);
    return out;
}

struct SweepRow {
    int n;
    int p;
    std::uint64_t seed;
    double lo;
    double alo;
    double amp;
    double d_lo_alo;      // |lo - alo|
    double d_lo_amp;      // |lo - amp|
    double sup_resid_gap; // max_i |z_i - loo residual_i|

    static std::string csv_header() {
        return "n,p,seed,lo,alo,amp,d_lo_alo,d_lo_amp,sup_resid_gap";
    }
    std::string csv_row() const {
        return std::to_string(n) + "," + std::to_string(p) + "," + std::to_string(seed) + "," +
               detail::fmt(lo) + "," + detail::fmt(alo) + "," + detail::fmt(amp) + "," +
               detail::fmt(d_lo_alo) + "," + detail::fmt(d_lo_amp) + "," +
               detail::fmt(sup_resid_gap);
    }
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::string> failures; // "n=.. seed=..: reason" per skipped cell
};

// For each (n, seed) cell: generate data at aspect ratio gen.n/gen.p, fit,
// and record how far the three estimators sit from each other, plus the gap
// between AMP's corrected residuals and the exact leave-one-out residuals.
// Numerical failures skip the cell and are reported, not thrown.
inline SweepResult discrepancy_sweep(const PenalizedModel& model, const SyntheticSpec& gen,
                                     const std::vector<int>& n_grid,
                                     const std::vector<std::uint64_t>& seeds,
                                     const SolverConfig& cfg = {}) {
    gen.validate();
    const double delta = static_cast<double>(gen.n) / gen.p;
    std::vector<std::pair<int, int>> dims; // (n, p) per grid entry
    for (int n : n_grid) {
        int p = static_cast<int>(std::llround(n / delta));
        if (p < 1 || std::abs(p * delta - n) > 1e-9)
            throw std::invalid_argument("discrepancy_sweep: n = " + std::to_string(n) +
                                        " is not divisible by delta");
        dims.emplace_back(n, p);
    }
    const std::size_t cells = dims.size() * seeds.size();
    std::vector<std::optional<SweepRow>> slots(cells);
    std::vector<std::string> failures(cells);
    parallel::parallel_for(cells, [&](std::size_t cell) {
        auto [n, p] = dims[cell / seeds.size()];
        std::uint64_t seed = seeds[cell % seeds.size()];
        SyntheticSpec spec = gen;
        spec.n = n;
        spec.p = p;
        spec.seed = seed;
        try {
            GeneratedData g = generate(spec);
            FitResult full = fit(model, g.data, std::nullopt, cfg);
            LooContext ctx = make_loo_context(model, g.data, full);
            LooRisk lo = loocv_risk(model, g.data, cfg, &full, &ctx);
            AloRisk alo = detail::alo_risk_impl(model, g.data, full, &ctx.solved_xt);
            AmpRisk amp = amp_risk(model, g.data, full, delta);
            SweepRow row;
            row.n = n;
            row.p = p;
            row.seed = seed;
            row.lo = lo.lo;
            row.alo = alo.alo;
            row.amp = amp.amp;
            row.d_lo_alo = std::abs(lo.lo - alo.alo);
            row.d_lo_amp = std::abs(lo.lo - amp.amp);
            row.sup_resid_gap =
                (amp.corrected_residuals - lo.residuals).lpNorm<Eigen::Infinity>();
            slots[cell] = row;
        } catch (const NumericalError& e) {
            failures[cell] = "n=" + std::to_string(n) + " seed=" + std::to_string(seed) +
                             ": " + e.what();
        }
    });
    SweepResult out;
    for (std::size_t c = 0; c < cells; ++c) {
        if (slots[c]) out.rows.push_back(*slots[c]);
        else if (!failures[c].empty()) out.failures.push_back(failures[c]);
    }
    return out;
}

} // namespace hdrisk
