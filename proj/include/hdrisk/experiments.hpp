#pragma once

// Experiment orchestration and the command-line front end: seeded synthetic
// sweeps over the penalty grid, cross-validation bias curves, AMP traces,
// and design-matrix diagnostics, each emitting CSV (with the resolved config
// echoed in a leading comment line) and an SVG figure.  Identical configs
// produce byte-identical outputs.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hdrisk/amp.hpp"
#include "hdrisk/datagen.hpp"
#include "hdrisk/diagnostics.hpp"
#include "hdrisk/parallel.hpp"
#include "hdrisk/risk.hpp"
#include "hdrisk/solver.hpp"
#include "hdrisk/svg.hpp"

namespace hdrisk {

struct ExperimentConfig {
    enum class Kind { figure1, rates, amp_trace, diagnostics };

    Kind experiment = Kind::figure1;
    std::vector<double> lambda_grid = default_lambda_grid();
    int reps = 20;
    int n = 500;
    int p = 400;
    std::string loss_spec = "squared";
    std::string reg_spec = "ridge";
    std::uint64_t seed = 1;
    std::string output_dir = ".";

    // 15 logarithmically spaced penalty levels spanning [0.01, 10]
    static std::vector<double> default_lambda_grid() {
        std::vector<double> grid(15);
        for (int k = 0; k < 15; ++k) grid[k] = std::pow(10.0, -2.0 + 3.0 * k / 14.0);
        return grid;
    }

    static Kind parse_kind(const std::string& name) {
        if (name == "figure1") return Kind::figure1;
        if (name == "rates") return Kind::rates;
        if (name == "amp_trace") return Kind::amp_trace;
        if (name == "diagnostics") return Kind::diagnostics;
        throw std::invalid_argument("unknown experiment '" + name +
                                    "' (expected figure1, rates, amp_trace or diagnostics)");
    }

    static std::string kind_name(Kind k) {
        switch (k) {
            case Kind::figure1: return "figure1";
            case Kind::rates: return "rates";
            case Kind::amp_trace: return "amp_trace";
            case Kind::diagnostics: return "diagnostics";
        }
        return "?";
    }

    void validate() const {
        if (lambda_grid.empty()) throw std::invalid_argument("config: lambda_grid is empty");
        for (double l : lambda_grid)
            if (!(l > 0.0) || !std::isfinite(l))
                throw std::invalid_argument("config: lambda_grid values must be positive");
        if (reps < 1) throw std::invalid_argument("config: reps must be >= 1");
        if (n < 2 || p < 1) throw std::invalid_argument("config: need n >= 2 and p >= 1");
        ScalarFamily::parse(loss_spec); // throws on malformed specs
        ScalarFamily::parse(reg_spec);
    }

    // Single-line echo of every resolved field, embedded in output headers
    std::string echo() const {
        std::string lambdas;
        for (std::size_t k = 0; k < lambda_grid.size(); ++k)
            lambdas += (k ? "," : "") + detail::fmt(lambda_grid[k]);
        return "# config: experiment=" + kind_name(experiment) + " lambda_grid=" + lambdas +
               " reps=" + std::to_string(reps) + " n=" + std::to_string(n) +
               " p=" + std::to_string(p) + " loss_spec=" + loss_spec + " reg_spec=" + reg_spec +
               " seed=" + std::to_string(seed) + " output_dir=" + output_dir;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: bad numeric value '" + s + "' for " + what);
    }
}

inline long long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: bad integer value '" + s + "' for " + what);
    }
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << body;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

// Plain-text config: '#' starts a comment, otherwise `key = value` with keys
// named exactly like the ExperimentConfig fields.  Unknown keys are errors.
inline ExperimentConfig load_config_file(const std::string& path,
                                         ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key == "experiment") {
            base.experiment = ExperimentConfig::parse_kind(val);
        } else if (key == "lambda_grid") {
            std::vector<double> grid;
            std::stringstream ss(val);
            std::string item;
            while (std::getline(ss, item, ','))
                grid.push_back(detail::parse_double(detail::trim(item), "lambda_grid"));
            base.lambda_grid = std::move(grid);
        } else if (key == "reps") {
            base.reps = static_cast<int>(detail::parse_int(val, "reps"));
        } else if (key == "n") {
            base.n = static_cast<int>(detail::parse_int(val, "n"));
        } else if (key == "p") {
            base.p = static_cast<int>(detail::parse_int(val, "p"));
        } else if (key == "loss_spec") {
            base.loss_spec = val;
        } else if (key == "reg_spec") {
            base.reg_spec = val;
        } else if (key == "seed") {
            base.seed = static_cast<std::uint64_t>(detail::parse_int(val, "seed"));
        } else if (key == "output_dir") {
            base.output_dir = val;
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "' on line " +
                                        std::to_string(lineno));
        }
    }
    base.validate();
    return base;
}

// --- figure1: mean estimator curves across the penalty grid ---------------

struct Fig1Means {
    std::vector<double> lambda, lo, alo, amp, kfold2, kfold3, kfold5, oracle;
};

// For each repetition: one synthetic dataset (identical across the grid),
// then every estimator at every lambda.  Cells that fail numerically are
// reported on stderr and excluded from the means; the run aborts only when
// more than 10% of cells fail.
inline Fig1Means run_figure1(const ExperimentConfig& cfg) {
    cfg.validate();
    ScalarFamily loss = ScalarFamily::parse(cfg.loss_spec);
    ScalarFamily reg = ScalarFamily::parse(cfg.reg_spec);
    if (!loss.is_quadratic() || !reg.is_quadratic())
        throw std::invalid_argument(
            "run_figure1: the bias-curve experiment requires a quadratic loss and "
            "regularizer (the oracle there is closed-form)");
    std::filesystem::create_directories(cfg.output_dir);

    const int L = static_cast<int>(cfg.lambda_grid.size());
    const int cells = cfg.reps * L;
    std::vector<std::optional<RiskReport>> results(cells);
    std::vector<std::string> failures(cells);

    parallel::parallel_for(cfg.reps, [&](int rep) {
        SyntheticSpec spec;
        spec.n = cfg.n;
        spec.p = cfg.p;
        spec.beta_prior = SyntheticSpec::BetaPrior::gaussian(4.0);
        spec.noise_sd = 1.0;
        spec.seed = rng::derive_seed(cfg.seed, "fig1_rep", rep);
        GeneratedData gd = generate(spec);
        for (int li = 0; li < L; ++li) {
            PenalizedModel model(loss, reg, cfg.lambda_grid[li]);
            RiskRequest req;
            req.seed = rng::derive_seed(cfg.seed, "fig1_cv", rep * L + li);
            req.beta_star = &gd.beta_star;
            req.noise_sd = spec.noise_sd;
            const int slot = rep * L + li;
            try {
                results[slot] = assess_risk(model, gd.data, req);
            } catch (const NumericalError& e) {
                failures[slot] = "rep=" + std::to_string(rep) + " lambda=" +
                                 detail::fmt(cfg.lambda_grid[li]) + ": " + e.what();
            }
        }
    });

    std::vector<std::string> failed;
    for (const auto& f : failures)
        if (!f.empty()) failed.push_back(f);
    for (const auto& f : failed) std::cerr << "run_figure1: cell failed: " << f << "\n";
    if (10 * failed.size() > static_cast<std::size_t>(cells))
        throw NumericalError("run_figure1: " + std::to_string(failed.size()) + " of " +
                             std::to_string(cells) + " cells failed (over 10%)");

    std::string reps_csv = cfg.echo() + "\nrep," + RiskReport::csv_header() + "\n";
    for (int rep = 0; rep < cfg.reps; ++rep)
        for (int li = 0; li < L; ++li)
            if (const auto& r = results[rep * L + li])
                reps_csv += std::to_string(rep) + "," + r->csv_row() + "\n";

    Fig1Means means;
    std::string means_csv = cfg.echo() + "\n" + RiskReport::csv_header() + "\n";
    for (int li = 0; li < L; ++li) {
        double lo = 0, alo = 0, amp = 0, k2 = 0, k3 = 0, k5 = 0, orac = 0, tau = 0, theta = 0;
        int count = 0;
        for (int rep = 0; rep < cfg.reps; ++rep) {
            const auto& r = results[rep * L + li];
            if (!r) continue;
            ++count;
            lo += *r->lo;
            alo += *r->alo;
            amp += *r->amp;
            orac += *r->oracle;
            k2 += r->kfold.at(2);
            k3 += r->kfold.at(3);
            k5 += r->kfold.at(5);
            tau += *r->tau_hat;
            theta += *r->theta_hat;
        }
        if (count == 0) continue;
        const double c = count;
        means.lambda.push_back(cfg.lambda_grid[li]);
        means.lo.push_back(lo / c);
        means.alo.push_back(alo / c);
        means.amp.push_back(amp / c);
        means.kfold2.push_back(k2 / c);
        means.kfold3.push_back(k3 / c);
        means.kfold5.push_back(k5 / c);
        means.oracle.push_back(orac / c);
        means_csv += detail::fmt(cfg.lambda_grid[li]) + "," + detail::fmt(lo / c) + "," +
                     detail::fmt(alo / c) + "," + detail::fmt(amp / c) + "," +
                     detail::fmt(k2 / c) + "," + detail::fmt(k3 / c) + "," +
                     detail::fmt(k5 / c) + "," + detail::fmt(orac / c) + "," +
                     detail::fmt(tau / c) + "," + detail::fmt(theta / c) + "\n";
    }

    const std::filesystem::path dir(cfg.output_dir);
    detail::write_text_file((dir / "fig1_reps.csv").string(), reps_csv);
    detail::write_text_file((dir / "fig1_means.csv").string(), means_csv);

    svg::LinePlot plot("Out-of-sample risk estimates", "lambda", "estimated risk");
    plot.log_x(true);
    plot.add_series("2-fold", means.lambda, means.kfold2);
    plot.add_series("3-fold", means.lambda, means.kfold3);
    plot.add_series("5-fold", means.lambda, means.kfold5);
    plot.add_series("leave-one-out", means.lambda, means.lo);
    plot.add_series("approx leave-one-out", means.lambda, means.alo);
    plot.add_series("message passing", means.lambda, means.amp);
    plot.add_series("oracle", means.lambda, means.oracle, "#000000");
    plot.write((dir / "fig1.svg").string());
    return means;
}

// --- rates: estimator discrepancies as n grows at fixed aspect ratio ------

struct RatesResult {
    std::vector<int> n_grid;
    std::vector<double> med_lo_alo;     // median |LO - ALO| per grid point
    std::vector<double> med_lo_amp;     // median |LO - AMP| per grid point
    std::vector<double> med_resid_gap;  // median sup-norm gap between corrected
                                        // and exact leave-one-out residuals
    SweepResult sweep;
};

inline RatesResult run_rates(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.n % 4 != 0 || cfg.p % 4 != 0)
        throw std::invalid_argument(
            "run_rates: n and p must be divisible by 4 (the sweep visits n/4, n/2, n "
            "at a fixed aspect ratio)");
    std::filesystem::create_directories(cfg.output_dir);

    PenalizedModel model(ScalarFamily::parse(cfg.loss_spec), ScalarFamily::parse(cfg.reg_spec),
                         cfg.lambda_grid.front());
    SyntheticSpec gen;
    gen.n = cfg.n;
    gen.p = cfg.p;
    gen.beta_prior = SyntheticSpec::BetaPrior::gaussian(4.0);
    gen.noise_sd = 1.0;
    gen.seed = cfg.seed; // per-cell seeds come from the seeds list below

    RatesResult out;
    out.n_grid = {cfg.n / 4, cfg.n / 2, cfg.n};
    std::vector<std::uint64_t> seeds(cfg.reps);
    for (int k = 0; k < cfg.reps; ++k) seeds[k] = rng::derive_seed(cfg.seed, "rates_seed", k);

    out.sweep = discrepancy_sweep(model, gen, out.n_grid, seeds);
    for (const auto& f : out.sweep.failures)
        std::cerr << "run_rates: cell failed: " << f << "\n";
    const std::size_t cells = out.n_grid.size() * seeds.size();
    if (10 * out.sweep.failures.size() > cells)
        throw NumericalError("run_rates: " + std::to_string(out.sweep.failures.size()) +
                             " of " + std::to_string(cells) + " cells failed (over 10%)");

    std::string csv = cfg.echo() + "\n" + SweepRow::csv_header() + "\n";
    for (const auto& row : out.sweep.rows) csv += row.csv_row() + "\n";
    const std::filesystem::path dir(cfg.output_dir);
    detail::write_text_file((dir / "rates.csv").string(), csv);

    for (int n : out.n_grid) {
        std::vector<double> da, dm, rg;
        for (const auto& row : out.sweep.rows)
            if (row.n == n) {
                da.push_back(row.d_lo_alo);
                dm.push_back(row.d_lo_amp);
                rg.push_back(row.sup_resid_gap);
            }
        if (da.empty())
            throw NumericalError("run_rates: every cell failed at n = " + std::to_string(n));
        out.med_lo_alo.push_back(detail::median(da));
        out.med_lo_amp.push_back(detail::median(dm));
        out.med_resid_gap.push_back(detail::median(rg));
    }

    std::vector<double> ns(out.n_grid.begin(), out.n_grid.end());
    svg::LinePlot plot("Estimator discrepancies vs sample size", "n", "median discrepancy");
    plot.log_x(true);
    plot.log_y(true);
    plot.add_series("|LO - ALO|", ns, out.med_lo_alo);
    plot.add_series("|LO - AMP|", ns, out.med_lo_amp);
    plot.write((dir / "rates.svg").string());
    return out;
}

// --- amp_trace: per-iteration convergence record ---------------------------

inline AmpResult run_amp_trace(const ExperimentConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);

    SyntheticSpec spec;
    spec.n = cfg.n;
    spec.p = cfg.p;
    spec.beta_prior = SyntheticSpec::BetaPrior::gaussian(4.0);
    spec.noise_sd = 1.0;
    spec.seed = rng::derive_seed(cfg.seed, "amp_trace");
    GeneratedData gd = generate(spec);
    PenalizedModel model(ScalarFamily::parse(cfg.loss_spec), ScalarFamily::parse(cfg.reg_spec),
                         cfg.lambda_grid.front());

    FitResult ref = fit(model, gd.data);
    const double tau = solve_tau_hat(ref, model, gd.data.aspect_ratio());

    auto write_trace = [&](const std::vector<AmpTraceRow>& trace) {
        std::string csv = cfg.echo() + "\n" + AmpTraceRow::csv_header() + "\n";
        for (const auto& row : trace) csv += row.csv_row() + "\n";
        detail::write_text_file((dir / "amp_trace.csv").string(), csv);
        std::vector<double> t, d;
        for (const auto& row : trace)
            if (std::isfinite(row.delta_beta_inf)) {
                t.push_back(row.t);
                d.push_back(row.delta_beta_inf);
            }
        svg::LinePlot plot("Message-passing convergence", "iteration", "max coordinate change");
        plot.log_y(true);
        plot.add_series("sup-norm step", t, d);
        plot.write((dir / "amp_trace.svg").string());
    };

    try {
        AmpResult result = amp_run(model, gd.data, TauSchedule::constant(tau));
        write_trace(result.trace);
        return result;
    } catch (const NonConvergence& e) {
        write_trace(e.trace); // leave the evidence behind before failing
        throw;
    }
}

// --- diagnostics: design-matrix conditioning and refit linearization ------

struct DiagnosticsReport {
    SpectrumCheck spectrum;
    double sigma_max_bound;      // 9 * delta^2
    double trace_deviation;      // sup_i |x_i' G_i x_i - tr(G_i)/n|
    double trace_bound;          // 4 * C_n * ln n / sqrt(n), C_n = 1 here
    double eps_median;           // refit linearization error, sampled rows
    double eps_max;
};

inline DiagnosticsReport run_diagnostics(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.n <= cfg.p)
        throw std::invalid_argument("run_diagnostics: needs n > p for the spectrum bounds");
    std::filesystem::create_directories(cfg.output_dir);

    SyntheticSpec spec;
    spec.n = cfg.n;
    spec.p = cfg.p;
    spec.beta_prior = SyntheticSpec::BetaPrior::gaussian(4.0);
    spec.noise_sd = 1.0;
    spec.seed = rng::derive_seed(cfg.seed, "diagnostics");
    GeneratedData gd = generate(spec);
    const Dataset& data = gd.data;
    const double delta = data.aspect_ratio();

    DiagnosticsReport rep;
    rep.spectrum = spectrum_check(data.X);
    rep.sigma_max_bound = 9.0 * delta * delta;

    // Row-wise quadratic forms against G_i = (X'X - x_i x_i' + I)^{-1}; each
    // G_i comes from the shared factorization by a rank-one update.  The
    // matrices satisfy G_i <= I, so C_n = 1 bounds their spectra.
    Matrix B = data.X.transpose() * data.X + Matrix::Identity(data.p(), data.p());
    Eigen::LLT<Matrix> llt(B);
    if (llt.info() != Eigen::Success)
        throw SingularHessian("run_diagnostics: Gram matrix factorization failed");
    Matrix Binv = llt.solve(Matrix::Identity(data.p(), data.p()));
    rep.trace_deviation = trace_concentration(data, [&](int i) {
        Vector bi = Binv * data.X.row(i).transpose();
        double q = data.X.row(i).dot(bi);
        return Matrix(Binv + bi * bi.transpose() / (1.0 - q));
    });
    rep.trace_bound = 4.0 * std::log(data.n()) / std::sqrt(double(data.n()));

    PenalizedModel model(ScalarFamily::parse(cfg.loss_spec), ScalarFamily::parse(cfg.reg_spec),
                         cfg.lambda_grid.front());
    FitResult full = fit(model, data);
    LooContext ctx = make_loo_context(model, data, full);
    std::vector<double> eps;
    const int sample = std::min(data.n(), 10);
    for (int i = 0; i < sample; ++i) {
        FitResult fi = fit_loo(model, data, i, full, {}, &ctx);
        LooLinearization lin = loo_linearization_error(model, data, i, full, fi);
        eps.push_back(lin.eps_norm);
    }
    rep.eps_median = detail::median(eps);
    rep.eps_max = *std::max_element(eps.begin(), eps.end());

    std::string csv = cfg.echo() + "\nmetric,value\n";
    auto put = [&](const char* k, double v) { csv += std::string(k) + "," + detail::fmt(v) + "\n"; };
    put("sigma_min", rep.spectrum.sigma_min);
    put("sigma_min_bound", rep.spectrum.sigma_delta_bound);
    put("sigma_max", rep.spectrum.sigma_max);
    put("sigma_max_bound", rep.sigma_max_bound);
    put("trace_deviation", rep.trace_deviation);
    put("trace_deviation_bound", rep.trace_bound);
    put("loo_linearization_median", rep.eps_median);
    put("loo_linearization_max", rep.eps_max);
    detail::write_text_file((std::filesystem::path(cfg.output_dir) / "diagnostics.csv").string(),
                            csv);
    return rep;
}

inline void run_experiment(const ExperimentConfig& cfg) {
    switch (cfg.experiment) {
        case ExperimentConfig::Kind::figure1: run_figure1(cfg); return;
        case ExperimentConfig::Kind::rates: run_rates(cfg); return;
        case ExperimentConfig::Kind::amp_trace: run_amp_trace(cfg); return;
        case ExperimentConfig::Kind::diagnostics: run_diagnostics(cfg); return;
    }
}

// --- command line ----------------------------------------------------------

// Exit codes: 0 success, 1 usage/config error, 2 numerical or I/O failure.
inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"out-of-sample risk estimation for penalized regression"};
    app.require_subcommand(1);

    std::string data_path, loss_spec = "squared", reg_spec = "ridge";
    std::string beta_path, out_path, config_path, exp_name;
    double lambda = 1.0, noise_sd = 1.0, tau = 0.0, tol = 1e-9, damping = 0.0;
    std::uint64_t seed = 1;
    int max_iter = 500;
    std::vector<int> kfolds = {2, 3, 5};
    bool seed_given = false, out_given = false;

    auto add_model_opts = [&](CLI::App* cmd, bool need_data) {
        auto* d = cmd->add_option("--data", data_path, "training data CSV (y,x1..xp)");
        if (need_data) d->required()->check(CLI::ExistingFile);
        cmd->add_option("--loss", loss_spec, "loss family spec, e.g. squared or pseudo_huber:mu=1");
        cmd->add_option("--reg", reg_spec, "penalty family spec, e.g. ridge");
        cmd->add_option("--lambda", lambda, "penalty level")->required()->check(CLI::PositiveNumber);
    };

    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a penalized model");
    add_model_opts(fit_cmd, true);
    fit_cmd->add_option("--out", out_path, "write the fitted coefficients to this CSV");

    CLI::App* risk_cmd = app.add_subcommand("risk", "estimate out-of-sample risk");
    add_model_opts(risk_cmd, true);
    risk_cmd->add_option("--seed", seed, "seed for fold partitions and sampling");
    risk_cmd->add_option("--kfold", kfolds, "fold counts for the K-fold baselines")
        ->delimiter(',');
    risk_cmd->add_option("--beta", beta_path, "true coefficients CSV; enables the oracle column")
        ->check(CLI::ExistingFile);
    risk_cmd->add_option("--noise-sd", noise_sd, "noise level used by the oracle");
    risk_cmd->add_option("--out", out_path, "write the report here instead of stdout");

    CLI::App* amp_cmd = app.add_subcommand("amp", "run the message-passing iteration");
    add_model_opts(amp_cmd, true);
    amp_cmd->add_option("--tau", tau, "prox scale (default: calibrated from a direct fit)");
    amp_cmd->add_option("--max-iter", max_iter, "iteration cap");
    amp_cmd->add_option("--tol", tol, "sup-norm stopping tolerance");
    amp_cmd->add_option("--damping", damping, "iterate averaging weight in [0,1)");
    amp_cmd->add_option("--out", out_path, "write the iteration trace to this CSV");

    CLI::App* exp_cmd = app.add_subcommand("experiment", "run a packaged experiment");
    exp_cmd->add_option("name", exp_name, "figure1, rates, amp_trace or diagnostics")->required();
    exp_cmd->add_option("--config", config_path, "plain-text key = value config file")
        ->check(CLI::ExistingFile);
    exp_cmd->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    exp_cmd->add_option("--out", out_path, "override the config output directory")
        ->each([&](const std::string&) { out_given = true; });

    CLI::App* diag_cmd = app.add_subcommand("diagnose", "design and refit diagnostics");
    diag_cmd->add_option("--config", config_path, "plain-text key = value config file")
        ->check(CLI::ExistingFile);
    diag_cmd->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    diag_cmd->add_option("--out", out_path, "override the config output directory")
        ->each([&](const std::string&) { out_given = true; });

    try {
        std::vector<const char*> argv;
        static const std::string prog = "hdrisk";
        argv.push_back(prog.c_str());
        for (const auto& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e); // prints help or the usage error
        return code == 0 ? 0 : 1;
    }

    auto load_experiment_config = [&]() {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = load_config_file(config_path);
        if (seed_given) cfg.seed = seed;
        if (out_given) cfg.output_dir = out_path;
        return cfg;
    };

    try {
        if (app.got_subcommand(fit_cmd)) {
            Dataset data = Dataset::from_csv(data_path);
            PenalizedModel model(ScalarFamily::parse(loss_spec), ScalarFamily::parse(reg_spec),
                                 lambda);
            FitResult r = fit(model, data);
            std::cout << "iterations,objective,grad_inf_norm\n"
                      << r.iterations << "," << detail::fmt(r.objective) << ","
                      << detail::fmt(r.grad_inf_norm) << "\n";
            if (!out_path.empty()) save_beta_csv(r.beta_hat, out_path);
        } else if (app.got_subcommand(risk_cmd)) {
            Dataset data = Dataset::from_csv(data_path);
            PenalizedModel model(ScalarFamily::parse(loss_spec), ScalarFamily::parse(reg_spec),
                                 lambda);
            RiskRequest req;
            req.seed = seed;
            req.kfolds = kfolds;
            req.noise_sd = noise_sd;
            Vector beta_star;
            if (!beta_path.empty()) {
                beta_star = load_beta_csv(beta_path);
                req.beta_star = &beta_star;
            }
            RiskReport report = assess_risk(model, data, req);
            std::string body = RiskReport::csv_header() + "\n" + report.csv_row() + "\n";
            if (out_path.empty()) {
                std::cout << body;
            } else {
                detail::write_text_file(out_path,
                                        "# cmd: risk --data " + data_path + " --loss " +
                                            loss_spec + " --reg " + reg_spec + " --lambda " +
                                            detail::fmt(lambda) + " --seed " +
                                            std::to_string(seed) + "\n" + body);
            }
        } else if (app.got_subcommand(amp_cmd)) {
            Dataset data = Dataset::from_csv(data_path);
            PenalizedModel model(ScalarFamily::parse(loss_spec), ScalarFamily::parse(reg_spec),
                                 lambda);
            double tau0 = tau;
            if (tau0 <= 0.0) {
                FitResult ref = fit(model, data);
                tau0 = solve_tau_hat(ref, model, data.aspect_ratio());
            }
            AmpRunOptions opts;
            opts.max_iter = max_iter;
            opts.tol = tol;
            opts.damping = damping;
            AmpResult result = amp_run(model, data, TauSchedule::constant(tau0), std::nullopt,
                                       opts);
            std::cout << "iterations,theta,tau,train_risk\n"
                      << result.final.t << "," << detail::fmt(result.final.theta) << ","
                      << detail::fmt(result.final.tau) << ","
                      << detail::fmt(result.trace.back().train_risk) << "\n";
            if (!out_path.empty()) {
                std::string csv = "# cmd: amp --data " + data_path + " --loss " + loss_spec +
                                  " --reg " + reg_spec + " --lambda " + detail::fmt(lambda) +
                                  " --tau " + detail::fmt(tau0) + "\n" +
                                  AmpTraceRow::csv_header() + "\n";
                for (const auto& row : result.trace) csv += row.csv_row() + "\n";
                detail::write_text_file(out_path, csv);
            }
        } else if (app.got_subcommand(exp_cmd)) {
            ExperimentConfig cfg = load_experiment_config();
            cfg.experiment = ExperimentConfig::parse_kind(exp_name);
            run_experiment(cfg);
        } else if (app.got_subcommand(diag_cmd)) {
            ExperimentConfig cfg = load_experiment_config();
            cfg.experiment = ExperimentConfig::Kind::diagnostics;
            run_diagnostics(cfg);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace hdrisk
