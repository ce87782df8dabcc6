#pragma once

#include <cstdint>
#include <fstream>

#include "hdrisk/model.hpp"
#include "hdrisk/rng.hpp"

namespace hdrisk {

// Gaussian synthetic problem: X entries i.i.d. N(0, 1/n), y = X beta0 + w.
// Sub-Gaussian design/noise classes beyond the Gaussian case are deliberately
// not implemented.  sd = 0 / variance = 0 are allowed for exact-recovery
// edge cases.
struct SyntheticSpec {
    struct BetaPrior {
        enum class Kind { gaussian, constant } kind;
        double value; // variance for gaussian, the coordinate value for constant
        static BetaPrior gaussian(double variance) {
            if (!(variance >= 0.0)) throw std::invalid_argument("beta variance must be >= 0");
            return {Kind::gaussian, variance};
        }
        static BetaPrior constant(double v) { return {Kind::constant, v}; }
    };

    int n;
    int p;
    BetaPrior beta_prior = BetaPrior::gaussian(1.0);
    double noise_sd = 1.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (n < 2 || p < 1) throw std::invalid_argument("SyntheticSpec: need n >= 2, p >= 1");
        if (!(noise_sd >= 0.0)) throw std::invalid_argument("SyntheticSpec: noise_sd must be >= 0");
    }
};

struct GeneratedData {
    Dataset data;
    Vector beta_star;
    Vector noise;
};

// Fully determined by spec.seed via named substreams, so sweep cells can be
// generated in any order (or in parallel) with identical results.
inline GeneratedData generate(const SyntheticSpec& spec) {
    spec.validate();
    GeneratedData out;
    out.data.X.resize(spec.n, spec.p);
    const double x_sd = 1.0 / std::sqrt(static_cast<double>(spec.n));
    rng::Stream xs(spec.seed, "design");
    for (int i = 0; i < spec.n; ++i)
        for (int j = 0; j < spec.p; ++j) out.data.X(i, j) = x_sd * xs.gaussian();

    out.beta_star.resize(spec.p);
    if (spec.beta_prior.kind == SyntheticSpec::BetaPrior::Kind::gaussian) {
        const double b_sd = std::sqrt(spec.beta_prior.value);
        rng::Stream bs(spec.seed, "signal");
        for (int j = 0; j < spec.p; ++j) out.beta_star(j) = b_sd * bs.gaussian();
    } else {
        out.beta_star.setConstant(spec.beta_prior.value);
    }

    out.noise.resize(spec.n);
    rng::Stream ws(spec.seed, "noise");
    for (int i = 0; i < spec.n; ++i) out.noise(i) = spec.noise_sd * ws.gaussian();

    out.data.y = out.data.X * out.beta_star + out.noise;
    return out;
}

struct TestData {
    Matrix X_new; // m x p
    Vector y_new; // m
};

// Extra-sample draws from the same law: rows N(0, I/n) with the TRAINING n
// in the variance, responses x' beta_star + fresh noise at spec.noise_sd.
inline TestData generate_test(const SyntheticSpec& spec, const Vector& beta_star, int m,
                              std::uint64_t seed) {
    spec.validate();
    if (m < 1) throw std::invalid_argument("generate_test: m must be >= 1");
    if (beta_star.size() != spec.p)
        throw std::invalid_argument("generate_test: beta_star length != p");
    TestData out;
    out.X_new.resize(m, spec.p);
    const double x_sd = 1.0 / std::sqrt(static_cast<double>(spec.n));
    rng::Stream xs(seed, "test_design");
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < spec.p; ++j) out.X_new(i, j) = x_sd * xs.gaussian();
    rng::Stream ws(seed, "test_noise");
    out.y_new.resize(m);
    for (int i = 0; i < m; ++i) out.y_new(i) = spec.noise_sd * ws.gaussian();
    out.y_new += out.X_new * beta_star;
    return out;
}

// Sidecar persistence for the true signal next to Dataset::to_csv output.
inline void save_beta_csv(const Vector& beta, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("save_beta_csv: cannot write '" + path + "'");
    out << "beta\n";
    for (int j = 0; j < beta.size(); ++j) out << detail::fmt(beta(j)) << "\n";
}

inline Vector load_beta_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_beta_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "beta")
        throw std::invalid_argument("load_beta_csv: expected 'beta' header in '" + path + "'");
    std::vector<double> vals;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        vals.push_back(std::stod(line));
    }
    if (vals.empty()) throw std::invalid_argument("load_beta_csv: no rows in '" + path + "'");
    Vector beta(static_cast<int>(vals.size()));
    for (std::size_t j = 0; j < vals.size(); ++j) beta(static_cast<int>(j)) = vals[j];
    return beta;
}

} // namespace hdrisk
