#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hdrisk/rootfind.hpp"

namespace hdrisk {

// A convex, twice-differentiable scalar function family, used both as the
// per-observation loss l and as the coordinatewise regularizer R.  All
// members are pure; instances are freely shared across threads.
//
// curvature_lower is a documented lower bound on d2.  For families whose
// curvature decays to zero at infinity (pseudo_huber, logistic_residual,
// smoothed_absolute) it is d2 evaluated at a configured working radius and
// is therefore only a *local* bound, valid on [-radius, radius]; it is
// metadata for diagnostics and never gates computation.
class ScalarFamily {
public:
    enum class Kind {
        squared,           // x^2 / 2
        ridge,             // x^2 / 2 (regularizer role)
        pseudo_huber,      // sqrt(x^2 + mu^2) - mu
        logistic_residual, // 2 log cosh(x/2)
        smoothed_absolute, // sqrt(x^2 + mu^2) - mu, smoothing of |x|
        elastic_smoothed,  // mix * smoothed_absolute + (1 - mix) * x^2 / 2
        power,             // |x|^q / q, q >= 2
    };

    struct Eval {
        double value, d1, d2;
    };

    static ScalarFamily squared() { return ScalarFamily(Kind::squared); }
    static ScalarFamily ridge() { return ScalarFamily(Kind::ridge); }

    static ScalarFamily pseudo_huber(double mu, double working_radius = 10.0) {
        ScalarFamily f(Kind::pseudo_huber);
        f.set_mu(mu);
        f.set_radius(working_radius);
        return f;
    }

    static ScalarFamily logistic_residual(double working_radius = 10.0) {
        ScalarFamily f(Kind::logistic_residual);
        f.set_radius(working_radius);
        return f;
    }

    static ScalarFamily smoothed_absolute(double mu, double working_radius = 10.0) {
        ScalarFamily f(Kind::smoothed_absolute);
        f.set_mu(mu);
        f.set_radius(working_radius);
        return f;
    }

    // mix = 1 is the pure smoothed absolute value; mix = 0 is pure x^2/2.
    static ScalarFamily elastic_smoothed(double mu, double mix, double working_radius = 10.0) {
        ScalarFamily f(Kind::elastic_smoothed);
        f.set_mu(mu);
        if (!(mix >= 0.0 && mix <= 1.0))
            throw std::invalid_argument("elastic_smoothed: mix must lie in [0,1]");
        f.mix_ = mix;
        f.set_radius(working_radius);
        return f;
    }

    static ScalarFamily power(double q) {
        if (!(q >= 2.0)) throw std::invalid_argument("power: exponent must be >= 2");
        ScalarFamily f(Kind::power);
        f.q_ = q;
        return f;
    }

    // Smoothing constructors for the non-differentiable regularizers.
    // elastic_net mixes the smoothed absolute value and x^2/2 equally.
    enum class SmoothBase { absolute, elastic_net };
    static ScalarFamily smooth(SmoothBase base, double mu) {
        return base == SmoothBase::absolute ? smoothed_absolute(mu)
                                            : elastic_smoothed(mu, 0.5);
    }

    // Returns the same family with value, d1, d2 multiplied by c > 0.  The
    // prox of c*f at scale s equals the prox of f at scale c*s, so all of
    // the calculus below flows through unchanged.
    ScalarFamily with_scale(double c) const {
        if (!(c > 0.0) || !std::isfinite(c))
            throw std::invalid_argument("with_scale: factor must be positive and finite");
        ScalarFamily f = *this;
        f.scale_ *= c;
        return f;
    }

    Kind kind() const { return kind_; }
    double mu() const { return mu_; }
    double mix() const { return mix_; }
    double exponent() const { return q_; }
    double scale() const { return scale_; }
    double working_radius() const { return radius_; }

    // True when d2 is globally constant, i.e. the function is a quadratic.
    // Downstream code uses this to take exact Newton shortcuts.
    bool is_quadratic() const {
        return kind_ == Kind::squared || kind_ == Kind::ridge ||
               (kind_ == Kind::power && q_ == 2.0) ||
               (kind_ == Kind::elastic_smoothed && mix_ == 0.0);
    }

    double value(double x) const { return scale_ * base_value(x); }
    double d1(double x) const { return scale_ * base_d1(x); }
    double d2(double x) const { return scale_ * base_d2(x); }

    Eval eval(double x) const {
        if (!std::isfinite(x)) throw std::invalid_argument("eval: x must be finite");
        return {value(x), d1(x), d2(x)};
    }

    // kappa: documented lower bound on d2 (local for the decaying families).
    double curvature_lower() const {
        switch (kind_) {
            case Kind::squared:
            case Kind::ridge: return scale_;
            case Kind::pseudo_huber:
            case Kind::logistic_residual:
            case Kind::smoothed_absolute: return d2(radius_);
            case Kind::elastic_smoothed:
                return scale_ * (1.0 - mix_) + mix_ * scale_ * ph_d2(radius_);
            case Kind::power: return q_ == 2.0 ? scale_ : 0.0;
        }
        return 0.0;
    }

    // alpha: Holder exponent of d2 (metadata only).
    double holder_exponent() const {
        if (kind_ == Kind::power && q_ > 2.0) return std::min(1.0, q_ - 2.0);
        return 1.0;
    }

    // rho: polynomial growth order of the function (metadata only).
    double growth_order() const {
        switch (kind_) {
            case Kind::squared:
            case Kind::ridge: return 2.0;
            case Kind::pseudo_huber:
            case Kind::logistic_residual:
            case Kind::smoothed_absolute: return 1.0;
            case Kind::elastic_smoothed: return mix_ < 1.0 ? 2.0 : 1.0;
            case Kind::power: return q_;
        }
        return 2.0;
    }

    // argmin_y  (x - y)^2 / 2 + s * f(y).  Quadratic kinds collapse to the
    // closed form x / (1 + s_eff); everything else solves the increasing
    // stationarity equation g(y) = y - x + s*f'(y) by safeguarded Newton
    // inside the bracket [x - s*f'(x), x] (ordered), which always contains
    // the root for these symmetric convex families.
    double prox(double x, double s) const {
        if (!(s > 0.0)) throw std::invalid_argument("prox: scale must be positive");
        if (!std::isfinite(x)) throw std::invalid_argument("prox: x must be finite");
        const double se = s * scale_;
        if (is_quadratic()) {
            double curv = base_d2(0.0); // constant
            return x / (1.0 + se * curv);
        }
        double step = se * base_d1(x);
        double lo = std::min(x, x - step);
        double hi = std::max(x, x - step);
        if (lo == hi) return x;
        auto g = [&](double y) { return y - x + se * base_d1(y); };
        auto dg = [&](double y) { return 1.0 + se * base_d2(y); };
        const double tol = 1e-14 * (1.0 + std::abs(x));
        double y = rootfind::newton_bracketed(g, dg, x - step / dg(x), lo, hi, tol);
        return y;
    }

    // d/dx prox(x, s) = 1 / (1 + s * f''(prox(x, s))), in (0, 1].
    double prox_derivative(double x, double s) const {
        double y = prox(x, s);
        return 1.0 / (1.0 + s * d2(y));
    }

    // Round-trippable textual form, e.g. "pseudo_huber:mu=0.5".
    std::string to_spec() const {
        std::string out = kind_name();
        std::vector<std::pair<const char*, double>> params;
        if (has_mu()) params.emplace_back("mu", mu_);
        if (kind_ == Kind::elastic_smoothed) params.emplace_back("mix", mix_);
        if (kind_ == Kind::power) params.emplace_back("q", q_);
        if (scale_ != 1.0) params.emplace_back("scale", scale_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s%s=%.17g", i == 0 ? ":" : ",",
                          params[i].first, params[i].second);
            out += buf;
        }
        return out;
    }

    // Parses "name" or "name:key=val,key=val"; accepted keys are mu, mix, q,
    // scale, radius.  Inverse of to_spec for every constructible family.
    static ScalarFamily parse(std::string_view spec);

private:
    explicit ScalarFamily(Kind k) : kind_(k) {}

    bool has_mu() const {
        return kind_ == Kind::pseudo_huber || kind_ == Kind::smoothed_absolute ||
               kind_ == Kind::elastic_smoothed;
    }

    void set_mu(double mu) {
        if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
        mu_ = mu;
    }

    void set_radius(double r) {
        if (!(r > 0.0)) throw std::invalid_argument("working radius must be positive");
        radius_ = r;
    }

    const char* kind_name() const {
        switch (kind_) {
            case Kind::squared: return "squared";
            case Kind::ridge: return "ridge";
            case Kind::pseudo_huber: return "pseudo_huber";
            case Kind::logistic_residual: return "logistic_residual";
            case Kind::smoothed_absolute: return "smoothed_absolute";
            case Kind::elastic_smoothed: return "elastic_smoothed";
            case Kind::power: return "power";
        }
        return "?";
    }

    // sqrt(x^2 + mu^2) - mu and its derivatives (pseudo-Huber core, also the
    // smoothed absolute value).
    double ph_value(double x) const { return std::hypot(x, mu_) - mu_; }
    double ph_d1(double x) const { return x / std::hypot(x, mu_); }
    double ph_d2(double x) const {
        double h = std::hypot(x, mu_);
        return (mu_ * mu_) / (h * h * h);
    }

    double base_value(double x) const {
        switch (kind_) {
            case Kind::squared:
            case Kind::ridge: return 0.5 * x * x;
            case Kind::pseudo_huber:
            case Kind::smoothed_absolute: return ph_value(x);
            case Kind::logistic_residual: {
                double a = std::abs(x);
                return a + 2.0 * std::log1p(std::exp(-a)) - 2.0 * M_LN2;
            }
            case Kind::elastic_smoothed:
                return mix_ * ph_value(x) + (1.0 - mix_) * 0.5 * x * x;
            case Kind::power: return std::pow(std::abs(x), q_) / q_;
        }
        return 0.0;
    }

    double base_d1(double x) const {
        switch (kind_) {
            case Kind::squared:
            case Kind::ridge: return x;
            case Kind::pseudo_huber:
            case Kind::smoothed_absolute: return ph_d1(x);
            case Kind::logistic_residual: return std::tanh(0.5 * x);
            case Kind::elastic_smoothed: return mix_ * ph_d1(x) + (1.0 - mix_) * x;
            case Kind::power: {
                double a = std::abs(x);
                return a == 0.0 ? 0.0 : std::copysign(std::pow(a, q_ - 1.0), x);
            }
        }
        return 0.0;
    }

    double base_d2(double x) const {
        switch (kind_) {
            case Kind::squared:
            case Kind::ridge: return 1.0;
            case Kind::pseudo_huber:
            case Kind::smoothed_absolute: return ph_d2(x);
            case Kind::logistic_residual: {
                // 0.5 sech^2(x/2), written to avoid cosh overflow.
                double e = std::exp(-std::abs(x));
                double d = 1.0 + e;
                return 2.0 * e / (d * d);
            }
            case Kind::elastic_smoothed: return mix_ * ph_d2(x) + (1.0 - mix_);
            case Kind::power: {
                if (q_ == 2.0) return 1.0;
                double a = std::abs(x);
                return a == 0.0 ? 0.0 : (q_ - 1.0) * std::pow(a, q_ - 2.0);
            }
        }
        return 0.0;
    }

    Kind kind_;
    double mu_ = 1.0;
    double mix_ = 1.0;
    double q_ = 2.0;
    double scale_ = 1.0;
    double radius_ = 10.0;
};

struct PsiValue {
    double value; // theta * l'(eta_l(z, theta)); equals z - eta_l(z, theta)
    double d1;    // d/dz psi = theta*l''(eta) / (1 + theta*l''(eta)), in [0,1)
};

// The effective-score function of the loss: psi(z, theta) = theta * l'(eta)
// evaluated at the loss prox eta = eta_l(z, theta).
inline PsiValue psi(const ScalarFamily& loss, double z, double theta) {
    if (!(theta > 0.0)) throw std::invalid_argument("psi: theta must be positive");
    double eta = loss.prox(z, theta);
    double curv = theta * loss.d2(eta);
    return {theta * loss.d1(eta), curv / (1.0 + curv)};
}

inline ScalarFamily ScalarFamily::parse(std::string_view spec) {
    auto colon = spec.find(':');
    std::string name(spec.substr(0, colon));
    bool have_mu = false, have_mix = false, have_q = false;
    double mu = 0, mix = 0, q = 0, scale = 1.0, radius = 10.0;
    if (colon != std::string_view::npos) {
        std::string_view rest = spec.substr(colon + 1);
        while (!rest.empty()) {
            auto comma = rest.find(',');
            std::string_view item = rest.substr(0, comma);
            rest = comma == std::string_view::npos ? std::string_view{}
                                                   : rest.substr(comma + 1);
            auto eq = item.find('=');
            if (eq == std::string_view::npos)
                throw std::invalid_argument("family spec: expected key=value, got '" +
                                            std::string(item) + "'");
            std::string key(item.substr(0, eq));
            double val;
            try {
                std::size_t used = 0;
                std::string digits(item.substr(eq + 1));
                val = std::stod(digits, &used);
                if (used != digits.size()) throw std::invalid_argument(digits);
            } catch (const std::exception&) {
                throw std::invalid_argument("family spec: bad numeric value in '" +
                                            std::string(item) + "'");
            }
            if (key == "mu") { mu = val; have_mu = true; }
            else if (key == "mix") { mix = val; have_mix = true; }
            else if (key == "q") { q = val; have_q = true; }
            else if (key == "scale") scale = val;
            else if (key == "radius") radius = val;
            else throw std::invalid_argument("family spec: unknown key '" + key + "'");
        }
    }
    auto need_mu = [&]() {
        if (!have_mu)
            throw std::invalid_argument("family spec: '" + name + "' requires mu=...");
        return mu;
    };
    ScalarFamily f = [&]() {
        if (name == "squared") return squared();
        if (name == "ridge") return ridge();
        if (name == "pseudo_huber") return pseudo_huber(need_mu(), radius);
        if (name == "logistic_residual") return logistic_residual(radius);
        if (name == "smoothed_absolute") return smoothed_absolute(need_mu(), radius);
        if (name == "elastic_smoothed")
            return elastic_smoothed(need_mu(), have_mix ? mix : 0.5, radius);
        if (name == "power") {
            if (!have_q) throw std::invalid_argument("family spec: power requires q=...");
            return power(q);
        }
        throw std::invalid_argument("family spec: unknown family '" + name + "'");
    }();
    return scale == 1.0 ? f : f.with_scale(scale);
}

} // namespace hdrisk
