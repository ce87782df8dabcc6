#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "hdrisk/scalar_family.hpp"

namespace hdrisk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {
// %.17g round-trips doubles exactly; used for every CSV cell we write so
// repeated runs produce byte-identical files.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

// Design matrix plus responses.  Immutable after construction in all library
// code paths; shared freely across worker threads.
struct Dataset {
    Matrix X; // n x p
    Vector y; // n

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
    double aspect_ratio() const { return static_cast<double>(n()) / p(); }

    void validate() const {
        if (X.rows() < 2 || X.cols() < 1)
            throw std::invalid_argument("Dataset: need n >= 2 rows and p >= 1 columns");
        if (y.size() != X.rows())
            throw std::invalid_argument("Dataset: y length must match row count of X");
        if (!X.allFinite() || !y.allFinite())
            throw std::invalid_argument("Dataset: entries must be finite");
    }

    // CSV with header "y,x1,...,xp"; one row per observation.
    static Dataset from_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("Dataset: cannot open '" + path + "'");
        std::string line;
        if (!std::getline(in, line))
            throw std::invalid_argument("Dataset: '" + path + "' is empty");
        int p = 0;
        {
            std::stringstream header(line);
            std::string col;
            bool first = true;
            while (std::getline(header, col, ',')) {
                if (first && col != "y")
                    throw std::invalid_argument("Dataset: first column must be 'y'");
                if (!first) ++p;
                first = false;
            }
        }
        if (p < 1) throw std::invalid_argument("Dataset: no covariate columns");
        std::vector<double> cells;
        int n = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream row(line);
            std::string cell;
            int got = 0;
            while (std::getline(row, cell, ',')) {
                std::size_t used = 0;
                double v = std::stod(cell, &used);
                cells.push_back(v);
                ++got;
            }
            if (got != p + 1)
                throw std::invalid_argument("Dataset: row " + std::to_string(n + 1) +
                                            " has " + std::to_string(got) +
                                            " cells, expected " + std::to_string(p + 1));
            ++n;
        }
        Dataset d;
        d.X.resize(n, p);
        d.y.resize(n);
        for (int i = 0; i < n; ++i) {
            d.y(i) = cells[static_cast<std::size_t>(i) * (p + 1)];
            for (int j = 0; j < p; ++j)
                d.X(i, j) = cells[static_cast<std::size_t>(i) * (p + 1) + 1 + j];
        }
        d.validate();
        return d;
    }

    void to_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::invalid_argument("Dataset: cannot write '" + path + "'");
        out << "y";
        for (int j = 1; j <= p(); ++j) out << ",x" << j;
        out << "\n";
        for (int i = 0; i < n(); ++i) {
            out << detail::fmt(y(i));
            for (int j = 0; j < p(); ++j) out << ',' << detail::fmt(X(i, j));
            out << "\n";
        }
    }
};

// The penalized regression problem: minimize over beta
//   sum_i loss(y_i - x_i' beta) + lambda * sum_j reg(beta_j).
// The objective is kept in summed (un-normalized) form; the averaged form
// differs by a positive factor, so the minimizer is identical.
struct PenalizedModel {
    ScalarFamily loss;
    ScalarFamily regularizer;
    double lambda;

    PenalizedModel(ScalarFamily loss, ScalarFamily regularizer, double lambda)
        : loss(std::move(loss)), regularizer(std::move(regularizer)), lambda(lambda) {
        validate();
    }

    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw std::invalid_argument("PenalizedModel: lambda must be positive and finite");
        if (loss.curvature_lower() <= 0.0 && regularizer.curvature_lower() <= 0.0)
            throw std::invalid_argument(
                "PenalizedModel: flat loss curvature requires a strongly curved "
                "regularizer for a unique minimizer");
    }
};

// Solver output.  residuals are recomputed as y - X*beta_hat at the returned
// iterate (never a stale cache).  For a weighted fit they still cover every
// row of the dataset, so held-out residuals are read directly.
struct FitResult {
    Vector beta_hat;      // p
    Vector residuals;     // n; y - X * beta_hat
    double grad_inf_norm; // certificate: max-norm of the objective gradient
    int iterations;
    double objective;
};

namespace detail {
inline void check_eval_args(const PenalizedModel&, const Dataset& data, const Vector& beta) {
    if (beta.size() != data.X.cols())
        throw std::invalid_argument("beta length does not match dataset column count");
    if (!beta.allFinite()) throw std::invalid_argument("beta must be finite");
}

// weights == nullptr means all-ones.  A zero weight removes that row from
// the loss term, which is how leave-one-out and K-fold fits are expressed
// without copying data.
inline double objective_weighted(const PenalizedModel& model, const Dataset& data,
                                 const Vector& beta, const Vector* weights) {
    check_eval_args(model, data, beta);
    Vector r = data.y - data.X * beta;
    double loss_sum = 0.0;
    for (int i = 0; i < r.size(); ++i) {
        double w = weights ? (*weights)(i) : 1.0;
        if (w != 0.0) loss_sum += w * model.loss.value(r(i));
    }
    double pen = 0.0;
    for (int j = 0; j < beta.size(); ++j) pen += model.regularizer.value(beta(j));
    return loss_sum + model.lambda * pen;
}

inline Vector gradient_weighted(const PenalizedModel& model, const Dataset& data,
                                const Vector& beta, const Vector* weights) {
    check_eval_args(model, data, beta);
    Vector r = data.y - data.X * beta;
    Vector score(r.size());
    for (int i = 0; i < r.size(); ++i) {
        double w = weights ? (*weights)(i) : 1.0;
        score(i) = w == 0.0 ? 0.0 : w * model.loss.d1(r(i));
    }
    Vector g = -(data.X.transpose() * score);
    for (int j = 0; j < beta.size(); ++j) g(j) += model.lambda * model.regularizer.d1(beta(j));
    if (!g.allFinite()) throw std::invalid_argument("gradient: non-finite intermediate");
    return g;
}
} // namespace detail

inline double objective(const PenalizedModel& model, const Dataset& data, const Vector& beta) {
    return detail::objective_weighted(model, data, beta, nullptr);
}

// -X' l'(y - X beta) + lambda R'(beta); vanishes at the minimizer.
inline Vector gradient(const PenalizedModel& model, const Dataset& data, const Vector& beta) {
    return detail::gradient_weighted(model, data, beta, nullptr);
}

} // namespace hdrisk
