#pragma once

#include <stdexcept>
#include <string>

namespace hdrisk {

// Numerical failures that a caller may reasonably catch and handle (skip a
// sweep cell, report a diagnostic, widen a bracket).  Anything deriving from
// std::invalid_argument is a caller bug instead: bad dimensions, non-finite
// input, parameters outside their documented domain.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Root bracketing failed: the function never changed sign over the expanded
// search interval.  Carries the last interval tried.
struct BracketFailure : NumericalError {
    BracketFailure(const std::string& what, double lo, double hi)
        : NumericalError(what + " (last bracket [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "])"),
          lo(lo), hi(hi) {}
    double lo, hi;
};

// Cholesky factorization of a curvature matrix failed; the problem instance
// is numerically indefinite (or catastrophically ill-conditioned).
struct SingularHessian : NumericalError {
    using NumericalError::NumericalError;
};

// Newton solve hit its iteration cap.  best_grad_inf_norm records how close
// the best iterate came so the caller can decide whether to accept it.
struct MaxIterExceeded : NumericalError {
    MaxIterExceeded(const std::string& what, double best_grad_inf_norm)
        : NumericalError(what), best_grad_inf_norm(best_grad_inf_norm) {}
    double best_grad_inf_norm;
};

// A leave-one-out leverage reached 1 (within tolerance): the influence
// correction r / (1 - h) is undefined and the approximation is meaningless.
struct LeverageOutOfRange : NumericalError {
    LeverageOutOfRange(const std::string& what, int index, double value)
        : NumericalError(what), index(index), value(value) {}
    int index;
    double value;
};

// Loss curvature vanished at an observed residual, so the curvature-ratio
// correction l'(r)/l''(r) cannot be formed.
struct ZeroCurvature : NumericalError {
    ZeroCurvature(const std::string& what, int index) : NumericalError(what), index(index) {}
    int index;
};

// The Onsager normalizer <psi'(z, theta)> collapsed to zero, so the
// correction term X^T psi / <psi'> is undefined for this iterate.
struct DegenerateOnsager : NumericalError {
    using NumericalError::NumericalError;
};

// The two independent calibration routes disagreed beyond tolerance.  This
// indicates an internal defect or a numerically hostile instance, never a
// condition to be papered over.
struct CalibrationMismatch : NumericalError {
    using NumericalError::NumericalError;
};

} // namespace hdrisk
