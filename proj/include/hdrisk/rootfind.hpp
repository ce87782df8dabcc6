#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "hdrisk/errors.hpp"

namespace hdrisk::rootfind {

struct BracketOptions {
    double grow = 2.0;     // expansion factor per attempt
    int max_grow = 200;    // attempts before giving up
    double hi_cap = 1e12;  // never expand the upper end past this
};

// Expands [lo, hi] upward (geometrically) until f changes sign.  Requires
// f(lo) and f(hi) finite; assumes the caller knows a sign change exists for
// monotone f once hi is large enough.  Returns the bracketing pair.
template <typename F>
std::pair<double, double> expand_upward(F&& f, double lo, double hi,
                                        const BracketOptions& opt = {}) {
    double flo = f(lo);
    double fhi = f(hi);
    if (!std::isfinite(flo) || !std::isfinite(fhi))
        throw BracketFailure("bracket endpoints evaluated non-finite", lo, hi);
    if (flo == 0.0) return {lo, lo};
    for (int k = 0; k < opt.max_grow; ++k) {
        if ((flo < 0.0) != (fhi < 0.0) || fhi == 0.0) return {lo, hi};
        lo = hi;
        flo = fhi;
        hi = std::min(hi * opt.grow, opt.hi_cap);
        if (hi <= lo) break;
        fhi = f(hi);
        if (!std::isfinite(fhi))
            throw BracketFailure("bracket expansion hit non-finite value", lo, hi);
    }
    throw BracketFailure("no sign change found while expanding bracket", lo, hi);
}

// Bisection on [lo, hi] with f(lo), f(hi) of opposite sign (or one of them
// zero).  Runs until the interval is a few ulps wide or |f| <= f_tol.
// Always terminates; never throws once a genuine bracket is supplied.
template <typename F>
double bisect(F&& f, double lo, double hi, double f_tol = 0.0) {
    double flo = f(lo);
    if (flo == 0.0) return lo;
    double fhi = f(hi);
    if (fhi == 0.0) return hi;
    if ((flo < 0.0) == (fhi < 0.0))
        throw BracketFailure("bisect called without a sign change", lo, hi);
    for (int k = 0; k < 200; ++k) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break; // interval has collapsed in fp
        double fmid = f(mid);
        if (fmid == 0.0 || (f_tol > 0.0 && std::abs(fmid) <= f_tol)) return mid;
        if ((fmid < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// Newton iteration safeguarded by a maintained bracket: any step that leaves
// the current interval is replaced by its midpoint, so convergence is no
// worse than bisection.  f must be increasing on [lo, hi] for the bracket
// updates to be meaningful (true for every use in this library: the
// functions are sums of increasing terms).  df need not be exact; it only
// steers the step.  Stops when |f| <= f_tol or the bracket collapses.
template <typename F, typename DF>
double newton_bracketed(F&& f, DF&& df, double x0, double lo, double hi,
                        double f_tol, int max_iter = 100) {
    double x = std::clamp(x0, lo, hi);
    for (int k = 0; k < max_iter; ++k) {
        double fx = f(x);
        if (std::abs(fx) <= f_tol) return x;
        if (fx > 0.0) hi = x;
        else lo = x;
        double d = df(x);
        double step = (d > 0.0 && std::isfinite(d)) ? fx / d : 0.0;
        double xn = x - step;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (xn == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                                        (std::abs(lo) + std::abs(hi)))
            return x;
        x = xn;
    }
    return x;
}

} // namespace hdrisk::rootfind
