#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sdeadapt/piecewise.hpp"

namespace sdeadapt {

/// Scalar autonomous SDE dX = mu(X) dt + sigma(X) dW on [0,1], X_0 = x0.
/// theta is the canonical breakpoint set (union of mu's and sigma's); eps0
/// is the outer radius used by the adaptive step controller.
struct SdeProblem {
    double x0 = 0.0;
    PiecewiseFn mu = PiecewiseFn::constant(0.0);
    PiecewiseFn sigma = PiecewiseFn::constant(1.0);
    std::vector<double> theta;
    double eps0 = 1.0;
};

inline SdeProblem make_problem(double x0, PiecewiseFn mu, PiecewiseFn sigma,
                               double eps0 = 1.0) {
    std::vector<double> theta;
    theta.reserve(mu.breakpoints().size() + sigma.breakpoints().size());
    std::merge(mu.breakpoints().begin(), mu.breakpoints().end(),
               sigma.breakpoints().begin(), sigma.breakpoints().end(),
               std::back_inserter(theta));
    theta.erase(std::unique(theta.begin(), theta.end()), theta.end());
    return SdeProblem{x0, std::move(mu), std::move(sigma), std::move(theta), eps0};
}

struct ValidationCheck {
    std::string id;
    bool hard = false;   // hard failures make the problem unusable
    bool passed = true;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;

    bool hard_pass() const {
        for (const auto& c : checks)
            if (c.hard && !c.passed) return false;
        return true;
    }
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    void add(std::string id, bool hard, bool passed, std::string detail) {
        checks.push_back({std::move(id), hard, passed, std::move(detail)});
    }
    void print(std::ostream& os) const {
        for (const auto& c : checks)
            os << (c.passed ? "[pass] " : (c.hard ? "[FAIL] " : "[warn] "))
               << c.id << ": " << c.detail << '\n';
    }
};

struct ValidationOptions {
    int samples_per_piece = 1000;
    double window_pad = 4.0;     // sampling window beyond breakpoints / x0
    double limit_probe = 1e-8;   // offset for one-sided limit consistency
    double limit_tol = 1e-6;
};

namespace detail {

struct LipschitzEstimate {
    double fn = 0.0;    // sup |f'| over the sample grid
    double deriv = 0.0; // max divided difference of f'
    bool finite = true;
};

inline LipschitzEstimate sample_piece(const Piece& p, double a, double b, int n) {
    LipschitzEstimate est;
    double prev_d = 0.0, prev_x = 0.0;
    for (int j = 0; j <= n; ++j) {
        const double x = a + (b - a) * j / n;
        const double v = p.value(x);
        const double d = p.deriv(x);
        if (!std::isfinite(v) || !std::isfinite(d)) {
            est.finite = false;
            return est;
        }
        est.fn = std::max(est.fn, std::abs(d));
        if (j > 0 && x > prev_x)
            est.deriv = std::max(est.deriv, std::abs(d - prev_d) / (x - prev_x));
        prev_d = d;
        prev_x = x;
    }
    return est;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

} // namespace detail

/// Sample-based check of the standing assumptions: piecewise Lipschitz
/// coefficients with piecewise Lipschitz derivatives, sigma continuous and
/// nonzero on theta, eps0 within the breakpoint gap bound. Lipschitz
/// constants are reported as estimates over a finite grid, never as proofs.
inline ValidationReport validate_problem(const SdeProblem& p,
                                         const ValidationOptions& opt = {}) {
    ValidationReport rep;

    double lo = p.x0, hi = p.x0;
    for (double t : p.theta) { lo = std::min(lo, t); hi = std::max(hi, t); }
    lo -= opt.window_pad;
    hi += opt.window_pad;

    // eps0 range and the gap condition for k >= 2.
    {
        const bool ok = p.eps0 > 0.0 && p.eps0 <= 1.0;
        rep.add("eps0-range", true, ok, "eps0 = " + detail::fmt(p.eps0) + ", required in (0,1]");
    }
    if (p.theta.size() >= 2) {
        double min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < p.theta.size(); ++i)
            min_gap = std::min(min_gap, p.theta[i] - p.theta[i - 1]);
        const bool ok = p.eps0 <= 0.5 * min_gap;
        rep.add("eps0-gap", true, ok,
                "eps0 = " + detail::fmt(p.eps0) + ", half min gap = " + detail::fmt(0.5 * min_gap));
    }

    // (sigma1): sigma Lipschitz on R means continuous across every breakpoint,
    // and sigma(theta_i) != 0.
    for (std::size_t i = 0; i < p.sigma.breakpoints().size(); ++i) {
        const double jump = std::abs(p.sigma.jump(i));
        rep.add("sigma1-continuity@" + detail::fmt(p.sigma.breakpoints()[i]), true,
                jump <= 1e-8 * (1.0 + std::abs(p.sigma.left_limit(i))),
                "|sigma jump| = " + detail::fmt(jump));
    }
    for (double t : p.theta) {
        const double s = p.sigma(t);
        rep.add("sigma1-nonzero@" + detail::fmt(t), true, std::abs(s) > 1e-12,
                "sigma(" + detail::fmt(t) + ") = " + detail::fmt(s));
    }

    // One-sided limit consistency: the adjacent piece sampled just off the
    // breakpoint must agree with the recorded limit.
    auto limit_checks = [&](const PiecewiseFn& f, const std::string& name) {
        for (std::size_t i = 0; i < f.breakpoints().size(); ++i) {
            const double bp = f.breakpoints()[i];
            const double l_probe = f.piece(i).value(bp - opt.limit_probe);
            const double r_probe = f.piece(i + 1).value(bp + opt.limit_probe);
            const double el = std::abs(l_probe - f.left_limit(i));
            const double er = std::abs(r_probe - f.right_limit(i));
            rep.add(name + "-limits@" + detail::fmt(bp), false,
                    el <= opt.limit_tol && er <= opt.limit_tol,
                    "probe residuals " + detail::fmt(el) + " / " + detail::fmt(er));
        }
    };
    limit_checks(p.mu, "mu");
    limit_checks(p.sigma, "sigma");

    // (mu1)/(mu2)/(sigma2): sampled per-piece Lipschitz estimates.
    auto piece_checks = [&](const PiecewiseFn& f, const std::string& name) {
        const auto& bp = f.breakpoints();
        for (std::size_t i = 0; i < f.piece_count(); ++i) {
            const double a = (i == 0) ? lo : bp[i - 1];
            const double b = (i == bp.size()) ? hi : bp[i];
            if (!(a < b)) continue;
            // stay strictly inside the open piece
            const double pad = 1e-9 * (1.0 + std::abs(a) + std::abs(b));
            const auto est = detail::sample_piece(f.piece(i), a + pad, b - pad,
                                                  opt.samples_per_piece);
            rep.add(name + "-lipschitz-piece" + std::to_string(i), false, est.finite,
                    "est L(f) = " + detail::fmt(est.fn) +
                        ", est L(f') = " + detail::fmt(est.deriv) +
                        (est.finite ? "" : " (non-finite sample)"));
        }
    };
    piece_checks(p.mu, "mu");
    piece_checks(p.sigma, "sigma");

    return rep;
}

} // namespace sdeadapt
