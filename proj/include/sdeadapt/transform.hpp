#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sdeadapt/problem.hpp"

namespace sdeadapt {

/// Bump phi(x) = (1 - x^2)^4 on [-1,1] and its first three derivatives
/// (zero outside the support; all listed derivatives vanish at the edge).
struct BumpValue {
    double phi = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
};

inline BumpValue bump(double x) {
    BumpValue b;
    if (std::abs(x) >= 1.0) return b;
    const double s = 1.0 - x * x;
    const double s2 = s * s;
    b.phi = s2 * s2;
    b.d1 = -8.0 * x * s2 * s;
    b.d2 = 8.0 * s2 * (7.0 * x * x - 1.0);
    b.d3 = 48.0 * x * s * (3.0 - 7.0 * x * x);
    return b;
}

class InverseError : public std::runtime_error {
public:
    InverseError(const std::string& what, double best_x, double residual)
        : std::runtime_error(what), best_x(best_x), residual(residual) {}
    double best_x;
    double residual;
};

/// Parameters of the kink-cancelling map
///   G(x) = x + sum_i alpha_i (x - z_i)|x - z_i| phi((x - z_i)/nu),
/// with 0 < nu < rho(z, alpha) so that G is increasing and bi-Lipschitz.
struct TransformParams {
    std::vector<double> z;
    std::vector<double> alpha;
    double nu = 0.0;
    double rho = std::numeric_limits<double>::infinity();
    double inverse_tol = 1e-12;
    int inverse_max_iter = 100;

    bool identity() const {
        for (double a : alpha)
            if (a != 0.0) return false;
        return true;
    }
};

/// alpha_i = (mu(xi_i-) - mu(xi_i+)) / (2 sigma^2(xi_i)), one per theta point.
inline std::vector<double> compute_alpha(const SdeProblem& p) {
    std::vector<double> alpha;
    alpha.reserve(p.theta.size());
    for (double t : p.theta) {
        const double s = p.sigma(t);
        if (std::abs(s) <= 1e-12)
            throw std::invalid_argument("compute_alpha: sigma vanishes at breakpoint " +
                                        std::to_string(t));
        double jump = 0.0;
        const auto& bp = p.mu.breakpoints();
        const auto it = std::lower_bound(bp.begin(), bp.end(), t);
        if (it != bp.end() && *it == t) {
            const std::size_t i = static_cast<std::size_t>(it - bp.begin());
            jump = p.mu.left_limit(i) - p.mu.right_limit(i);
        }
        alpha.push_back(jump / (2.0 * s * s));
    }
    return alpha;
}

/// rho = min over 1/(8|alpha_i|) and half-gaps of z, with 1/0 = infinity.
inline double compute_rho(std::span<const double> z, std::span<const double> alpha) {
    if (z.size() != alpha.size())
        throw std::invalid_argument("compute_rho: z and alpha sizes differ");
    double rho = std::numeric_limits<double>::infinity();
    for (double a : alpha)
        if (a != 0.0) rho = std::min(rho, 1.0 / (8.0 * std::abs(a)));
    for (std::size_t i = 1; i < z.size(); ++i)
        rho = std::min(rho, 0.5 * (z[i] - z[i - 1]));
    return rho;
}

/// Build the transform for a problem. nu defaults to rho/2 when rho is
/// finite; when every alpha vanishes the transform is the identity and nu
/// is irrelevant (kept at 0).
inline TransformParams make_transform(const SdeProblem& p,
                                      std::optional<double> nu = std::nullopt) {
    TransformParams tp;
    tp.z = p.theta;
    tp.alpha = compute_alpha(p);
    tp.rho = compute_rho(tp.z, tp.alpha);
    if (tp.identity() && !nu) return tp;
    tp.nu = nu ? *nu : (std::isfinite(tp.rho) ? 0.5 * tp.rho : 1.0);
    if (!(tp.nu > 0.0 && tp.nu < tp.rho))
        throw std::invalid_argument("make_transform: nu must lie in (0, rho)");
    return tp;
}

namespace detail {

// Index of the only bump whose support can contain x (supports are disjoint
// since nu < rho implies |z_i - z_j| >= 2 nu), or npos.
inline std::size_t active_bump(const TransformParams& tp, double x) {
    const auto it = std::lower_bound(tp.z.begin(), tp.z.end(), x);
    std::size_t best = static_cast<std::size_t>(-1);
    double bd = tp.nu;
    if (it != tp.z.end() && *it - x < bd) { bd = *it - x; best = it - tp.z.begin(); }
    if (it != tp.z.begin() && x - *std::prev(it) < bd) best = it - tp.z.begin() - 1;
    return best;
}

} // namespace detail

inline double g_eval(const TransformParams& tp, double x) {
    const std::size_t i = detail::active_bump(tp, x);
    if (i == static_cast<std::size_t>(-1)) return x;
    const double u = x - tp.z[i];
    return x + tp.alpha[i] * u * std::abs(u) * bump(u / tp.nu).phi;
}

inline double g_prime(const TransformParams& tp, double x) {
    const std::size_t i = detail::active_bump(tp, x);
    if (i == static_cast<std::size_t>(-1)) return 1.0;
    const double u = x - tp.z[i];
    const auto b = bump(u / tp.nu);
    return 1.0 + tp.alpha[i] * (2.0 * std::abs(u) * b.phi +
                                u * std::abs(u) * b.d1 / tp.nu);
}

enum class Side { left, right };

/// Piecewise second derivative; at a kink point z_i the requested one-sided
/// limit (-2 alpha_i from the left, +2 alpha_i from the right).
inline double g_second(const TransformParams& tp, double x, Side side = Side::right) {
    const std::size_t i = detail::active_bump(tp, x);
    if (i == static_cast<std::size_t>(-1)) return 0.0;
    const double u = x - tp.z[i];
    if (u == 0.0) return (side == Side::left ? -2.0 : 2.0) * tp.alpha[i];
    const auto b = bump(u / tp.nu);
    const double sgn = u > 0.0 ? 1.0 : -1.0;
    return tp.alpha[i] * (2.0 * sgn * b.phi + 4.0 * std::abs(u) * b.d1 / tp.nu +
                          u * std::abs(u) * b.d2 / (tp.nu * tp.nu));
}

/// Third derivative away from z (used for derivative formulas of the
/// transformed coefficients); one-sided limits at z_i are both 0.
inline double g_third(const TransformParams& tp, double x) {
    const std::size_t i = detail::active_bump(tp, x);
    if (i == static_cast<std::size_t>(-1)) return 0.0;
    const double u = x - tp.z[i];
    if (u == 0.0) return 0.0;
    const auto b = bump(u / tp.nu);
    const double sgn = u > 0.0 ? 1.0 : -1.0;
    const double nu2 = tp.nu * tp.nu;
    return tp.alpha[i] * (6.0 * sgn * b.d1 / tp.nu + 6.0 * std::abs(u) * b.d2 / nu2 +
                          u * std::abs(u) * b.d3 / (nu2 * tp.nu));
}

/// The extension of G'' to the kink points that makes the transformed drift
/// continuous: G''(xi_i) = 2 alpha_i + 2 (mu(xi_i+) - mu(xi_i)) / sigma^2(xi_i).
inline double g_second_extended(const TransformParams& tp, const SdeProblem& p, double x) {
    const auto it = std::lower_bound(tp.z.begin(), tp.z.end(), x);
    if (it == tp.z.end() || *it != x)
        throw std::invalid_argument("g_second_extended: x is not a breakpoint");
    const std::size_t i = static_cast<std::size_t>(it - tp.z.begin());
    const double s2 = p.sigma(x) * p.sigma(x);
    double mu_right = p.mu(x);
    const auto& bp = p.mu.breakpoints();
    const auto mit = std::lower_bound(bp.begin(), bp.end(), x);
    if (mit != bp.end() && *mit == x)
        mu_right = p.mu.right_limit(static_cast<std::size_t>(mit - bp.begin()));
    return 2.0 * tp.alpha[i] + 2.0 * (mu_right - p.mu(x)) / s2;
}

/// Solve G(x) = y. Outside the bump supports G is the identity; each support
/// interval [z_i - nu, z_i + nu] maps onto itself (G fixes z_i and both
/// edges), so the root is bracketed there exactly and safeguarded Newton
/// with bisection fallback converges for any monotone C^1 G.
inline double g_inverse_seeded(const TransformParams& tp, double y, double seed) {
    const std::size_t i = detail::active_bump(tp, y);
    if (i == static_cast<std::size_t>(-1)) return y;
    const double zi = tp.z[i];
    if (y == zi) return zi;
    double lo, hi;
    if (y > zi) { lo = zi; hi = zi + tp.nu; }
    else { lo = zi - tp.nu; hi = zi; }

    double x = seed;
    if (!(x > lo && x < hi)) x = y;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    double best_x = x;
    double best_res = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < tp.inverse_max_iter; ++iter) {
        const double r = g_eval(tp, x) - y;
        const double ar = std::abs(r);
        if (ar < best_res) { best_res = ar; best_x = x; }
        if (ar <= tp.inverse_tol) return x;
        if (r > 0.0) hi = x; else lo = x;
        const double gp = g_prime(tp, x);
        double next = x - r / gp;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == x) return x; // interval exhausted at machine precision
        x = next;
    }
    throw InverseError("g_inverse: no convergence within max_iter", best_x, best_res);
}

inline double g_inverse(const TransformParams& tp, double y) {
    return g_inverse_seeded(tp, y, y);
}

namespace detail {

struct TransformedCoeffs {
    double mu, dmu, sigma, dsigma;
};

// Coefficients of the transformed SDE at y, evaluated through x = G^{-1}(y):
//   mu~ = G' mu + (1/2) G'' sigma^2,  sigma~ = G' sigma,
// with derivatives by the chain rule (d/dy = (d/dx) / G'(x)).
// side picks the one-sided limits when x lands exactly on a breakpoint
// (-1 left, +1 right, 0 pointwise value with the extended G'').
inline TransformedCoeffs transformed_coeffs_at(const SdeProblem& p,
                                               const TransformParams& tp,
                                               double x, int side) {
    const auto bit = std::lower_bound(tp.z.begin(), tp.z.end(), x);
    const bool at_break = bit != tp.z.end() && *bit == x;

    double mu, dmu, sig, dsig, g2;
    const double g1 = g_prime(tp, x);
    const double g3 = g_third(tp, x);
    if (at_break && side != 0) {
        auto pick = [&](const PiecewiseFn& f) {
            const auto& bp = f.breakpoints();
            const auto it = std::lower_bound(bp.begin(), bp.end(), x);
            if (it == bp.end() || *it != x)
                return std::pair<double, double>{f(x), f.derivative(x)};
            const std::size_t i = static_cast<std::size_t>(it - bp.begin());
            return side < 0 ? std::pair<double, double>{f.left_limit(i), f.left_deriv_limit(i)}
                            : std::pair<double, double>{f.right_limit(i), f.right_deriv_limit(i)};
        };
        std::tie(mu, dmu) = pick(p.mu);
        std::tie(sig, dsig) = pick(p.sigma);
        g2 = g_second(tp, x, side < 0 ? Side::left : Side::right);
    } else {
        mu = p.mu(x);
        dmu = p.mu.derivative(x);
        sig = p.sigma(x);
        dsig = p.sigma.derivative(x);
        g2 = at_break ? g_second_extended(tp, p, x) : g_second(tp, x);
    }

    TransformedCoeffs c;
    c.mu = g1 * mu + 0.5 * g2 * sig * sig;
    c.sigma = g1 * sig;
    c.dsigma = (g2 * sig + g1 * dsig) / g1;
    c.dmu = (g2 * mu + g1 * dmu + 0.5 * g3 * sig * sig + g2 * sig * dsig) / g1;
    return c;
}

} // namespace detail

/// The transformed SDE: x0 -> G(x0), coefficients mu~ and sigma~ evaluated
/// lazily through the numerical inverse, breakpoints unchanged (G fixes
/// every xi_i). With continuous drift (all alpha zero) the original problem
/// is returned untouched.
inline SdeProblem transformed_problem(const SdeProblem& p, const TransformParams& tp) {
    if (tp.identity()) return p;

    const std::size_t k = p.theta.size();
    std::vector<Piece> mu_pieces(k + 1), sig_pieces(k + 1);
    for (std::size_t j = 0; j <= k; ++j) {
        // side resolution for exact endpoint hits: the piece left of a
        // breakpoint sees the left limit there, and vice versa.
        auto side_of = [j, k, theta = p.theta](double x) -> int {
            if (j < k && x == theta[j]) return -1;
            if (j > 0 && x == theta[j - 1]) return +1;
            return 0;
        };
        auto coeffs = [p, tp, side_of](double y) {
            const double x = g_inverse(tp, y);
            return detail::transformed_coeffs_at(p, tp, x, side_of(x));
        };
        mu_pieces[j] = Piece{[coeffs](double y) { return coeffs(y).mu; },
                             [coeffs](double y) { return coeffs(y).dmu; }};
        sig_pieces[j] = Piece{[coeffs](double y) { return coeffs(y).sigma; },
                              [coeffs](double y) { return coeffs(y).dsigma; }};
    }

    std::vector<double> mu_at(k), sig_at(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double xi = p.theta[i];
        const auto c = detail::transformed_coeffs_at(p, tp, xi, 0);
        mu_at[i] = c.mu;       // equals both one-sided limits by construction
        sig_at[i] = c.sigma;   // G'(xi) = 1, so this is sigma(xi)
    }

    SdeProblem out;
    out.x0 = g_eval(tp, p.x0);
    out.mu = PiecewiseFn(p.theta, std::move(mu_pieces), std::move(mu_at));
    out.sigma = PiecewiseFn(p.theta, std::move(sig_pieces), std::move(sig_at));
    out.theta = p.theta;
    out.eps0 = p.eps0;
    return out;
}

} // namespace sdeadapt
