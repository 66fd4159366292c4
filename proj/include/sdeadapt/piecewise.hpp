#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sdeadapt {

using ScalarFn = std::function<double(double)>;

/// One smooth piece, given as an explicit (value, derivative) pair. The
/// formulas are expected to extend continuously to the closure of their
/// interval; one-sided limits at breakpoints are read off that extension.
struct Piece {
    ScalarFn value;
    ScalarFn deriv;
};

/// Scalar function made of k+1 smooth pieces separated by k sorted
/// breakpoints, with a configurable pointwise value at each breakpoint
/// (default: the right limit). derivative() follows the a.e. convention:
/// 0 wherever the function is not differentiable.
class PiecewiseFn {
public:
    PiecewiseFn(std::vector<double> breakpoints, std::vector<Piece> pieces,
                std::vector<double> values_at_breakpoints = {})
        : breakpoints_(std::move(breakpoints)), pieces_(std::move(pieces)) {
        if (pieces_.size() != breakpoints_.size() + 1)
            throw std::invalid_argument("PiecewiseFn: need k+1 pieces for k breakpoints");
        for (std::size_t i = 1; i < breakpoints_.size(); ++i)
            if (!(breakpoints_[i - 1] < breakpoints_[i]))
                throw std::invalid_argument("PiecewiseFn: breakpoints must be strictly increasing");
        for (const auto& p : pieces_)
            if (!p.value || !p.deriv)
                throw std::invalid_argument("PiecewiseFn: piece missing value or derivative");
        if (values_at_breakpoints.empty()) {
            at_breaks_.reserve(breakpoints_.size());
            for (std::size_t i = 0; i < breakpoints_.size(); ++i)
                at_breaks_.push_back(right_limit(i));
        } else {
            if (values_at_breakpoints.size() != breakpoints_.size())
                throw std::invalid_argument("PiecewiseFn: one value per breakpoint required");
            at_breaks_ = std::move(values_at_breakpoints);
        }
    }

    static PiecewiseFn smooth(ScalarFn f, ScalarFn df) {
        return PiecewiseFn({}, {Piece{std::move(f), std::move(df)}});
    }
    static PiecewiseFn constant(double c) {
        return smooth([c](double) { return c; }, [](double) { return 0.0; });
    }

    double operator()(double x) const {
        const std::size_t i = locate(x);
        if (i < breakpoints_.size() && x == breakpoints_[i]) return at_breaks_[i];
        return pieces_[i].value(x);
    }

    /// a.e. derivative d_f: piece derivative in the interior, 0 at any point
    /// where the one-sided derivatives or values disagree.
    double derivative(double x) const {
        const std::size_t i = locate(x);
        if (i < breakpoints_.size() && x == breakpoints_[i]) {
            const double lv = pieces_[i].value(x);
            const double rv = pieces_[i + 1].value(x);
            const double ld = pieces_[i].deriv(x);
            const double rd = pieces_[i + 1].deriv(x);
            const double scale = 1.0 + std::abs(lv) + std::abs(rv);
            const double dscale = 1.0 + std::abs(ld) + std::abs(rd);
            if (std::abs(lv - rv) <= 1e-12 * scale && std::abs(lv - at_breaks_[i]) <= 1e-12 * scale &&
                std::abs(ld - rd) <= 1e-12 * dscale)
                return ld;
            return 0.0;
        }
        return pieces_[i].deriv(x);
    }

    double left_limit(std::size_t i) const { return pieces_[i].value(breakpoints_[i]); }
    double right_limit(std::size_t i) const { return pieces_[i + 1].value(breakpoints_[i]); }
    double left_deriv_limit(std::size_t i) const { return pieces_[i].deriv(breakpoints_[i]); }
    double right_deriv_limit(std::size_t i) const { return pieces_[i + 1].deriv(breakpoints_[i]); }
    double value_at_breakpoint(std::size_t i) const { return at_breaks_[i]; }

    double jump(std::size_t i) const { return right_limit(i) - left_limit(i); }
    bool has_jump(std::size_t i, double tol = 1e-12) const {
        return std::abs(jump(i)) > tol * (1.0 + std::abs(left_limit(i)) + std::abs(right_limit(i)));
    }
    bool continuous(double tol = 1e-12) const {
        for (std::size_t i = 0; i < breakpoints_.size(); ++i)
            if (has_jump(i, tol)) return false;
        return true;
    }

    const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
    std::size_t piece_count() const noexcept { return pieces_.size(); }
    const Piece& piece(std::size_t i) const { return pieces_[i]; }

    /// Index of the piece whose closure contains x (ties resolve to the piece
    /// left of a breakpoint, callers handle exact hits separately).
    std::size_t locate(double x) const {
        return static_cast<std::size_t>(
            std::lower_bound(breakpoints_.begin(), breakpoints_.end(), x) -
            breakpoints_.begin());
    }

private:
    std::vector<double> breakpoints_;
    std::vector<Piece> pieces_;
    std::vector<double> at_breaks_;
};

/// d(x, theta) = min_i |x - theta_i| for a sorted non-empty set.
inline double dist_to_theta(std::span<const double> theta, double x) {
    if (theta.empty())
        throw std::invalid_argument("dist_to_theta: no discontinuities");
    auto it = std::lower_bound(theta.begin(), theta.end(), x);
    double d = std::numeric_limits<double>::infinity();
    if (it != theta.end()) d = *it - x;
    if (it != theta.begin()) d = std::min(d, x - *std::prev(it));
    return d;
}

} // namespace sdeadapt
