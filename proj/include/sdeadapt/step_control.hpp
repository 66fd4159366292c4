#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sdeadapt/piecewise.hpp"

namespace sdeadapt {

enum class ControllerMode { theory, clamped };

/// Three-zone step size around the breakpoint set:
///   h = delta                      away from theta (d >= eps1),
///   h = (d / log^2(1/delta))^2     in the annulus eps2 <= d < eps1,
///   h = delta^2 log^4(1/delta)     inside the core d < eps2,
/// with eps1 = sqrt(delta) log^2(1/delta), eps2 = delta log^4(1/delta) and
/// natural logarithms throughout. Theory mode requires eps2 <= eps1 <= eps0/2
/// and then h is continuous with delta^2 log^4(1/delta) <= h <= delta.
/// Clamped mode instead caps eps1 at eps0/2 and eps2 at eps1 so any delta is
/// runnable; outputs using it are labeled non-theorem-faithful.
class StepController {
public:
    StepController(double delta, double eps0, std::vector<double> theta,
                   ControllerMode mode)
        : delta_(delta), eps0_(eps0), theta_(std::move(theta)), mode_(mode) {
        if (!(delta > 0.0 && delta < 1.0))
            throw std::invalid_argument("StepController: delta must be in (0,1)");
        if (!(eps0 > 0.0 && eps0 <= 1.0))
            throw std::invalid_argument("StepController: eps0 must be in (0,1]");
        const double lg = std::log(1.0 / delta);
        log2_ = lg * lg;
        eps1_ = std::sqrt(delta) * log2_;
        eps2_ = delta * log2_ * log2_;
        if (mode == ControllerMode::theory) {
            if (!(eps2_ <= eps1_ && eps1_ <= 0.5 * eps0))
                throw std::invalid_argument(
                    "StepController: delta too large for theory mode "
                    "(needs eps2 <= eps1 <= eps0/2); use clamped mode or shrink delta");
        } else {
            eps1_ = std::min(eps1_, 0.5 * eps0);
            eps2_ = std::min(eps2_, eps1_);
        }
        // Core step capped at delta. Under the theory-mode admissibility
        // condition the cap is inactive (delta^2 log^4 <= delta there); it
        // keeps h <= delta, and with it E[N] >= 1/delta, at the coarse
        // resolutions clamped mode allows.
        fine_ = std::min(delta_ * delta_ * log2_ * log2_, delta_);
    }

    /// Step size and zone index at x (0 coarse, 1 annulus, 2 core), one
    /// distance computation for both.
    std::pair<double, int> step_and_branch(double x) const {
        if (theta_.empty()) return {delta_, 0};
        const double d = theta_.size() == 1 ? std::abs(x - theta_.front())
                                            : dist_to_theta(theta_, x);
        if (d >= eps1_) return {delta_, 0};
        if (d >= eps2_) {
            const double r = d / log2_;
            return {r * r, 1};
        }
        return {fine_, 2};
    }

    double operator()(double x) const { return step_and_branch(x).first; }

    /// Zone index at x: 0 coarse, 1 annulus, 2 core (for occupancy stats).
    int branch(double x) const { return step_and_branch(x).second; }

    double delta() const noexcept { return delta_; }
    double eps0() const noexcept { return eps0_; }
    double eps1() const noexcept { return eps1_; }
    double eps2() const noexcept { return eps2_; }
    double fine_step() const noexcept { return fine_; }
    double log_sq() const noexcept { return log2_; }
    ControllerMode mode() const noexcept { return mode_; }
    const std::vector<double>& theta() const noexcept { return theta_; }

    double min_step() const noexcept {
        double m = delta_;
        if (!theta_.empty()) {
            m = std::min(m, fine_);
            if (eps2_ < eps1_) m = std::min(m, (eps2_ / log2_) * (eps2_ / log2_));
        }
        return m;
    }

    /// Safety cap on the step count; exceeding it means a controller bug.
    std::uint64_t step_cap() const {
        return static_cast<std::uint64_t>(std::ceil(1.0 / min_step())) + 2;
    }

    /// Largest delta admissible in theory mode for a given eps0, i.e. the
    /// solution of sqrt(delta) log^2(1/delta) = eps0/2 (bisected on the
    /// monotone region delta < e^-4).
    static double max_admissible_delta(double eps0) {
        auto eps1_of = [](double d) {
            // same association as the constructor, so the boundary agrees
            const double lg = std::log(1.0 / d);
            const double l2 = lg * lg;
            return std::sqrt(d) * l2;
        };
        double lo = 1e-300, hi = std::exp(-4.0);
        if (eps1_of(hi) <= 0.5 * eps0) return hi;
        for (int i = 0; i < 2000; ++i) {
            const double mid = std::sqrt(lo * hi);
            (eps1_of(mid) <= 0.5 * eps0 ? lo : hi) = mid;
        }
        return lo;
    }

private:
    double delta_, eps0_, eps1_, eps2_, log2_, fine_;
    std::vector<double> theta_;
    ControllerMode mode_;
};

} // namespace sdeadapt
