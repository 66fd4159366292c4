#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <iostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/problem.hpp"
#include "sdeadapt/step_control.hpp"
#include "sdeadapt/transform.hpp"

namespace sdeadapt {

/// One quasi-Milstein update:
///   x + mu dt + sigma dW + (1/2) sigma d_sigma (dW^2 - dt).
inline double qm_step(double x, double mu, double sigma, double sig_dsig,
                      double dt, double dW) {
    return x + mu * dt + sigma * dW + 0.5 * sig_dsig * (dW * dW - dt);
}

struct Coeffs {
    double mu, sigma, sig_dsig;
};

struct TrajectoryNode {
    double tau, x;
    Coeffs c; // cached at x; drives the continuous extension on (tau_i, tau_{i+1}]
};

struct Trajectory {
    std::vector<TrajectoryNode> nodes;
    std::uint64_t cost = 0;                    // N = min{ i : tau_i >= 1 }
    std::array<std::uint64_t, 3> branch_steps{}; // steps taken per h-zone

    double x0() const { return nodes.front().x; }
    double final_tau() const { return nodes.back().tau; }
    double final_x() const { return nodes.back().x; }
};

struct RunStats {
    std::uint64_t cost = 0;
    std::array<std::uint64_t, 3> branch_steps{};
    double final_tau = 0.0;
    double final_x = 0.0;
};

/// Shared stepping engine. Walks the adaptive grid until the first node at or
/// past t = 1, querying the path sequentially; optional probe times (sorted,
/// in [0, final tau]) are evaluated inline through the continuous extension
/// right after the node that covers them, which fixes the canonical query
/// order of coupled experiments. Coefficients come from `coeffs`, a callable
/// double -> Coeffs, evaluated once per node.
template <class CoeffFn>
RunStats run_adaptive_core(double x0, const StepController& ctrl, CoeffFn&& coeffs,
                           BrownianPath& path, std::span<const double> probe_times,
                           std::span<double> probe_values, Trajectory* record) {
    const std::uint64_t cap = ctrl.step_cap();
    RunStats st;
    double tau = 0.0;
    double x = x0;
    Coeffs c = coeffs(x);
    if (record) record->nodes.push_back({tau, x, c});

    std::size_t pi = 0;
    while (pi < probe_times.size() && probe_times[pi] <= 0.0) {
        probe_values[pi] = x0;
        ++pi;
    }

    while (true) {
        const auto [h, b] = ctrl.step_and_branch(x);
        const double tau_next = tau + h;
        const double dW = path.increment(tau, tau_next);
        const double x_next = qm_step(x, c.mu, c.sigma, c.sig_dsig, h, dW);
        ++st.cost;
        ++st.branch_steps[static_cast<std::size_t>(b)];
        if (st.cost > cap)
            throw std::logic_error("run_adaptive_core: step cap exceeded (controller bug)");

        while (pi < probe_times.size() && probe_times[pi] <= tau_next) {
            const double t = probe_times[pi];
            if (t == tau_next) {
                probe_values[pi] = x_next;
            } else {
                const double w = path.increment(tau, t);
                probe_values[pi] = qm_step(x, c.mu, c.sigma, c.sig_dsig, t - tau, w);
            }
            ++pi;
        }

        tau = tau_next;
        x = x_next;
        if (tau >= 1.0) {
            if (record) {
                c = coeffs(x);
                record->nodes.push_back({tau, x, c});
            }
            break;
        }
        c = coeffs(x);
        if (record) record->nodes.push_back({tau, x, c});
    }
    st.final_tau = tau;
    st.final_x = x;
    return st;
}

inline auto problem_coeffs(const SdeProblem& p) {
    return [&p](double x) {
        const double s = p.sigma(x);
        return Coeffs{p.mu(x), s, s * p.sigma.derivative(x)};
    };
}

struct SchemeOptions {
    bool warn_discontinuous_mu = true;
};

/// Adaptive quasi-Milstein scheme on the problem as given. The error theory
/// behind the controller assumes a continuous drift; running with a
/// discontinuous one is permitted for ablations and only warns.
inline Trajectory run_adaptive_qm(const SdeProblem& p, const StepController& ctrl,
                                  BrownianPath& path, SchemeOptions opt = {}) {
    if (opt.warn_discontinuous_mu && !p.mu.continuous()) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true))
            std::cerr << "[sdeadapt] warning: adaptive quasi-Milstein run with "
                         "discontinuous drift; rate guarantees need the transform\n";
    }
    Trajectory tr;
    const auto st = run_adaptive_core(p.x0, ctrl, problem_coeffs(p), path, {}, {}, &tr);
    tr.cost = st.cost;
    tr.branch_steps = st.branch_steps;
    return tr;
}

/// Continuous extension of a recorded trajectory: exact at nodes, one
/// quasi-Milstein substep from the covering node otherwise (bridge-sampled).
inline double eval_trajectory(const Trajectory& tr, BrownianPath& path, double t) {
    if (!(t >= 0.0) || t > tr.final_tau())
        throw std::invalid_argument("eval_trajectory: t outside [0, final tau]");
    const auto& ns = tr.nodes;
    auto it = std::lower_bound(ns.begin(), ns.end(), t,
                               [](const TrajectoryNode& n, double v) { return n.tau < v; });
    if (it != ns.end() && it->tau == t) return it->x;
    const auto& n = *std::prev(it);
    const double w = path.increment(n.tau, t);
    return qm_step(n.x, n.c.mu, n.c.sigma, n.c.sig_dsig, t - n.tau, w);
}

enum class EquidistantKind { euler_maruyama, quasi_milstein };

/// Equidistant baseline on the exact grid tau_i = i/n (no accumulation
/// drift, tau_n = 1 exactly). Euler-Maruyama drops the Milstein correction.
inline Trajectory run_equidistant(const SdeProblem& p, std::uint64_t n,
                                  BrownianPath& path, EquidistantKind kind) {
    if (n < 1) throw std::invalid_argument("run_equidistant: n >= 1 required");
    Trajectory tr;
    tr.nodes.reserve(n + 1);
    const bool em = kind == EquidistantKind::euler_maruyama;
    auto coeffs = [&](double x) {
        const double s = p.sigma(x);
        return Coeffs{p.mu(x), s, em ? 0.0 : s * p.sigma.derivative(x)};
    };
    double x = p.x0;
    Coeffs c = coeffs(x);
    tr.nodes.push_back({0.0, x, c});
    for (std::uint64_t i = 0; i < n; ++i) {
        const double tau = static_cast<double>(i) / static_cast<double>(n);
        const double tau_next = static_cast<double>(i + 1) / static_cast<double>(n);
        const double dW = path.increment(tau, tau_next);
        x = qm_step(x, c.mu, c.sigma, c.sig_dsig, tau_next - tau, dW);
        c = coeffs(x);
        tr.nodes.push_back({tau_next, x, c});
    }
    tr.cost = n;
    tr.branch_steps = {n, 0, 0};
    return tr;
}

/// Coefficient field of the transformed SDE, fused for the stepping hot
/// path: one warm-started inverse per node, then
///   mu~ = G' mu + (1/2) G'' sigma^2,  sigma~ = G' sigma,
///   sigma~ d_sigma~ = sigma~ (G'' sigma + G' sigma') / G'.
class TransformedCoeffField {
public:
    TransformedCoeffField(const SdeProblem& p, const TransformParams& tp)
        : p_(&p), tp_(&tp), last_x_(p.x0) {}

    Coeffs operator()(double y) {
        const double x = g_inverse_seeded(*tp_, y, last_x_);
        last_x_ = x;
        const auto zt = std::lower_bound(tp_->z.begin(), tp_->z.end(), x);
        if (zt != tp_->z.end() && *zt == x) return at_kink(x);
        const double g1 = g_prime(*tp_, x);
        const double g2 = g_second(*tp_, x);
        const double mu = p_->mu(x);
        const double sig = p_->sigma(x);
        const double dsig = p_->sigma.derivative(x);
        const double sig_t = g1 * sig;
        return Coeffs{g1 * mu + 0.5 * g2 * sig * sig, sig_t,
                      sig_t * (g2 * sig + g1 * dsig) / g1};
    }

private:
    // Exact breakpoint hit (measure zero): pointwise drift uses the extended
    // G''; the diffusion derivative follows the a.e. convention, 0 unless the
    // one-sided limits agree.
    Coeffs at_kink(double x) {
        const auto cm = detail::transformed_coeffs_at(*p_, *tp_, x, 0);
        const auto cl = detail::transformed_coeffs_at(*p_, *tp_, x, -1);
        const auto cr = detail::transformed_coeffs_at(*p_, *tp_, x, +1);
        const double dscale = 1.0 + std::abs(cl.dsigma) + std::abs(cr.dsigma);
        const double ds =
            (std::abs(cl.dsigma - cr.dsigma) <= 1e-12 * dscale) ? cl.dsigma : 0.0;
        return Coeffs{cm.mu, cm.sigma, cm.sigma * ds};
    }

    const SdeProblem* p_;
    const TransformParams* tp_;
    double last_x_;
};

struct TransformedRun {
    Trajectory z_trajectory; // the scheme in Z-space; cost N is shared with X
    TransformParams params;
    double x_final = 0.0;    // G^{-1} of the continuous extension at t = 1

    double x_at(BrownianPath& path, double t) const {
        return g_inverse(params, eval_trajectory(z_trajectory, path, t));
    }
};

/// The order-1 method: transform the problem so the drift jump cancels, run
/// the adaptive quasi-Milstein scheme on the transformed SDE from G(x0) with
/// the controller built on the same theta, and map back through G^{-1}.
/// Continuous drift degenerates to the identity transform and the plain
/// adaptive scheme.
inline TransformedRun run_transformed_adaptive(const SdeProblem& p, double delta,
                                               ControllerMode mode, BrownianPath& path,
                                               std::optional<double> nu = std::nullopt) {
    TransformedRun run;
    run.params = make_transform(p, nu);
    StepController ctrl(delta, p.eps0, p.theta, mode);
    if (run.params.identity()) {
        run.z_trajectory = run_adaptive_qm(p, ctrl, path);
    } else {
        TransformedCoeffField field(p, run.params);
        const double z0 = g_eval(run.params, p.x0);
        const auto st = run_adaptive_core(z0, ctrl, field, path, {}, {}, &run.z_trajectory);
        run.z_trajectory.cost = st.cost;
        run.z_trajectory.branch_steps = st.branch_steps;
    }
    run.x_final = run.x_at(path, 1.0);
    return run;
}

} // namespace sdeadapt
