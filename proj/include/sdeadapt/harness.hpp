#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sdeadapt/schemes.hpp"

namespace sdeadapt {

enum class Method {
    adaptive_transformed,
    adaptive_qm,
    equidistant_em,
    equidistant_qm,
    transformed_equidistant_qm,
};

inline const char* method_name(Method m) {
    switch (m) {
        case Method::adaptive_transformed: return "adaptive_transformed";
        case Method::adaptive_qm: return "adaptive_qm";
        case Method::equidistant_em: return "equidistant_em";
        case Method::equidistant_qm: return "equidistant_qm";
        case Method::transformed_equidistant_qm: return "transformed_equidistant_qm";
    }
    return "?";
}

inline std::optional<Method> method_from_name(const std::string& s) {
    for (Method m : {Method::adaptive_transformed, Method::adaptive_qm,
                     Method::equidistant_em, Method::equidistant_qm,
                     Method::transformed_equidistant_qm})
        if (s == method_name(m)) return m;
    return std::nullopt;
}

enum class ErrorKind { final_time, sup_on_grid };

/// One strong-error / cost experiment: a method swept over resolutions,
/// M coupled paths, errors measured against a much finer transformed-adaptive
/// reference that runs first on every path.
struct ExperimentSpec {
    SdeProblem problem;
    Method method = Method::adaptive_transformed;
    std::vector<double> resolutions;          // delta (equidistant: delta = 1/n)
    int paths = 0;                            // M >= 2
    double p_order = 2.0;                     // L_p error order
    ErrorKind error_kind = ErrorKind::final_time;
    int sup_grid_points = 64;
    double delta_ref_divisor = 64.0;
    std::optional<double> delta_ref;          // explicit override
    std::uint64_t master_seed = 0;
    ControllerMode mode = ControllerMode::clamped;
    std::optional<double> nu;                 // transform width override
    int threads = 0;                          // 0 = hardware concurrency
    std::vector<std::uint64_t> path_seed_override; // testing hook
};

struct FitResult {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

/// Ordinary least squares of ys on xs.
inline FitResult fit_rate(std::span<const double> xs, std::span<const double> ys) {
    const std::size_t n = xs.size();
    if (n < 3 || ys.size() != n)
        throw std::invalid_argument("fit_rate: need >= 3 paired points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw std::invalid_argument("fit_rate: non-finite input");
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_rate: degenerate xs");
    FitResult f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    const double ss_res = syy - f.slope * sxy;
    f.r2 = (syy == 0.0) ? 1.0 : 1.0 - ss_res / syy;
    return f;
}

struct RateRow {
    double resolution = 0.0;
    double mean_cost = 0.0, mean_cost_stderr = 0.0;
    double error_lp = 0.0, error_stderr = 0.0;
    double slope_partial = std::numeric_limits<double>::quiet_NaN();
    std::array<double, 3> branch_fracs{};
    std::uint64_t max_cost = 0;
};

struct RateTable {
    std::vector<RateRow> rows;
    std::optional<FitResult> fit_vs_resolution; // log error vs log delta
    std::optional<FitResult> fit_vs_cost;       // log error vs log mean cost
};

namespace detail {

inline void parallel_paths(int threads, std::size_t n,
                           const std::function<void(std::size_t)>& body) {
    unsigned nt = threads > 0 ? static_cast<unsigned>(threads)
                              : std::max(1u, std::thread::hardware_concurrency());
    nt = std::min<unsigned>(nt, n == 0 ? 1 : static_cast<unsigned>(n));
    std::exception_ptr err;
    std::mutex err_mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t j = next.fetch_add(1);
            if (j >= n) return;
            try {
                body(j);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nt);
        for (unsigned i = 0; i < nt; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (err) std::rethrow_exception(err);
}

inline std::uint64_t path_seed_index(const ExperimentSpec& spec, std::size_t j) {
    if (!spec.path_seed_override.empty()) return spec.path_seed_override[j];
    return static_cast<std::uint64_t>(j);
}

inline std::vector<double> error_grid(const ExperimentSpec& spec) {
    if (spec.error_kind == ErrorKind::final_time) return {1.0};
    std::vector<double> g;
    g.reserve(spec.sup_grid_points);
    for (int i = 1; i <= spec.sup_grid_points; ++i)
        g.push_back(static_cast<double>(i) / spec.sup_grid_points);
    return g;
}

template <class CoeffFn>
void equidistant_probe_run(double x0, std::uint64_t n, CoeffFn&& coeffs,
                           BrownianPath& path, std::span<const double> probes,
                           std::span<double> out, RunStats* st) {
    double x = x0;
    Coeffs c = coeffs(x);
    std::size_t pi = 0;
    while (pi < probes.size() && probes[pi] <= 0.0) out[pi++] = x0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const double tau = static_cast<double>(i) / static_cast<double>(n);
        const double tau_next = static_cast<double>(i + 1) / static_cast<double>(n);
        const double dW = path.increment(tau, tau_next);
        const double x_next = qm_step(x, c.mu, c.sigma, c.sig_dsig, tau_next - tau, dW);
        while (pi < probes.size() && probes[pi] <= tau_next) {
            const double t = probes[pi];
            if (t == tau_next) {
                out[pi] = x_next;
            } else {
                const double w = path.increment(tau, t);
                out[pi] = qm_step(x, c.mu, c.sigma, c.sig_dsig, t - tau, w);
            }
            ++pi;
        }
        x = x_next;
        c = coeffs(x);
    }
    if (st) {
        st->cost = n;
        st->branch_steps = {n, 0, 0};
        st->final_tau = 1.0;
        st->final_x = x;
    }
}

// Run one method at one resolution on an already-referenced path; values in
// X-space at the grid times, stats out.
inline void run_method_on_path(const SdeProblem& p, const TransformParams& tp,
                               Method method, double resolution, ControllerMode mode,
                               BrownianPath& path, std::span<const double> grid,
                               std::span<double> values, RunStats& st) {
    const bool identity = tp.identity();

    if (method == Method::adaptive_qm ||
        (method == Method::adaptive_transformed && identity)) {
        StepController ctrl(resolution, p.eps0, p.theta, mode);
        SchemeOptions opt;
        opt.warn_discontinuous_mu = method != Method::adaptive_qm; // ablation runs stay quiet
        Trajectory tr = run_adaptive_qm(p, ctrl, path, opt);
        for (std::size_t i = 0; i < grid.size(); ++i)
            values[i] = eval_trajectory(tr, path, grid[i]);
        st.cost = tr.cost;
        st.branch_steps = tr.branch_steps;
        return;
    }
    if (method == Method::adaptive_transformed) {
        StepController ctrl(resolution, p.eps0, p.theta, mode);
        TransformedCoeffField field(p, tp);
        Trajectory tr;
        const auto rs = run_adaptive_core(g_eval(tp, p.x0), ctrl, field, path, {}, {}, &tr);
        for (std::size_t i = 0; i < grid.size(); ++i)
            values[i] = g_inverse(tp, eval_trajectory(tr, path, grid[i]));
        st = rs;
        return;
    }

    // equidistant family
    const auto n = static_cast<std::uint64_t>(std::llround(1.0 / resolution));
    if (n < 1) throw std::invalid_argument("equidistant method: resolution > 1");
    std::vector<double> raw(grid.size());
    if (method == Method::transformed_equidistant_qm && !identity) {
        TransformedCoeffField field(p, tp);
        equidistant_probe_run(g_eval(tp, p.x0), n, field, path, grid, raw, &st);
        for (std::size_t i = 0; i < grid.size(); ++i)
            values[i] = g_inverse(tp, raw[i]);
    } else {
        const bool em = method == Method::equidistant_em;
        auto coeffs = [&](double x) {
            const double s = p.sigma(x);
            return Coeffs{p.mu(x), s, em ? 0.0 : s * p.sigma.derivative(x)};
        };
        equidistant_probe_run(p.x0, n, coeffs, path, grid, raw, &st);
        std::copy(raw.begin(), raw.end(), values.begin());
    }
}

} // namespace detail

/// Coupled reference: the transformed adaptive scheme at delta_ref, run on
/// the path before anything else so its queries pin the canonical schedule;
/// returns X-space values at the requested (sorted) grid times through the
/// continuous extension.
inline std::vector<double> reference_solution(const SdeProblem& p, BrownianPath& path,
                                              double delta_ref,
                                              std::span<const double> grid,
                                              ControllerMode mode = ControllerMode::clamped,
                                              std::optional<double> nu = std::nullopt) {
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("reference_solution: grid must be sorted");
    const TransformParams tp = make_transform(p, nu);
    StepController ctrl(delta_ref, p.eps0, p.theta, mode);
    std::vector<double> vals(grid.size());
    if (tp.identity()) {
        run_adaptive_core(p.x0, ctrl, problem_coeffs(p), path, grid, vals, nullptr);
    } else {
        TransformedCoeffField field(p, tp);
        run_adaptive_core(g_eval(tp, p.x0), ctrl, field, path, grid, vals, nullptr);
        for (double& v : vals) v = g_inverse(tp, v);
    }
    return vals;
}

struct MultiRateResult {
    std::vector<Method> methods;
    std::vector<RateTable> tables; // parallel to methods
};

namespace detail {

inline double resolved_delta_ref(const ExperimentSpec& spec) {
    const double dmin = *std::min_element(spec.resolutions.begin(), spec.resolutions.end());
    const double dref = spec.delta_ref ? *spec.delta_ref : dmin / spec.delta_ref_divisor;
    if (!(dref <= dmin / 32.0))
        throw std::invalid_argument("delta_ref must be <= min(resolutions)/32");
    return dref;
}

inline RateTable aggregate(const ExperimentSpec& spec, double /*dref*/,
                           const std::vector<double>& resolutions,
                           const std::vector<std::vector<double>>& errs,
                           const std::vector<std::vector<std::uint64_t>>& costs,
                           const std::vector<std::array<std::uint64_t, 3>>& branches) {
    const double M = spec.paths;
    RateTable table;
    table.rows.resize(resolutions.size());
    for (std::size_t r = 0; r < resolutions.size(); ++r) {
        RateRow& row = table.rows[r];
        row.resolution = resolutions[r];
        double cmean = 0.0;
        for (auto c : costs[r]) cmean += static_cast<double>(c);
        cmean /= M;
        double cvar = 0.0;
        for (auto c : costs[r]) cvar += (c - cmean) * (c - cmean);
        cvar /= (M - 1.0);
        row.mean_cost = cmean;
        row.mean_cost_stderr = std::sqrt(cvar / M);
        row.max_cost = *std::max_element(costs[r].begin(), costs[r].end());

        const double pord = spec.p_order;
        double mean_ep = 0.0;
        for (double e : errs[r]) mean_ep += std::pow(e, pord);
        mean_ep /= M;
        double var_ep = 0.0;
        for (double e : errs[r]) var_ep += (std::pow(e, pord) - mean_ep) * (std::pow(e, pord) - mean_ep);
        var_ep /= (M - 1.0);
        row.error_lp = std::pow(mean_ep, 1.0 / pord);
        row.error_stderr =
            (mean_ep > 0.0)
                ? std::sqrt(var_ep / M) * std::pow(mean_ep, 1.0 / pord - 1.0) / pord
                : 0.0;

        std::uint64_t btot = 0;
        for (auto b : branches[r]) btot += b;
        for (int b = 0; b < 3; ++b)
            row.branch_fracs[b] = btot ? static_cast<double>(branches[r][b]) / btot : 0.0;

        if (r > 0 && row.error_lp > 0.0 && table.rows[r - 1].error_lp > 0.0)
            row.slope_partial = (std::log(row.error_lp) - std::log(table.rows[r - 1].error_lp)) /
                                (std::log(row.resolution) - std::log(table.rows[r - 1].resolution));
    }

    bool fit_ok = table.rows.size() >= 3;
    for (const auto& row : table.rows) fit_ok = fit_ok && row.error_lp > 0.0;
    if (fit_ok) {
        std::vector<double> lx, ly, lc;
        for (const auto& row : table.rows) {
            lx.push_back(std::log(row.resolution));
            ly.push_back(std::log(row.error_lp));
            lc.push_back(std::log(row.mean_cost));
        }
        table.fit_vs_resolution = fit_rate(lx, ly);
        table.fit_vs_cost = fit_rate(lc, ly);
    }
    return table;
}

} // namespace detail

/// Shared-reference estimator for several methods on one resolution grid.
/// Per path: the reference runs first (canonical schedule), then every
/// (method, resolution) pair refines the same path in fixed order. Results
/// are reduced in path order, so they are independent of thread count.
inline MultiRateResult estimate_error_multi(const ExperimentSpec& spec,
                                            const std::vector<Method>& methods) {
    if (spec.paths < 2) throw std::invalid_argument("estimate_error: paths M >= 2 required");
    if (spec.resolutions.empty())
        throw std::invalid_argument("estimate_error: empty resolution grid");
    if (!spec.path_seed_override.empty() &&
        spec.path_seed_override.size() != static_cast<std::size_t>(spec.paths))
        throw std::invalid_argument("estimate_error: seed override size != paths");
    const double dref = detail::resolved_delta_ref(spec);
    const std::vector<double> grid = detail::error_grid(spec);
    const SdeProblem& p = spec.problem;
    const TransformParams tp = make_transform(p, spec.nu);

    const std::size_t nm = methods.size(), nr = spec.resolutions.size();
    const auto M = static_cast<std::size_t>(spec.paths);
    std::vector<std::vector<std::vector<double>>> errs(
        nm, std::vector<std::vector<double>>(nr, std::vector<double>(M)));
    std::vector<std::vector<std::vector<std::uint64_t>>> costs(
        nm, std::vector<std::vector<std::uint64_t>>(nr, std::vector<std::uint64_t>(M)));
    std::vector<std::vector<std::vector<std::array<std::uint64_t, 3>>>> branch(
        nm, std::vector<std::vector<std::array<std::uint64_t, 3>>>(
                nr, std::vector<std::array<std::uint64_t, 3>>(M)));

    // Spine capacity for the reference run: E[N] * delta_ref stays bounded
    // (that is the point of the method), observed around 2-4 for kink-heavy
    // problems, so 4.5x covers most paths without regrowth.
    const auto hint = static_cast<std::size_t>(std::min(4.5 / dref, 6.0e7));

    detail::parallel_paths(spec.threads, M, [&](std::size_t j) {
        const std::uint64_t pidx = detail::path_seed_index(spec, j);
        try {
            // One large sample buffer per worker, recycled across paths.
            thread_local std::unique_ptr<BrownianPath> tl_path;
            if (!tl_path) tl_path = std::make_unique<BrownianPath>(spec.master_seed, pidx, hint);
            else tl_path->reset(spec.master_seed, pidx);
            BrownianPath& path = *tl_path;
            const std::vector<double> ref =
                reference_solution(p, path, dref, grid, spec.mode, spec.nu);
            std::vector<double> vals(grid.size());
            for (std::size_t m = 0; m < nm; ++m) {
                for (std::size_t r = 0; r < nr; ++r) {
                    RunStats st;
                    detail::run_method_on_path(p, tp, methods[m], spec.resolutions[r],
                                               spec.mode, path, grid, vals, st);
                    double err = 0.0;
                    for (std::size_t i = 0; i < grid.size(); ++i)
                        err = std::max(err, std::abs(vals[i] - ref[i]));
                    errs[m][r][j] = err;
                    costs[m][r][j] = st.cost;
                    branch[m][r][j] = st.branch_steps;
                }
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("path " + std::to_string(j) + " (seed " +
                                     std::to_string(spec.master_seed) + "/" +
                                     std::to_string(pidx) + "): " + e.what());
        }
    });

    MultiRateResult out;
    out.methods = methods;
    for (std::size_t m = 0; m < nm; ++m) {
        std::vector<std::array<std::uint64_t, 3>> bsum(nr, std::array<std::uint64_t, 3>{});
        for (std::size_t r = 0; r < nr; ++r)
            for (std::size_t j = 0; j < M; ++j)
                for (int b = 0; b < 3; ++b) bsum[r][b] += branch[m][r][j][b];
        out.tables.push_back(
            detail::aggregate(spec, dref, spec.resolutions, errs[m], costs[m], bsum));
    }
    return out;
}

inline RateTable estimate_error(const ExperimentSpec& spec) {
    return estimate_error_multi(spec, {spec.method}).tables.front();
}

struct CostRow {
    double resolution = 0.0;
    double mean_cost = 0.0, mean_cost_stderr = 0.0;
    double cost_times_delta = 0.0;
    std::uint64_t max_cost = 0;
    std::array<double, 3> branch_fracs{};
};

/// Expected-cost profile of a method over the resolution grid: E[N], the
/// boundedness diagnostic E[N]*delta, the worst path, and how the steps
/// split across the three h-zones. No reference solution is involved.
inline std::vector<CostRow> cost_profile(const ExperimentSpec& spec) {
    if (spec.paths < 2) throw std::invalid_argument("cost_profile: paths M >= 2 required");
    if (spec.resolutions.empty())
        throw std::invalid_argument("cost_profile: empty resolution grid");
    const SdeProblem& p = spec.problem;
    const TransformParams tp = make_transform(p, spec.nu);
    const std::size_t nr = spec.resolutions.size();
    const auto M = static_cast<std::size_t>(spec.paths);
    const std::vector<double> grid = {1.0};

    std::vector<std::vector<std::uint64_t>> costs(nr, std::vector<std::uint64_t>(M));
    std::vector<std::vector<std::array<std::uint64_t, 3>>> branch(
        nr, std::vector<std::array<std::uint64_t, 3>>(M));

    detail::parallel_paths(spec.threads, M, [&](std::size_t j) {
        const std::uint64_t pidx = detail::path_seed_index(spec, j);
        try {
            BrownianPath path(spec.master_seed, pidx);
            std::vector<double> vals(1);
            for (std::size_t r = 0; r < nr; ++r) {
                RunStats st;
                detail::run_method_on_path(p, tp, spec.method, spec.resolutions[r],
                                           spec.mode, path, grid, vals, st);
                costs[r][j] = st.cost;
                branch[r][j] = st.branch_steps;
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("path " + std::to_string(j) + " (seed " +
                                     std::to_string(spec.master_seed) + "/" +
                                     std::to_string(pidx) + "): " + e.what());
        }
    });

    std::vector<CostRow> rows(nr);
    for (std::size_t r = 0; r < nr; ++r) {
        CostRow& row = rows[r];
        row.resolution = spec.resolutions[r];
        double mean = 0.0;
        for (auto c : costs[r]) mean += static_cast<double>(c);
        mean /= M;
        double var = 0.0;
        for (auto c : costs[r]) var += (c - mean) * (c - mean);
        var /= (M - 1.0);
        row.mean_cost = mean;
        row.mean_cost_stderr = std::sqrt(var / M);
        row.cost_times_delta = mean * row.resolution;
        row.max_cost = *std::max_element(costs[r].begin(), costs[r].end());
        std::array<std::uint64_t, 3> bsum{};
        for (std::size_t j = 0; j < M; ++j)
            for (int b = 0; b < 3; ++b) bsum[b] += branch[r][j][b];
        std::uint64_t btot = bsum[0] + bsum[1] + bsum[2];
        for (int b = 0; b < 3; ++b)
            row.branch_fracs[b] = btot ? static_cast<double>(bsum[b]) / btot : 0.0;
    }
    return rows;
}

inline void write_rate_csv(std::ostream& os, const RateTable& table) {
    os << "resolution,mean_cost,mean_cost_stderr,error_lp,error_stderr,slope_partial\n";
    char buf[256];
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                      r.resolution, r.mean_cost, r.mean_cost_stderr, r.error_lp,
                      r.error_stderr, r.slope_partial);
        os << buf;
    }
}

inline void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows) {
    os << "delta,mean_cost,mean_cost_stderr,cost_times_delta,max_cost,"
          "frac_coarse,frac_annulus,frac_core\n";
    char buf[320];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%llu,%.12g,%.12g,%.12g\n",
                      r.resolution, r.mean_cost, r.mean_cost_stderr, r.cost_times_delta,
                      static_cast<unsigned long long>(r.max_cost), r.branch_fracs[0],
                      r.branch_fracs[1], r.branch_fracs[2]);
        os << buf;
    }
}

} // namespace sdeadapt
