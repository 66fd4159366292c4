// Command-line front end: validate a problem config, inspect the transform,
// simulate one trajectory, or run convergence / cost experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "sdeadapt/config.hpp"
#include "sdeadapt/harness.hpp"

namespace fs = std::filesystem;
using namespace sdeadapt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssumption = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> mode;
    std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "problem/experiment config (JSON)")
        ->required();
    cmd->add_option("--seed", args.seed, "override the master seed");
    cmd->add_option("--threads", args.threads, "worker threads (default: logical cores)");
    cmd->add_option("--mode", args.mode, "step controller mode: theory|clamped")
        ->check(CLI::IsMember({"theory", "clamped"}));
    cmd->add_option("--out", args.out_dir, "output directory");
}

LoadedConfig load_and_override(const CommonArgs& args) {
    LoadedConfig cfg = load_config(args.config_path);
    if (args.seed) cfg.experiment.master_seed = *args.seed;
    if (args.threads) cfg.experiment.threads = *args.threads;
    if (args.mode)
        cfg.experiment.mode =
            *args.mode == "theory" ? ControllerMode::theory : ControllerMode::clamped;
    if (args.out_dir) cfg.output.directory = *args.out_dir;
    return cfg;
}

void require_valid(const SdeProblem& p) {
    auto rep = validate_problem(p);
    if (!rep.hard_pass()) {
        rep.print(std::cerr);
        throw std::invalid_argument("problem fails hard assumption checks");
    }
}

const char* mode_label(ControllerMode m) {
    return m == ControllerMode::theory ? "theory"
                                       : "clamped (not theorem-faithful)";
}

int cmd_validate(const CommonArgs& args) {
    auto cfg = load_and_override(args);
    auto rep = validate_problem(cfg.problem);
    rep.print(std::cout);
    if (!rep.hard_pass()) {
        std::cout << "validation: FAILED (hard check)\n";
        return kExitAssumption;
    }
    std::cout << (rep.all_pass() ? "validation: OK\n" : "validation: OK (with warnings)\n");
    return kExitOk;
}

int cmd_transform(const CommonArgs& args, int grid_n) {
    auto cfg = load_and_override(args);
    require_valid(cfg.problem);
    const SdeProblem& p = cfg.problem;
    auto tp = make_transform(p, cfg.nu);

    std::printf("alpha = [");
    for (std::size_t i = 0; i < tp.alpha.size(); ++i)
        std::printf("%s%.12g", i ? ", " : "", tp.alpha[i]);
    std::printf("]\nrho = %.12g\n", tp.rho);
    if (tp.identity()) {
        std::printf("identity transform (drift continuous at every breakpoint)\n");
        return kExitOk;
    }
    std::printf("nu = %.12g%s\n", tp.nu, cfg.nu ? "" : " (= rho/2 default)");

    const double lo = p.theta.front() - 2.0, hi = p.theta.back() + 2.0;
    double min_gp = std::numeric_limits<double>::infinity();
    double max_resid = 0.0;
    std::mt19937_64 rng(cfg.experiment.master_seed + 1);
    std::uniform_real_distribution<double> u(lo, hi);
    for (int i = 0; i < grid_n; ++i) {
        const double x = lo + (hi - lo) * i / (grid_n - 1);
        min_gp = std::min(min_gp, g_prime(tp, x));
        const double xr = u(rng);
        max_resid = std::max(max_resid, std::abs(g_inverse(tp, g_eval(tp, xr)) - xr));
    }
    std::printf("min sampled G' = %.12g over %d points\n", min_gp, grid_n);
    std::printf("max inverse round-trip residual = %.3g\n", max_resid);

    auto q = transformed_problem(p, tp);
    for (std::size_t i = 0; i < p.theta.size(); ++i) {
        const double xi = p.theta[i];
        const double resid = std::abs(q.mu(xi - 1e-7) - q.mu(xi + 1e-7));
        std::printf("mu~ continuity residual at %.12g: %.3g (mu~ = %.12g)\n", xi, resid,
                    q.mu(xi));
    }
    return kExitOk;
}

int cmd_simulate(const CommonArgs& args, double delta) {
    auto cfg = load_and_override(args);
    require_valid(cfg.problem);
    const SdeProblem& p = cfg.problem;
    const ExperimentSpec& ex = cfg.experiment;

    fs::create_directories(cfg.output.directory);
    const fs::path out_path = fs::path(cfg.output.directory) / "trajectory.csv";
    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("cannot open " + out_path.string());

    BrownianPath path(ex.master_seed, 0);
    std::uint64_t cost = 0;
    os << "tau,x\n";
    char buf[96];
    auto row = [&](double tau, double x) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", tau, x);
        os << buf;
    };

    if (ex.method == Method::equidistant_em || ex.method == Method::equidistant_qm) {
        const auto n = static_cast<std::uint64_t>(std::llround(1.0 / delta));
        auto tr = run_equidistant(p, n, path,
                                  ex.method == Method::equidistant_em
                                      ? EquidistantKind::euler_maruyama
                                      : EquidistantKind::quasi_milstein);
        for (const auto& node : tr.nodes) row(node.tau, node.x);
        cost = tr.cost;
    } else if (ex.method == Method::adaptive_qm) {
        StepController ctrl(delta, p.eps0, p.theta, ex.mode);
        auto tr = run_adaptive_qm(p, ctrl, path);
        for (const auto& node : tr.nodes) row(node.tau, node.x);
        cost = tr.cost;
    } else {
        auto run = run_transformed_adaptive(p, delta, ex.mode, path, cfg.nu);
        for (const auto& node : run.z_trajectory.nodes)
            row(node.tau, g_inverse(run.params, node.x));
        cost = run.z_trajectory.cost;
    }
    os.close();
    nlohmann::json meta;
    meta["method"] = method_name(ex.method);
    meta["mode"] = ex.mode == ControllerMode::theory ? "theory" : "clamped";
    meta["delta"] = delta;
    meta["master_seed"] = ex.master_seed;
    meta["N"] = cost;
    std::ofstream ms(fs::path(cfg.output.directory) / "trajectory_meta.json");
    ms << meta.dump(2) << '\n';
    std::printf("method = %s, mode = %s, delta = %.12g\n", method_name(ex.method),
                mode_label(ex.mode), delta);
    std::printf("N = %llu evaluations, skeleton written to %s\n",
                static_cast<unsigned long long>(cost), out_path.string().c_str());
    return kExitOk;
}

int cmd_convergence(const CommonArgs& args) {
    auto cfg = load_and_override(args);
    require_valid(cfg.problem);
    ExperimentSpec spec = cfg.experiment;
    spec.problem = cfg.problem;

    std::printf("method = %s, mode = %s, M = %d paths\n", method_name(spec.method),
                mode_label(spec.mode), spec.paths);
    auto table = estimate_error(spec);

    fs::create_directories(cfg.output.directory);
    if (cfg.output.csv) {
        std::ofstream os(fs::path(cfg.output.directory) / "convergence.csv");
        write_rate_csv(os, table);
    }
    if (cfg.output.json) {
        std::ofstream os(fs::path(cfg.output.directory) / "convergence_summary.json");
        os << rate_summary_json(spec, table).dump(2) << '\n';
    }

    for (const auto& r : table.rows)
        std::printf("  delta %.6g: error %.6g (se %.2g), E[N] %.6g\n", r.resolution,
                    r.error_lp, r.error_stderr, r.mean_cost);
    if (table.fit_vs_resolution)
        std::printf("slope vs delta: %.4f (r2 %.4f)\n", table.fit_vs_resolution->slope,
                    table.fit_vs_resolution->r2);
    if (table.fit_vs_cost)
        std::printf("slope vs mean cost: %.4f (r2 %.4f)\n", table.fit_vs_cost->slope,
                    table.fit_vs_cost->r2);
    if (!table.fit_vs_resolution)
        std::printf("slopes not fitted (fewer than 3 rows or exact-zero errors)\n");
    return kExitOk;
}

int cmd_cost(const CommonArgs& args) {
    auto cfg = load_and_override(args);
    require_valid(cfg.problem);
    ExperimentSpec spec = cfg.experiment;
    spec.problem = cfg.problem;

    std::printf("method = %s, mode = %s, M = %d paths\n", method_name(spec.method),
                mode_label(spec.mode), spec.paths);
    auto rows = cost_profile(spec);

    fs::create_directories(cfg.output.directory);
    if (cfg.output.csv) {
        std::ofstream os(fs::path(cfg.output.directory) / "cost.csv");
        write_cost_csv(os, rows);
    }
    if (cfg.output.json) {
        nlohmann::json j;
        j["spec"] = config_to_json(cfg)["experiment"];
        if (spec.mode == ControllerMode::clamped)
            j["spec"]["mode_note"] = "clamped step controller is not theorem-faithful";
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows)
            j["rows"].push_back({{"delta", r.resolution},
                                 {"mean_cost", r.mean_cost},
                                 {"mean_cost_stderr", r.mean_cost_stderr},
                                 {"cost_times_delta", r.cost_times_delta},
                                 {"max_cost", r.max_cost},
                                 {"branch_fracs", r.branch_fracs}});
        std::ofstream os(fs::path(cfg.output.directory) / "cost_summary.json");
        os << j.dump(2) << '\n';
    }

    for (const auto& r : rows)
        std::printf("  delta %.6g: E[N] %.6g, E[N]*delta %.4g, max %llu, zones %.3f/%.3f/%.3f\n",
                    r.resolution, r.mean_cost, r.cost_times_delta,
                    static_cast<unsigned long long>(r.max_cost), r.branch_fracs[0],
                    r.branch_fracs[1], r.branch_fracs[2]);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"strong-approximation toolkit for scalar SDEs with discontinuous drift"};
    app.require_subcommand(1);

    CommonArgs args;
    int transform_grid = 100000;
    double sim_delta = 1.0 / 1024;

    auto* validate = app.add_subcommand("validate", "check the standing assumptions");
    add_common(validate, args);
    auto* transform = app.add_subcommand("transform", "inspect the drift-jump transform");
    add_common(transform, args);
    transform->add_option("--grid", transform_grid, "sample points for G' / round-trip scan");
    auto* simulate = app.add_subcommand("simulate", "write one trajectory skeleton as CSV");
    add_common(simulate, args);
    simulate->add_option("--delta", sim_delta, "step size parameter");
    auto* convergence =
        app.add_subcommand("convergence", "strong error vs resolution and cost");
    add_common(convergence, args);
    auto* cost = app.add_subcommand("cost", "expected cost profile over the grid");
    add_common(cost, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : kExitOk;
    }

    try {
        if (validate->parsed()) return cmd_validate(args);
        if (transform->parsed()) return cmd_transform(args, transform_grid);
        if (simulate->parsed()) return cmd_simulate(args, sim_delta);
        if (convergence->parsed()) return cmd_convergence(args);
        if (cost->parsed()) return cmd_cost(args);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitAssumption;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
