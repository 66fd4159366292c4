#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdeadapt/expression.hpp"
#include "sdeadapt/harness.hpp"

namespace sdeadapt {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raw textual form of a piecewise coefficient, kept for re-serialization.
struct PiecewiseConfig {
    std::vector<double> breakpoints;
    std::vector<std::string> values;  // expression per piece
    std::vector<std::string> derivs;  // explicit derivative per piece
    std::vector<double> at_breakpoints; // optional; empty = right limits
};

struct ProblemConfig {
    double x0 = 0.0;
    double eps0 = 1.0;
    PiecewiseConfig mu, sigma;
};

struct OutputConfig {
    std::string directory = "out";
    bool csv = true;
    bool json = true;
};

struct LoadedConfig {
    ProblemConfig problem_cfg;
    SdeProblem problem;
    std::optional<double> nu; // nullopt = "auto" (rho/2)
    ExperimentSpec experiment;
    OutputConfig output;
};

namespace detail {

template <class T>
T require(const nlohmann::json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key))
        throw ConfigError("config: missing field '" + where + "." + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: bad value for '" + where + "." + key + "': " + e.what());
    }
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback,
         const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: bad value for '" + where + "." + key + "': " + e.what());
    }
}

inline PiecewiseConfig parse_piecewise_cfg(const nlohmann::json& j, const std::string& where) {
    PiecewiseConfig cfg;
    cfg.breakpoints = get_or<std::vector<double>>(j, "breakpoints", {}, where);
    if (!j.contains("pieces")) throw ConfigError("config: missing field '" + where + ".pieces'");
    for (const auto& pj : j.at("pieces")) {
        cfg.values.push_back(require<std::string>(pj, "value", where + ".pieces[]"));
        cfg.derivs.push_back(require<std::string>(pj, "deriv", where + ".pieces[]"));
    }
    cfg.at_breakpoints =
        get_or<std::vector<double>>(j, "values_at_breakpoints", {}, where);
    return cfg;
}

inline PiecewiseFn build_piecewise(const PiecewiseConfig& cfg, const std::string& where) {
    if (cfg.values.size() != cfg.breakpoints.size() + 1)
        throw ConfigError("config: '" + where + "' needs " +
                          std::to_string(cfg.breakpoints.size() + 1) + " pieces, got " +
                          std::to_string(cfg.values.size()));
    std::vector<Piece> pieces;
    for (std::size_t i = 0; i < cfg.values.size(); ++i) {
        try {
            pieces.push_back(Piece{compile_expression(cfg.values[i]),
                                   compile_expression(cfg.derivs[i])});
        } catch (const ParseError& e) {
            throw ConfigError("config: '" + where + ".pieces[" + std::to_string(i) +
                              "]': " + e.what());
        }
    }
    try {
        return PiecewiseFn(cfg.breakpoints, std::move(pieces), cfg.at_breakpoints);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config: '" + where + "': " + e.what());
    }
}

inline nlohmann::json piecewise_to_json(const PiecewiseConfig& cfg) {
    nlohmann::json j;
    j["breakpoints"] = cfg.breakpoints;
    j["pieces"] = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.values.size(); ++i)
        j["pieces"].push_back({{"value", cfg.values[i]}, {"deriv", cfg.derivs[i]}});
    if (!cfg.at_breakpoints.empty()) j["values_at_breakpoints"] = cfg.at_breakpoints;
    return j;
}

} // namespace detail

inline LoadedConfig parse_config(const nlohmann::json& j) {
    LoadedConfig cfg;

    if (!j.contains("problem")) throw ConfigError("config: missing section 'problem'");
    const auto& pj = j.at("problem");
    cfg.problem_cfg.x0 = detail::require<double>(pj, "x0", "problem");
    cfg.problem_cfg.eps0 = detail::get_or<double>(pj, "eps0", 1.0, "problem");
    if (!pj.contains("mu")) throw ConfigError("config: missing section 'problem.mu'");
    if (!pj.contains("sigma")) throw ConfigError("config: missing section 'problem.sigma'");
    cfg.problem_cfg.mu = detail::parse_piecewise_cfg(pj.at("mu"), "problem.mu");
    cfg.problem_cfg.sigma = detail::parse_piecewise_cfg(pj.at("sigma"), "problem.sigma");
    cfg.problem = make_problem(cfg.problem_cfg.x0,
                               detail::build_piecewise(cfg.problem_cfg.mu, "problem.mu"),
                               detail::build_piecewise(cfg.problem_cfg.sigma, "problem.sigma"),
                               cfg.problem_cfg.eps0);

    if (j.contains("transform")) {
        const auto& tj = j.at("transform");
        if (tj.contains("nu") && tj.at("nu").is_number())
            cfg.nu = tj.at("nu").get<double>();
        else if (tj.contains("nu") && tj.at("nu") != "auto")
            throw ConfigError("config: 'transform.nu' must be a number or \"auto\"");
    }

    ExperimentSpec& ex = cfg.experiment;
    ex.problem = cfg.problem;
    ex.nu = cfg.nu;
    if (j.contains("experiment")) {
        const auto& ej = j.at("experiment");
        const auto mname = detail::get_or<std::string>(ej, "method", "adaptive_transformed",
                                                       "experiment");
        const auto m = method_from_name(mname);
        if (!m) throw ConfigError("config: unknown experiment.method '" + mname + "'");
        ex.method = *m;
        if (ej.contains("delta_grid")) {
            ex.resolutions = detail::require<std::vector<double>>(ej, "delta_grid", "experiment");
        } else if (ej.contains("n_grid")) {
            for (auto n : detail::require<std::vector<double>>(ej, "n_grid", "experiment"))
                ex.resolutions.push_back(1.0 / n);
        }
        ex.paths = detail::get_or<int>(ej, "paths", 100, "experiment");
        ex.p_order = detail::get_or<double>(ej, "p", 2.0, "experiment");
        const auto ek = detail::get_or<std::string>(ej, "error_kind", "final_time", "experiment");
        if (ek == "final_time") ex.error_kind = ErrorKind::final_time;
        else if (ek == "sup_on_grid") ex.error_kind = ErrorKind::sup_on_grid;
        else throw ConfigError("config: unknown experiment.error_kind '" + ek + "'");
        ex.sup_grid_points = detail::get_or<int>(ej, "sup_grid_points", 64, "experiment");
        ex.delta_ref_divisor = detail::get_or<double>(ej, "delta_ref_divisor", 64.0, "experiment");
        if (ej.contains("delta_ref"))
            ex.delta_ref = detail::require<double>(ej, "delta_ref", "experiment");
        ex.master_seed = detail::get_or<std::uint64_t>(ej, "master_seed", 0, "experiment");
        const auto mode = detail::get_or<std::string>(ej, "mode", "clamped", "experiment");
        if (mode == "theory") ex.mode = ControllerMode::theory;
        else if (mode == "clamped") ex.mode = ControllerMode::clamped;
        else throw ConfigError("config: unknown experiment.mode '" + mode + "'");
    }

    if (j.contains("output")) {
        const auto& oj = j.at("output");
        cfg.output.directory = detail::get_or<std::string>(oj, "directory", "out", "output");
        if (oj.contains("formats")) {
            cfg.output.csv = cfg.output.json = false;
            for (const auto& f : oj.at("formats")) {
                if (f == "csv") cfg.output.csv = true;
                else if (f == "json") cfg.output.json = true;
                else throw ConfigError("config: unknown output format");
            }
        }
    }
    return cfg;
}

inline LoadedConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: JSON parse failure in '" + path + "': " + e.what());
    }
    return parse_config(j);
}

/// Re-serialize a loaded config; semantically identical to the input
/// (defaults made explicit).
inline nlohmann::json config_to_json(const LoadedConfig& cfg) {
    nlohmann::json j;
    j["problem"]["x0"] = cfg.problem_cfg.x0;
    j["problem"]["eps0"] = cfg.problem_cfg.eps0;
    j["problem"]["mu"] = detail::piecewise_to_json(cfg.problem_cfg.mu);
    j["problem"]["sigma"] = detail::piecewise_to_json(cfg.problem_cfg.sigma);
    j["transform"]["nu"] = cfg.nu ? nlohmann::json(*cfg.nu) : nlohmann::json("auto");
    const ExperimentSpec& ex = cfg.experiment;
    j["experiment"]["method"] = method_name(ex.method);
    j["experiment"]["delta_grid"] = ex.resolutions;
    j["experiment"]["paths"] = ex.paths;
    j["experiment"]["p"] = ex.p_order;
    j["experiment"]["error_kind"] =
        ex.error_kind == ErrorKind::final_time ? "final_time" : "sup_on_grid";
    j["experiment"]["sup_grid_points"] = ex.sup_grid_points;
    j["experiment"]["delta_ref_divisor"] = ex.delta_ref_divisor;
    if (ex.delta_ref) j["experiment"]["delta_ref"] = *ex.delta_ref;
    j["experiment"]["master_seed"] = ex.master_seed;
    j["experiment"]["mode"] = ex.mode == ControllerMode::theory ? "theory" : "clamped";
    j["output"]["directory"] = cfg.output.directory;
    auto formats = nlohmann::json::array();
    if (cfg.output.csv) formats.push_back("csv");
    if (cfg.output.json) formats.push_back("json");
    j["output"]["formats"] = formats;
    return j;
}

/// JSON provenance summary for a rate experiment: the spec echoed plus the
/// fitted slopes and the per-resolution table.
inline nlohmann::json rate_summary_json(const ExperimentSpec& spec, const RateTable& table) {
    nlohmann::json j;
    j["spec"]["method"] = method_name(spec.method);
    j["spec"]["delta_grid"] = spec.resolutions;
    j["spec"]["paths"] = spec.paths;
    j["spec"]["p"] = spec.p_order;
    j["spec"]["error_kind"] =
        spec.error_kind == ErrorKind::final_time ? "final_time" : "sup_on_grid";
    j["spec"]["sup_grid_points"] = spec.sup_grid_points;
    j["spec"]["delta_ref_divisor"] = spec.delta_ref_divisor;
    if (spec.delta_ref) j["spec"]["delta_ref"] = *spec.delta_ref;
    j["spec"]["master_seed"] = spec.master_seed;
    j["spec"]["mode"] = spec.mode == ControllerMode::theory ? "theory" : "clamped";
    if (spec.mode == ControllerMode::clamped)
        j["spec"]["mode_note"] = "clamped step controller is not theorem-faithful";
    j["spec"]["x0"] = spec.problem.x0;
    j["spec"]["eps0"] = spec.problem.eps0;
    j["spec"]["theta"] = spec.problem.theta;
    if (spec.nu) j["spec"]["nu"] = *spec.nu;

    j["rows"] = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json row;
        row["resolution"] = r.resolution;
        row["mean_cost"] = r.mean_cost;
        row["mean_cost_stderr"] = r.mean_cost_stderr;
        row["error_lp"] = r.error_lp;
        row["error_stderr"] = r.error_stderr;
        if (std::isfinite(r.slope_partial)) row["slope_partial"] = r.slope_partial;
        row["max_cost"] = r.max_cost;
        row["branch_fracs"] = r.branch_fracs;
        j["rows"].push_back(row);
    }
    auto fit_json = [](const FitResult& f) {
        return nlohmann::json{{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
    };
    if (table.fit_vs_resolution) j["fit_vs_resolution"] = fit_json(*table.fit_vs_resolution);
    if (table.fit_vs_cost) j["fit_vs_cost"] = fit_json(*table.fit_vs_cost);
    return j;
}

} // namespace sdeadapt
