#include "epictrl/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace epictrl {

std::string_view to_string(SweepParameter p) {
    return p == SweepParameter::cap_L ? "cap_L" : "sigma_vol";
}

SweepParameter sweep_parameter_from_string(std::string_view name) {
    if (name == "cap_L") return SweepParameter::cap_L;
    if (name == "sigma_vol") return SweepParameter::sigma_vol;
    throw ConfigError("sweep parameter must be cap_L or sigma_vol, got '" + std::string(name) + "'");
}

Preset preset_from_string(std::string_view name) {
    if (name == "desk") return Preset::desk;
    if (name == "paper") return Preset::paper;
    throw ConfigError("unknown preset '" + std::string(name) + "'");
}

ScenarioConfig make_preset(Preset preset) {
    ScenarioConfig c;
    // The epidemic lives at I of a few percent; the y range is cut to [0.001, 0.2] so the
    // grid resolves it, and x starts at 0.2 (S never falls that low in the experiments).
    c.grid.x_lo = 0.2;
    c.grid.y_lo = 0.001;
    c.grid.y_hi = 0.2;
    if (preset == Preset::desk) {
        c.grid.nx = 21;
        c.grid.ny = 21;
        c.grid.nz = 11;
        c.solver.n_paths = 200;
        c.solver.dt = 1.0;
        c.solver.horizon = 1500.0;
        c.sim.n_paths = 2000;
    } else {
        c.grid.nx = 41;
        c.grid.ny = 41;
        c.grid.nz = 21;
        c.solver.n_paths = 200;
        c.solver.dt = 0.5;
        c.solver.horizon = 1500.0;
        c.sim.n_paths = 6000;
    }
    return c;
}

namespace {

using Keys = std::set<std::string>;

void check_keys(const YAML::Node& node, const Keys& allowed, const std::string& where) {
    if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
    if (const YAML::Node v = node[key]) {
        try {
            out = v.as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError(where + "." + key + ": bad value");
        }
    }
}

DriftMode read_mode(const YAML::Node& v, const std::string& where) {
    try {
        return drift_mode_from_string(v.as<std::string>());
    } catch (const std::exception&) {
        throw ConfigError(where + ": drift_mode must be paper or normalized");
    }
}

} // namespace

ScenarioConfig parse_scenario(std::string_view text, const ScenarioConfig& base) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config is not valid YAML: ") + e.what());
    }
    ScenarioConfig c = base;
    if (root.IsNull()) return c;
    check_keys(root, {"model", "solver", "grid", "sim", "sweep", "output_dir", "cache_dir"}, "config");

    if (const auto m = root["model"]) {
        check_keys(m, {"alpha", "theta", "beta_hat", "gamma", "sigma_vol", "lambda", "cap_L", "y_bar", "drift_mode"},
                   "model");
        ModelParams& p = c.model;
        read(m, "alpha", p.alpha, "model");
        read(m, "theta", p.theta, "model");
        read(m, "beta_hat", p.beta_hat, "model");
        read(m, "gamma", p.gamma, "model");
        read(m, "sigma_vol", p.sigma_vol, "model");
        read(m, "lambda", p.lambda, "model");
        read(m, "cap_L", p.cap_L, "model");
        read(m, "y_bar", p.y_bar, "model");
        if (m["drift_mode"]) p.drift_mode = read_mode(m["drift_mode"], "model");
    }
    if (const auto s = root["solver"]) {
        check_keys(s, {"n_paths", "dt", "horizon", "max_iterations", "tolerance", "seed", "shared_beta_paths", "scheme",
                       "integrand", "extinction_threshold"},
                   "solver");
        SolverConfig& sc = c.solver;
        read(s, "n_paths", sc.n_paths, "solver");
        read(s, "dt", sc.dt, "solver");
        read(s, "horizon", sc.horizon, "solver");
        read(s, "max_iterations", sc.max_iterations, "solver");
        read(s, "tolerance", sc.tolerance, "solver");
        read(s, "seed", sc.seed, "solver");
        read(s, "shared_beta_paths", sc.shared_beta_paths, "solver");
        read(s, "extinction_threshold", sc.extinction_threshold, "solver");
        try {
            if (s["scheme"]) sc.scheme = solver_scheme_from_string(s["scheme"].as<std::string>());
            if (s["integrand"]) sc.integrand = integrand_form_from_string(s["integrand"].as<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("solver: ") + e.what());
        }
    }
    if (const auto g = root["grid"]) {
        check_keys(g, {"nx", "ny", "nz", "x_range", "y_range", "z_range", "simplex_cap"}, "grid");
        GridSpec& gs = c.grid;
        read(g, "nx", gs.nx, "grid");
        read(g, "ny", gs.ny, "grid");
        read(g, "nz", gs.nz, "grid");
        read(g, "simplex_cap", gs.simplex_cap, "grid");
        auto range = [&](const char* key, double& lo, double& hi) {
            if (const auto r = g[key]) {
                if (!r.IsSequence() || r.size() != 2) throw ConfigError(std::string("grid.") + key + ": expected [lo, hi]");
                lo = r[0].as<double>();
                hi = r[1].as<double>();
            }
        };
        range("x_range", gs.x_lo, gs.x_hi);
        range("y_range", gs.y_lo, gs.y_hi);
        range("z_range", gs.z_lo, gs.z_hi);
    }
    if (const auto s = root["sim"]) {
        check_keys(s, {"dt", "horizon", "seed", "n_paths", "s0", "xi_eps"}, "sim");
        SimSettings& sim = c.sim;
        read(s, "dt", sim.scheme.dt, "sim");
        read(s, "horizon", sim.scheme.horizon, "sim");
        read(s, "seed", sim.scheme.seed, "sim");
        read(s, "n_paths", sim.n_paths, "sim");
        read(s, "xi_eps", sim.xi_eps, "sim");
        if (const auto s0 = s["s0"]) {
            if (!s0.IsSequence() || s0.size() != 3) throw ConfigError("sim.s0: expected [S, I, beta]");
            sim.s0 = {s0[0].as<double>(), s0[1].as<double>(), s0[2].as<double>()};
        }
    }
    if (const auto w = root["sweep"]) {
        if (w.IsNull()) {
            c.sweep.reset();
        } else {
            check_keys(w, {"parameter", "values", "drift_modes"}, "sweep");
            SweepSpec sw = c.sweep.value_or(SweepSpec{});
            if (w["parameter"]) sw.parameter = sweep_parameter_from_string(w["parameter"].as<std::string>());
            read(w, "values", sw.values, "sweep");
            if (const auto modes = w["drift_modes"]) {
                if (!modes.IsSequence()) throw ConfigError("sweep.drift_modes: expected a list");
                sw.drift_modes.clear();
                for (const auto& m : modes) sw.drift_modes.push_back(read_mode(m, "sweep.drift_modes"));
            }
            c.sweep = sw;
        }
    }
    if (root["output_dir"]) c.output_dir = root["output_dir"].as<std::string>();
    if (root["cache_dir"]) c.cache_dir = root["cache_dir"].as<std::string>();
    return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& file, const ScenarioConfig& base) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot read config " + file.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_scenario(ss.str(), base);
}

std::string serialize_scenario(const ScenarioConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;

    const ModelParams& p = c.model;
    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "alpha" << YAML::Value << p.alpha;
    out << YAML::Key << "theta" << YAML::Value << p.theta;
    out << YAML::Key << "beta_hat" << YAML::Value << p.beta_hat;
    out << YAML::Key << "gamma" << YAML::Value << p.gamma;
    out << YAML::Key << "sigma_vol" << YAML::Value << p.sigma_vol;
    out << YAML::Key << "lambda" << YAML::Value << p.lambda;
    out << YAML::Key << "cap_L" << YAML::Value << p.cap_L;
    out << YAML::Key << "y_bar" << YAML::Value << p.y_bar;
    out << YAML::Key << "drift_mode" << YAML::Value << std::string(to_string(p.drift_mode));
    out << YAML::EndMap;

    const SolverConfig& s = c.solver;
    out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "n_paths" << YAML::Value << s.n_paths;
    out << YAML::Key << "dt" << YAML::Value << s.dt;
    out << YAML::Key << "horizon" << YAML::Value << s.horizon;
    out << YAML::Key << "max_iterations" << YAML::Value << s.max_iterations;
    out << YAML::Key << "tolerance" << YAML::Value << s.tolerance;
    out << YAML::Key << "seed" << YAML::Value << s.seed;
    out << YAML::Key << "shared_beta_paths" << YAML::Value << s.shared_beta_paths;
    out << YAML::Key << "scheme" << YAML::Value << std::string(to_string(s.scheme));
    out << YAML::Key << "integrand" << YAML::Value << std::string(to_string(s.integrand));
    out << YAML::Key << "extinction_threshold" << YAML::Value << s.extinction_threshold;
    out << YAML::EndMap;

    const GridSpec& g = c.grid;
    out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "nx" << YAML::Value << g.nx;
    out << YAML::Key << "ny" << YAML::Value << g.ny;
    out << YAML::Key << "nz" << YAML::Value << g.nz;
    out << YAML::Key << "x_range" << YAML::Value << YAML::Flow << std::vector<double>{g.x_lo, g.x_hi};
    out << YAML::Key << "y_range" << YAML::Value << YAML::Flow << std::vector<double>{g.y_lo, g.y_hi};
    out << YAML::Key << "z_range" << YAML::Value << YAML::Flow << std::vector<double>{g.z_lo, g.z_hi};
    out << YAML::Key << "simplex_cap" << YAML::Value << g.simplex_cap;
    out << YAML::EndMap;

    const SimSettings& sim = c.sim;
    out << YAML::Key << "sim" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "dt" << YAML::Value << sim.scheme.dt;
    out << YAML::Key << "horizon" << YAML::Value << sim.scheme.horizon;
    out << YAML::Key << "seed" << YAML::Value << sim.scheme.seed;
    out << YAML::Key << "n_paths" << YAML::Value << sim.n_paths;
    out << YAML::Key << "s0" << YAML::Value << YAML::Flow << std::vector<double>{sim.s0.s, sim.s0.i, sim.s0.beta};
    out << YAML::Key << "xi_eps" << YAML::Value << sim.xi_eps;
    out << YAML::EndMap;

    out << YAML::Key << "sweep" << YAML::Value;
    if (c.sweep) {
        out << YAML::BeginMap;
        out << YAML::Key << "parameter" << YAML::Value << std::string(to_string(c.sweep->parameter));
        out << YAML::Key << "values" << YAML::Value << YAML::Flow << c.sweep->values;
        std::vector<std::string> modes;
        for (DriftMode m : c.sweep->drift_modes) modes.emplace_back(to_string(m));
        out << YAML::Key << "drift_modes" << YAML::Value << YAML::Flow << modes;
        out << YAML::EndMap;
    } else {
        out << YAML::Null;
    }
    out << YAML::Key << "output_dir" << YAML::Value << c.output_dir.string();
    out << YAML::Key << "cache_dir" << YAML::Value << c.cache_dir.string();
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void validate_scenario(const ScenarioConfig& c) {
    try {
        validate_params(c.model);
        validate_config(c.solver, c.model);
        validate_grid(c.grid, c.model);
        c.sim.scheme.n_steps();
        require_valid(c.sim.s0, c.model);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.sim.n_paths < 1) throw ConfigError("sim.n_paths must be >= 1");
    if (!(c.sim.xi_eps >= 0.0)) throw ConfigError("sim.xi_eps must be non-negative");
    if (c.sweep) {
        if (c.sweep->values.empty()) throw ConfigError("sweep.values is empty");
        if (c.sweep->drift_modes.empty()) throw ConfigError("sweep.drift_modes is empty");
        for (double v : c.sweep->values)
            for (DriftMode m : c.sweep->drift_modes) {
                try {
                    validate_params(sweep_cell(c.model, c.sweep->parameter, v, m));
                } catch (const ParamError& e) {
                    throw ConfigError("sweep value " + std::to_string(v) + ": " + e.what());
                }
            }
    }
}

ModelParams sweep_cell(const ModelParams& base, SweepParameter parameter, double value, DriftMode mode) {
    ModelParams p = base;
    (parameter == SweepParameter::cap_L ? p.cap_L : p.sigma_vol) = value;
    p.drift_mode = mode;
    return p;
}

} // namespace epictrl
