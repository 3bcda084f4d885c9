// epictrl: solve the lockdown HJB grid, simulate closed-loop ensembles, run sweeps and the
// acceptance suite. Exit codes: 0 success, 1 acceptance failure / non-convergence, 2 usage.

#include "epictrl/experiments.hpp"
#include "epictrl/parallel.hpp"
#include "epictrl/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string preset = "desk";
    std::optional<int> max_iterations;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "YAML scenario file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "seed for the solver and the ensembles");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--preset", c.preset, "base settings the config overlays")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--max-iterations", c.max_iterations, "cap on solver sweeps");
}

epictrl::ScenarioConfig resolve(const Common& c) {
    using namespace epictrl;
    ScenarioConfig cfg = make_preset(preset_from_string(c.preset));
    if (!c.config.empty()) cfg = load_scenario(c.config, cfg);
    if (c.seed) {
        cfg.solver.seed = *c.seed;
        cfg.sim.scheme.seed = *c.seed;
    }
    if (!c.out.empty()) {
        // keep a relative cache inside the new output directory
        if (cfg.cache_dir == cfg.output_dir / "cache") cfg.cache_dir = std::filesystem::path(c.out) / "cache";
        cfg.output_dir = c.out;
    }
    if (c.max_iterations) cfg.solver.max_iterations = *c.max_iterations;
    validate_scenario(cfg);
    return cfg;
}

std::map<std::string, double> parse_tolerances(const std::vector<std::string>& args) {
    std::map<std::string, double> out;
    for (const std::string& a : args) {
        const auto eq = a.find('=');
        std::size_t used = 0;
        double v = 0.0;
        try {
            if (eq != std::string::npos) v = std::stod(a.substr(eq + 1), &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (eq == std::string::npos || eq == 0 || used == 0 || eq + 1 + used != a.size())
            throw epictrl::ConfigError("--tol expects key=value, got '" + a + "'");
        out[a.substr(0, eq)] = v;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal lockdown under a stochastic transmission rate"};
    app.require_subcommand(1);

    Common solve_opts, sim_opts, sweep_opts, accept_opts;
    auto* solve_cmd = app.add_subcommand("solve", "solve the value grid and write grid.bin");
    add_common(solve_cmd, solve_opts);

    auto* sim_cmd = app.add_subcommand("simulate", "closed-loop ensemble with CSV, SVG and metrics");
    add_common(sim_cmd, sim_opts);
    std::string policy = "feedback", grid_file;
    sim_cmd->add_option("--policy", policy, "feedback, none or constant:<v>");
    sim_cmd->add_option("--grid", grid_file, "grid file for the feedback policy");

    auto* sweep_cmd = app.add_subcommand("sweep", "solve and simulate every value of the config's sweep");
    add_common(sweep_cmd, sweep_opts);

    auto* accept_cmd = app.add_subcommand("accept", "run the acceptance suite and write acceptance.json");
    add_common(accept_cmd, accept_opts);
    std::vector<std::string> tol_args;
    accept_cmd->add_option("--tol", tol_args, "override a tolerance, e.g. --tol c3.onset_days=12");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    epictrl::set_thread_count(epictrl::default_thread_count());
    try {
        if (*solve_cmd) return epictrl::cmd_solve(resolve(solve_opts), std::cout);
        if (*sim_cmd) return epictrl::cmd_simulate(resolve(sim_opts), grid_file, policy, std::cout);
        if (*sweep_cmd) return epictrl::cmd_sweep(resolve(sweep_opts), std::cout);
        if (*accept_cmd) return epictrl::cmd_accept(resolve(accept_opts), parse_tolerances(tol_args), std::cout);
    } catch (const epictrl::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
