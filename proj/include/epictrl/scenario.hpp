#pragma once

#include "epictrl/grid.hpp"
#include "epictrl/model.hpp"
#include "epictrl/sde.hpp"
#include "epictrl/solver.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace epictrl {

/// Closed-loop ensemble settings.
struct SimSettings {
    SdeScheme scheme{0.5, 300.0, 20200601};
    std::size_t n_paths = 6000;
    EpidemicState s0{0.99, 0.01, 0.1};
    double xi_eps = 0.01;  ///< threshold for "first day of containment"

    bool operator==(const SimSettings& o) const {
        return scheme.dt == o.scheme.dt && scheme.horizon == o.scheme.horizon && scheme.seed == o.scheme.seed &&
               n_paths == o.n_paths && s0.s == o.s0.s && s0.i == o.s0.i && s0.beta == o.s0.beta &&
               xi_eps == o.xi_eps;
    }
};

enum class SweepParameter { cap_L, sigma_vol };

std::string_view to_string(SweepParameter p);
SweepParameter sweep_parameter_from_string(std::string_view name);

struct SweepSpec {
    SweepParameter parameter = SweepParameter::cap_L;
    std::vector<double> values;
    std::vector<DriftMode> drift_modes{DriftMode::paper};

    bool operator==(const SweepSpec&) const = default;
};

struct ScenarioConfig {
    ModelParams model;
    SolverConfig solver;
    GridSpec grid;
    SimSettings sim;
    std::optional<SweepSpec> sweep;
    std::filesystem::path output_dir = "out";
    /// Solved grids are cached here by fingerprint; empty disables caching.
    std::filesystem::path cache_dir = "out/cache";

    bool operator==(const ScenarioConfig&) const = default;
};

/// Bad configuration file, unknown key or invalid value. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Preset { desk, paper };

Preset preset_from_string(std::string_view name);

/// desk: 21x21x11 grid, 200 paths per node, dt = 1, T = 1500, 2000-path ensembles.
/// paper: 41x41x21 grid, dt = 0.5, 6000-path ensembles.
ScenarioConfig make_preset(Preset preset);

/// Overlays the keys present in `yaml` onto `base`. Unknown keys are errors.
ScenarioConfig parse_scenario(std::string_view yaml, const ScenarioConfig& base = make_preset(Preset::desk));
ScenarioConfig load_scenario(const std::filesystem::path& file, const ScenarioConfig& base = make_preset(Preset::desk));

/// Complete YAML rendering; parse_scenario(serialize_scenario(c)) == c.
std::string serialize_scenario(const ScenarioConfig& c);

/// Throws ConfigError naming the first problem (parameters, solver, grid, sim, sweep).
void validate_scenario(const ScenarioConfig& c);

/// Copy of `base` with the swept parameter set to `value` under `mode`.
ModelParams sweep_cell(const ModelParams& base, SweepParameter parameter, double value, DriftMode mode);

} // namespace epictrl
