#pragma once

#include "epictrl/closed_loop.hpp"
#include "epictrl/scenario.hpp"
#include "epictrl/solver.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace epictrl {

using Log = std::function<void(std::string_view)>;

struct CachedSolve {
    ValueGrid grid;
    SolveDiagnostics diagnostics;
    bool from_cache = false;
    std::filesystem::path file;  ///< empty when caching is off
};

/// Loads `<cache_dir>/grid-<fingerprint>.bin` when present and its stored fingerprint matches,
/// otherwise solves and writes it (with its JSON sidecar). Empty `cache_dir` always solves.
CachedSolve solve_cached(const ModelParams& p, const SolverConfig& cfg, const GridSpec& spec,
                         const std::filesystem::path& cache_dir, const Log& log = {});

/// JSON sidecar for a grid file: parameters, solver config, grid spec, diagnostics.
std::string grid_sidecar(const ModelParams& p, const SolverConfig& cfg, const ValueGrid& g,
                         const SolveDiagnostics& d);

/// "feedback", "none" or "constant:<v>".
struct PolicyChoice {
    enum class Kind { feedback, none, constant } kind = Kind::feedback;
    double value = 0.0;
};
PolicyChoice parse_policy(std::string_view text);

EnsembleResult run_ensemble(const ScenarioConfig& c, const ModelParams& p, const PolicySource& policy,
                            std::size_t n_paths);

struct SweepRow {
    DriftMode mode = DriftMode::paper;
    double value = 0.0;
    ScalarMetrics metrics;
    std::uint64_t fingerprint = 0;
    bool converged = false;
};

/// One solve (cached) and one feedback ensemble per (drift mode, value); writes per-cell
/// artifacts and `table.csv` into c.output_dir.
std::vector<SweepRow> run_sweep(const ScenarioConfig& c, const Log& log = {});
std::string sweep_table_csv(const std::vector<SweepRow>& rows, SweepParameter parameter);

// ---------------------------------------------------------------------------
// Acceptance suite

struct CheckRow {
    int criterion = 0;
    std::string name;
    std::string expected;
    std::string computed;
    std::string tolerance;
    bool pass = false;
};

struct AcceptanceReport {
    std::vector<CheckRow> rows;
    bool pass = false;
    double seconds = 0.0;
    std::uint64_t seed = 0;
    std::string details_json;  ///< per-mode L-sweep tables and sweep rows

    bool criterion_pass(int criterion) const;
};

/// Named tolerances; every key can be overridden from the command line.
std::map<std::string, double> default_tolerances();

/// Runs criteria 1-7 at the scale given by `c` (normally the desk preset). Artifacts go to
/// `<c.output_dir>/accept` when c.output_dir is non-empty.
AcceptanceReport run_acceptance(const ScenarioConfig& c, const std::map<std::string, double>& tolerances,
                                const Log& log = {});

/// Only criterion 7 (no solve at desk scale).
std::vector<CheckRow> run_property_suite(const std::map<std::string, double>& tolerances, const Log& log = {});

std::string report_json(const AcceptanceReport& r);
std::string report_table(const AcceptanceReport& r);

// ---------------------------------------------------------------------------
// Command bodies shared by the CLI. They return the process exit code and throw ConfigError
// (or std::invalid_argument) on usage problems.

int cmd_solve(const ScenarioConfig& c, std::ostream& out);
int cmd_simulate(const ScenarioConfig& c, const std::filesystem::path& grid_file, std::string_view policy,
                 std::ostream& out);
int cmd_sweep(const ScenarioConfig& c, std::ostream& out);
int cmd_accept(const ScenarioConfig& c, const std::map<std::string, double>& tolerance_overrides, std::ostream& out);

} // namespace epictrl
