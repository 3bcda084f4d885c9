#pragma once

#include "epictrl/grid.hpp"
#include "epictrl/model.hpp"
#include "epictrl/sde.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace epictrl {

struct NoPolicy {};
struct ConstantPolicy {
    double xi = 0.0;
};
/// Feedback through the z-derivative of a solved grid; the grid must outlive the simulation.
struct GridPolicy {
    const ValueGrid* grid = nullptr;
};

using PolicySource = std::variant<NoPolicy, ConstantPolicy, GridPolicy>;

enum class Series { S, I, R, beta, xi, Rt, RtSt };
inline constexpr std::size_t kSeriesCount = 7;
inline constexpr std::array<std::string_view, kSeriesCount> kSeriesNames = {"S", "I", "R", "beta", "xi", "Rt", "RtSt"};

/// Mean and 95% normal band, one entry per recorded day.
struct SeriesBand {
    std::vector<double> mean;
    std::vector<double> lo;
    std::vector<double> hi;

    bool operator==(const SeriesBand&) const = default;
};

/// Scalar summaries of the mean paths; absent values mean "never happened".
struct ScalarMetrics {
    std::optional<int> first_containment_day;
    std::optional<int> severe_onset_day;
    std::optional<int> severe_duration;
    std::optional<double> final_recovered;
    std::optional<double> min_mean_Rt;
    std::optional<int> first_day_RtSt_below_1;

    bool operator==(const ScalarMetrics&) const = default;
};

struct EnsembleResult {
    std::vector<double> days;
    std::array<SeriesBand, kSeriesCount> series;
    ScalarMetrics metrics;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::uint64_t fingerprint = 0;  ///< fingerprint of the policy grid, 0 otherwise

    double discounted_cost_mean = 0.0;
    double discounted_cost_stderr = 0.0;
    std::uint64_t clamped_queries = 0;
    double max_conservation_error = 0.0;  ///< max |S + I + R - 1| over all recorded samples

    const SeriesBand& operator[](Series s) const { return series[static_cast<std::size_t>(s)]; }
    SeriesBand& operator[](Series s) { return series[static_cast<std::size_t>(s)]; }

    /// Mean of `s` on the recorded day nearest to `day`.
    double mean_at(Series s, double day) const;
};

/// Every simulation step of one closed-loop path (not just the daily records).
struct PathRecord {
    std::vector<double> t, s, i, beta, xi, vz;
    std::uint64_t clamped_queries = 0;
};

/// Closed-loop path `path_index`: at each step the control is read from the policy at the
/// current state, beta takes an Euler-Maruyama step and (S, I) an RK4 step, both from the
/// left-endpoint values. Noise comes from RngStream(scheme.seed, path_index).
PathRecord simulate_path(const ModelParams& p, const PolicySource& policy, const SdeScheme& scheme,
                         const EpidemicState& s0, std::uint64_t path_index);

/// Ensemble statistics over paths 0..n_paths-1. Paths are reduced in fixed blocks, so the
/// result does not depend on the thread count.
EnsembleResult simulate_closed_loop(const ModelParams& p, const PolicySource& policy, const SdeScheme& scheme,
                                    const EpidemicState& s0, std::size_t n_paths, double xi_eps = 0.01);

inline constexpr double kSevereThreshold = 0.4;

ScalarMetrics compute_metrics(const EnsembleResult& e, double xi_eps = 0.01);

/// Writes `<stem>.csv`, `<stem>.svg`, `<stem>.metrics.json` and `<stem>.metrics.csv` into `dir`.
void export_ensemble(const EnsembleResult& e, const std::filesystem::path& dir, std::string_view stem,
                     std::string_view title = {});

/// Parses a CSV produced by export_ensemble back into days and series (metrics are not in it).
EnsembleResult read_ensemble_csv(const std::filesystem::path& csv);

/// Header row of the per-day CSV.
std::string ensemble_csv_header();

/// Four-panel SVG (xi, R_t, S/I/R, R_t*S_t) with mean lines and shaded 95% bands.
std::string render_svg(const EnsembleResult& e, std::string_view title);

} // namespace epictrl
