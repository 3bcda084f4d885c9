#include "epictrl/closed_loop.hpp"
#include "epictrl/cost.hpp"
#include "epictrl/parallel.hpp"
#include "epictrl/solver.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using namespace epictrl;

namespace {

const EpidemicState kStart{0.99, 0.01, 0.1};

const ValueGrid& small_policy_grid() {
    static const ValueGrid grid = [] {
        SolverConfig c;
        c.n_paths = 48;
        c.dt = 1.0;
        c.horizon = 1100.0;
        c.max_iterations = 8;
        GridSpec s;
        s.nx = 7;
        s.ny = 7;
        s.nz = 5;
        s.x_lo = 0.2;
        s.y_lo = 0.001;
        s.y_hi = 0.2;
        return solve(ModelParams{}, c, s).grid;
    }();
    return grid;
}

EnsembleResult synthetic(std::size_t days) {
    EnsembleResult e;
    for (std::size_t d = 0; d < days; ++d) e.days.push_back(static_cast<double>(d));
    for (auto& band : e.series) {
        band.mean.assign(days, 0.0);
        band.lo.assign(days, 0.0);
        band.hi.assign(days, 0.0);
    }
    return e;
}

std::string slurp(const std::filesystem::path& f) {
    std::ifstream is(f);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

TEST_SUITE("closed_loop") {

TEST_CASE("noiseless uncontrolled run reaches the final-size oracle") {
    ModelParams p;
    p.sigma_vol = 0.0;
    const EnsembleResult e = simulate_closed_loop(p, NoPolicy{}, {0.5, 1500.0, 1}, kStart, 3);
    const double oracle = 1.0 - final_size_susceptible(0.99, 0.01, 1.8);
    CHECK(std::abs(*e.metrics.final_recovered - oracle) < 0.005);
    // bands collapse without noise
    for (const auto& band : e.series)
        for (std::size_t d = 0; d < e.days.size(); ++d) {
            CHECK(band.lo[d] == band.mean[d]);
            CHECK(band.hi[d] == band.mean[d]);
        }
    CHECK_FALSE(e.metrics.first_containment_day.has_value());
    CHECK_FALSE(e.metrics.severe_onset_day.has_value());
}

TEST_CASE("constant maximal lockdown extinguishes the epidemic") {
    const ModelParams p;
    const EnsembleResult e = simulate_closed_loop(p, ConstantPolicy{1.0}, {0.5, 300.0, 2}, kStart, 2000);
    CHECK(e.mean_at(Series::beta, 300.0) < 0.005);
    CHECK(*e.metrics.final_recovered < 0.1);
    CHECK(e.metrics.first_containment_day == 0);
    CHECK_THROWS(simulate_closed_loop(p, ConstantPolicy{1.5}, {0.5, 300.0, 2}, kStart, 10));
}

TEST_CASE("conservation, positivity and band ordering") {
    const ModelParams p;
    const EnsembleResult e = simulate_closed_loop(p, NoPolicy{}, {0.5, 300.0, 3}, kStart, 500);
    CHECK(e.max_conservation_error <= 1e-12);
    CHECK(e.days.size() == 301);
    for (const auto& band : e.series)
        for (std::size_t d = 0; d < e.days.size(); ++d) {
            CHECK(band.lo[d] <= band.mean[d]);
            CHECK(band.mean[d] <= band.hi[d]);
        }
    for (std::size_t d = 0; d < e.days.size(); ++d) {
        const double s = e[Series::S].mean[d], i = e[Series::I].mean[d], r = e[Series::R].mean[d];
        CHECK(std::abs(s + i + r - 1.0) < 1e-12);
        CHECK(e[Series::Rt].mean[d] == doctest::Approx(e[Series::beta].mean[d] / p.alpha));
    }
}

TEST_CASE("recorded feedback equals feedback_xi of the recorded vz") {
    const ModelParams p;
    const ValueGrid& g = small_policy_grid();
    const PathRecord rec = simulate_path(p, GridPolicy{&g}, {0.5, 300.0, 4}, kStart, 17);
    REQUIRE(rec.xi.size() == 601);
    const GridSampler sample(g.spec, g.vz);
    for (std::size_t k = 0; k < rec.xi.size(); ++k) {
        CHECK(rec.xi[k] == feedback_xi(p, rec.vz[k]));
        bool clamped = false;
        CHECK(rec.vz[k] == sample(rec.s[k], rec.i[k], rec.beta[k], clamped));
        CHECK(rec.s[k] + rec.i[k] <= 1.0);
    }
}

TEST_CASE("grid policy needs the start inside the grid box") {
    const ValueGrid& g = small_policy_grid();
    CHECK_THROWS(simulate_path(ModelParams{}, GridPolicy{&g}, {0.5, 10.0, 1}, {0.1, 0.01, 0.1}, 0));
    CHECK_THROWS(simulate_path(ModelParams{}, GridPolicy{nullptr}, {0.5, 10.0, 1}, kStart, 0));
}

TEST_CASE("feedback policy beats no lockdown and full lockdown") {
    const ModelParams p;
    const ValueGrid& g = small_policy_grid();
    const SdeScheme sch{0.5, 1500.0, 5};
    const EnsembleResult fb = simulate_closed_loop(p, GridPolicy{&g}, sch, kStart, 400);
    const EnsembleResult none = simulate_closed_loop(p, NoPolicy{}, sch, kStart, 400);
    const EnsembleResult full = simulate_closed_loop(p, ConstantPolicy{p.cap_L}, sch, kStart, 400);
    const double se_none = std::hypot(fb.discounted_cost_stderr, none.discounted_cost_stderr);
    const double se_full = std::hypot(fb.discounted_cost_stderr, full.discounted_cost_stderr);
    CHECK(fb.discounted_cost_mean + 2.0 * se_none < none.discounted_cost_mean);
    CHECK(fb.discounted_cost_mean + 2.0 * se_full < full.discounted_cost_mean);
}

TEST_CASE("ensembles do not depend on the thread count") {
    const ModelParams p;
    const ValueGrid& g = small_policy_grid();
    const unsigned saved = thread_count();
    set_thread_count(1);
    const EnsembleResult a = simulate_closed_loop(p, GridPolicy{&g}, {0.5, 200.0, 6}, kStart, 300);
    set_thread_count(4);
    const EnsembleResult b = simulate_closed_loop(p, GridPolicy{&g}, {0.5, 200.0, 6}, kStart, 300);
    set_thread_count(saved);
    CHECK(a.series == b.series);
    CHECK(a.discounted_cost_mean == b.discounted_cost_mean);
}

TEST_CASE("metrics on synthetic ensembles") {
    EnsembleResult e = synthetic(301);
    CHECK(compute_metrics(e) == ScalarMetrics{std::nullopt, std::nullopt, std::nullopt, 0.0, 0.0, 0});
    for (int d = 79; d < 142; ++d) e[Series::xi].mean[d] = 0.5;
    for (int d = 0; d < 301; ++d) e[Series::RtSt].mean[d] = d < 85 ? 1.5 : 0.8;
    e[Series::RtSt].mean[40] = 0.9;  // an early dip that does not persist
    const ScalarMetrics m = compute_metrics(e);
    CHECK(m.severe_onset_day == 79);
    CHECK(m.severe_duration == 63);
    CHECK(m.first_containment_day == 79);
    CHECK(m.first_day_RtSt_below_1 == 85);

    e[Series::xi].mean[60] = 0.02;
    CHECK(compute_metrics(e, 0.01).first_containment_day == 60);
    CHECK(compute_metrics(e, 0.05).first_containment_day == 79);
    e[Series::RtSt].mean[300] = 1.1;
    CHECK_FALSE(compute_metrics(e).first_day_RtSt_below_1.has_value());
}

TEST_CASE("export: CSV round-trip, metric cells and SVG panels") {
    const ModelParams p;
    const EnsembleResult e = simulate_closed_loop(p, NoPolicy{}, {0.5, 120.0, 8}, kStart, 64);
    const auto dir = std::filesystem::temp_directory_path() / "epictrl_export_test";
    std::filesystem::remove_all(dir);
    export_ensemble(e, dir, "none", "no lockdown");

    const std::string csv = slurp(dir / "none.csv");
    CHECK(csv.rfind("day,S_mean,S_lo,S_hi,I_mean,I_lo,I_hi,R_mean,R_lo,R_hi,beta_mean,beta_lo,beta_hi,xi_mean,xi_lo,"
                    "xi_hi,Rt_mean,Rt_lo,Rt_hi,RtSt_mean,RtSt_lo,RtSt_hi\n",
                    0) == 0);
    const EnsembleResult back = read_ensemble_csv(dir / "none.csv");
    REQUIRE(back.days == e.days);
    for (std::size_t q = 0; q < kSeriesCount; ++q)
        for (std::size_t d = 0; d < e.days.size(); ++d) {
            // the file holds 9 significant digits, so compare with the 9-digit rendering
            CHECK(std::abs(back.series[q].mean[d] - std::stod(fmt9(e.series[q].mean[d]))) <= 1e-12);
            CHECK(std::abs(back.series[q].lo[d] - std::stod(fmt9(e.series[q].lo[d]))) <= 1e-12);
            CHECK(std::abs(back.series[q].hi[d] - std::stod(fmt9(e.series[q].hi[d]))) <= 1e-12);
        }
    // exporting the re-parsed data reproduces the file byte for byte
    export_ensemble(back, dir / "again", "none");
    CHECK(slurp(dir / "again" / "none.csv") == csv);

    const std::string metrics_csv = slurp(dir / "none.metrics.csv");
    const std::string row = metrics_csv.substr(metrics_csv.find('\n') + 1);
    CHECK(row.rfind(",,,", 0) == 0);  // containment, onset and duration absent
    const std::string mjson = slurp(dir / "none.metrics.json");
    CHECK(mjson.find("\"first_containment_day\": null") != std::string::npos);
    CHECK(mjson.find("\"seed\": 8") != std::string::npos);

    const std::string svg = slurp(dir / "none.svg");
    const std::regex panel("<g class=\"panel\"");
    CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), panel), std::sregex_iterator()) == 4);
    for (const char* id : {"panel-xi", "panel-rt", "panel-sir", "panel-rtst"})
        CHECK(svg.find(id) != std::string::npos);
}

}
