#include "epictrl/cost.hpp"
#include "epictrl/parallel.hpp"
#include "epictrl/solver.hpp"

#include <doctest.h>

#include <cmath>

using namespace epictrl;

namespace {

SolverConfig small_config() {
    SolverConfig c;
    c.n_paths = 48;
    c.dt = 1.0;
    c.horizon = 1100.0;
    c.max_iterations = 8;
    c.tolerance = 0.05;
    return c;
}

GridSpec small_spec() {
    GridSpec s;
    s.nx = 7;
    s.ny = 7;
    s.nz = 5;
    s.x_lo = 0.2;
    s.y_lo = 0.001;
    s.y_hi = 0.2;
    return s;
}

// Fine-step RK4 plus trapezoid rule for the discounted infection cost of the deterministic model.
double deterministic_cost(const ModelParams& p, double s, double i, double beta, double horizon) {
    const double h = 0.01;
    const auto n = static_cast<std::size_t>(horizon / h);
    SirState st{s, i};
    double total = 0.0;
    double prev = (i / p.y_bar) * (i / p.y_bar);
    for (std::size_t k = 1; k <= n; ++k) {
        st = sir_step_unchecked(st, beta, p.alpha, h);
        const double t = static_cast<double>(k) * h;
        const double f = std::exp(-p.lambda * t) * (st.i / p.y_bar) * (st.i / p.y_bar);
        total += 0.5 * h * (prev + f);
        prev = f;
    }
    return total;
}

} // namespace

TEST_SUITE("solver") {

TEST_CASE("config validation") {
    const ModelParams p;
    SolverConfig c;
    CHECK_NOTHROW(validate_config(c, p));
    c.horizon = 1000.0;  // lambda * T < 3
    CHECK_THROWS(validate_config(c, p));
    c = {};
    c.tolerance = 0.0;
    CHECK_THROWS(validate_config(c, p));
    c = {};
    c.dt = 0.7;
    CHECK_THROWS(validate_config(c, p));
    CHECK(solver_scheme_from_string("policy_iteration") == SolverScheme::policy_iteration);
    CHECK(integrand_form_from_string("literal") == IntegrandForm::literal);
    CHECK_THROWS(solver_scheme_from_string("x"));
}

TEST_CASE("fingerprint") {
    const ModelParams p;
    const SolverConfig c;
    const GridSpec s;
    const auto base = fingerprint(p, c, s);
    ModelParams q = p;
    q.sigma_vol = 5.0;
    CHECK(fingerprint(q, c, s) != base);
    SolverConfig d = c;
    d.seed = 1;
    CHECK(fingerprint(p, d, s) != base);
    d = c;
    d.shared_beta_paths = false;
    CHECK(fingerprint(p, d, s) == base);
    GridSpec t = s;
    t.nz = 12;
    CHECK(fingerprint(p, c, t) != base);
    // drift modes coincide at L = 1 but not below
    q = p;
    q.drift_mode = DriftMode::normalized;
    CHECK(fingerprint(q, c, s) == base);
    q.cap_L = 0.5;
    ModelParams r = q;
    r.drift_mode = DriftMode::paper;
    CHECK(fingerprint(q, c, s) != fingerprint(r, c, s));
}

TEST_CASE("constant integrand gives the geometric sum") {
    const ModelParams p;
    SolverConfig c;
    c.n_paths = 16;
    c.extinction_threshold = 0.0;
    const double k = 2.5;
    const FkEstimate e = feynman_kac_custom(p, c, {0.99, 0.01, 0.1}, [&](double, double, double, double) { return k; });
    const double exact = k * (1.0 - std::exp(-p.lambda * c.horizon)) / p.lambda;
    CHECK(std::abs(e.mean - exact) <= k * c.dt * p.lambda * c.horizon);
    CHECK(e.std_error == 0.0);
}

TEST_CASE("noiseless zero-grid value matches the deterministic quadrature oracle") {
    ModelParams p;
    p.sigma_vol = 0.0;
    SolverConfig c;
    c.n_paths = 4;
    const ValueGrid zero = make_zero_grid(small_spec());
    const FkEstimate e = feynman_kac_value(p, c, zero, {0.99, 0.01, 0.1});
    const double oracle = deterministic_cost(p, 0.99, 0.01, 0.1, c.horizon);
    CHECK(e.mean == doctest::Approx(oracle).epsilon(1e-3));
}

TEST_CASE("no infection, no cost") {
    const ModelParams p;
    SolverConfig c;
    c.n_paths = 8;
    const ValueGrid zero = make_zero_grid(small_spec());
    const double tiny = feynman_kac_value(p, c, zero, {0.5, 1e-8, 0.1}).mean;
    CHECK(tiny >= 0.0);
    CHECK(tiny < 1e-9);
}

TEST_CASE("first sweep is the xi = 0 cost-to-go in both schemes") {
    const ModelParams p;
    SolverConfig c = small_config();
    c.max_iterations = 1;
    const GridSpec s = small_spec();
    const SolveResult pi = solve(p, c, s);
    c.scheme = SolverScheme::uncontrolled_recursion;
    const SolveResult ur = solve(p, c, s);
    CHECK(pi.grid.v == ur.grid.v);
    for (int ix : {0, 3, 6})
        for (int iy : {0, 2, 4})
            for (int iz : {0, 2, 4}) {
                if (!s.active(ix, iy)) continue;
                const EpidemicState q{s.x(ix), s.y(iy), s.z(iz)};
                const FkEstimate e = feynman_kac_custom(p, c, q, [&](double, double, double i, double) {
                    return running_cost(p, i, 0.0).total;
                });
                CHECK(pi.grid.v[s.index(ix, iy, iz)] == doctest::Approx(e.mean).epsilon(1e-12));
                CHECK(pi.grid.v[s.index(ix, iy, iz)] >= 0.0);
            }
    CHECK_FALSE(pi.grid.converged);
    CHECK(pi.grid.iteration == 1);
}

TEST_CASE("policy iteration contracts on a small instance and respects the value bound") {
    const ModelParams p;
    SolverConfig c = small_config();
    c.horizon = 1500.0;
    c.max_iterations = 12;
    const SolveResult r = solve(p, c, small_spec());
    REQUIRE(r.grid.converged);
    const auto& h = r.grid.residual_history;
    for (std::size_t k = 3; k < h.size(); ++k) CHECK(h[k] < h[k - 1]);
    CHECK(r.grid.residual < 0.005 * r.diagnostics.sup_v);
    const double bound = max_running_cost(p) / p.lambda;
    for (double v : r.grid.v) {
        CHECK(v >= 0.0);
        CHECK(v <= bound);
    }
    // stored vz is the z-difference of the stored v
    const auto again = derive_vz(r.grid.spec, r.grid.v);
    for (std::size_t n = 0; n < again.size(); ++n) CHECK(std::abs(again[n] - r.grid.vz[n]) < 1e-12);
    // continuation estimate of the truncated tail stays under 5% of sup v
    CHECK(r.diagnostics.max_tail_estimate < 0.05 * r.diagnostics.sup_v);
    CHECK(r.diagnostics.apriori_tail_bound ==
          doctest::Approx(max_running_cost(p) * std::exp(-p.lambda * c.horizon) / p.lambda));
}

TEST_CASE("value is monotone in L and in y within two standard errors") {
    // with the normalized drift L only caps the control, so a larger L can only lower v
    ModelParams p;
    p.drift_mode = DriftMode::normalized;
    ModelParams half = p;
    half.cap_L = 0.5;
    const SolverConfig c = small_config();
    const GridSpec s = small_spec();
    const SolveResult full = solve(p, c, s);
    const SolveResult capped = solve(half, c, s);
    for (int ix = 0; ix < s.nx; ++ix)
        for (int iy = 0; iy < s.ny; ++iy)
            for (int iz = 0; iz < s.nz; ++iz) {
                if (!s.active(ix, iy)) continue;
                const std::size_t n = s.index(ix, iy, iz);
                const double se = std::hypot(full.grid.v_stderr[n], capped.grid.v_stderr[n]);
                CHECK(full.grid.v[n] <= capped.grid.v[n] + 2.0 * se);
                if (iy + 1 < s.ny && s.active(ix, iy + 1)) {
                    const std::size_t m = s.index(ix, iy + 1, iz);
                    CHECK(full.grid.v[n] <= full.grid.v[m] + 2.0 * std::hypot(full.grid.v_stderr[n], full.grid.v_stderr[m]));
                }
            }
}

TEST_CASE("paper drift: lowering L also lowers the natural transmission level") {
    // reversion target beta_hat * L: at L = 0.5 the no-lockdown R0 is 0.5 * 0.1 * 18 = 0.9 < 1,
    // so v(L = 0.5) sits below v(L = 1) wherever infection is present
    const ModelParams p;
    ModelParams half = p;
    half.cap_L = 0.5;
    CHECK(half.beta_hat * half.cap_L / half.alpha < 1.0);
    const SolverConfig c = small_config();
    const GridSpec s = small_spec();
    const SolveResult full = solve(p, c, s);
    const SolveResult capped = solve(half, c, s);
    for (std::size_t n = 0; n < full.grid.v.size(); ++n)
        if (full.grid.v[n] > 0.0) CHECK(capped.grid.v[n] < full.grid.v[n]);
}

TEST_CASE("solve is deterministic across thread counts and increment sharing") {
    const ModelParams p;
    SolverConfig c = small_config();
    c.max_iterations = 3;
    const GridSpec s = small_spec();
    const unsigned saved = thread_count();
    set_thread_count(1);
    const SolveResult a = solve(p, c, s);
    set_thread_count(3);
    const SolveResult b = solve(p, c, s);
    c.shared_beta_paths = false;
    const SolveResult d = solve(p, c, s);
    set_thread_count(saved);
    CHECK(a.grid == b.grid);
    CHECK(a.grid.v == d.grid.v);
    CHECK(a.grid.vz == d.grid.vz);
}

TEST_CASE("uncontrolled recursion shares beta paths without changing results") {
    const ModelParams p;
    SolverConfig c = small_config();
    c.max_iterations = 2;
    c.scheme = SolverScheme::uncontrolled_recursion;
    const GridSpec s = small_spec();
    const SolveResult a = solve(p, c, s);
    c.shared_beta_paths = false;
    const SolveResult b = solve(p, c, s);
    CHECK(a.grid.v == b.grid.v);
    c.integrand = IntegrandForm::literal;
    const SolveResult lit = solve(p, c, s);
    CHECK(lit.grid.residual_history.size() == 2);
}

TEST_CASE("worst-case infection tail bound dominates the realized tail") {
    const ModelParams p;
    // realized cost from (s, i) along the worst transmission rate gamma is below the bound
    for (double s : {0.3, 0.6, 0.9})
        for (double i : {0.001, 0.01, 0.05}) {
            const double realized = deterministic_cost(p, s, i, p.gamma, 3000.0);
            CHECK(realized <= infection_tail_bound(p, s, i) * (1.0 + 1e-9));
        }
    CHECK(infection_tail_bound(p, 0.5, 0.0) == 0.0);
}

}
