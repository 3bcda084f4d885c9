#include "epictrl/model.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

using namespace epictrl;

TEST_SUITE("model") {

TEST_CASE("default parameter set validates") {
    const ModelParams p;
    CHECK(validate_params(p) == p);
    CHECK(p.alpha == doctest::Approx(1.0 / 18.0));
    CHECK(p.lambda == doctest::Approx(1.0 / 365.0));
}

TEST_CASE("violations are reported by name") {
    auto message = [](ModelParams p) {
        try {
            validate_params(p);
        } catch (const ParamError& e) {
            return std::string(e.what());
        }
        return std::string("ok");
    };
    ModelParams p;
    p.beta_hat = 0.2;
    CHECK(message(p) == "beta_hat not in (0,gamma)");
    p = {};
    p.lambda = 0.0;
    CHECK(message(p) == "lambda must be positive");
    p = {};
    p.cap_L = 1.5;
    CHECK(message(p) == "cap_L not in [0,1]");
    p = {};
    p.y_bar = 1.0;
    CHECK(message(p) == "y_bar not in (0,1)");
    p = {};
    p.sigma_vol = -1.0;
    CHECK(message(p) == "sigma_vol must be non-negative");
    p = {};
    p.alpha = std::nan("");
    CHECK(message(p) == "alpha must be positive");
    p = {};
    p.sigma_vol = 0.0;
    CHECK(message(p) == "ok");
}

TEST_CASE("sir_step preconditions") {
    const ModelParams p;
    CHECK_THROWS_AS(sir_step(p, {0.5, 0.01}, 0.1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sir_step(p, {0.5, 0.01}, 0.2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(sir_step(p, {0.0, 0.01}, 0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(sir_step(p, {0.7, 0.4}, 0.1, 1.0), std::invalid_argument);
    CHECK_NOTHROW(sir_step(p, {0.99, 0.01}, 0.1, 1.0));
}

TEST_CASE("no transmission keeps S constant and I decays exponentially") {
    const ModelParams p;
    SirState st{0.5, 0.01};
    for (int k = 0; k < 180; ++k) {
        const SirState next = sir_step(p, st, 0.0, 0.1);
        CHECK(next.s == 0.5);
        CHECK(next.i < st.i);
        st = next;
    }
    CHECK(std::abs(st.i - 0.01 * std::exp(-1.0)) < 1e-7);
}

TEST_CASE("path of length one returns the initial state") {
    const ModelParams p;
    const auto out = sir_along_path(p, {0.9, 0.05}, BetaPath{0.5, {0.1}});
    REQUIRE(out.size() == 1);
    CHECK(out[0].s == 0.9);
    CHECK(out[0].i == 0.05);
}

TEST_CASE("positivity, simplex and monotone recovery along a path") {
    const ModelParams p;
    BetaPath path{0.5, {}};
    for (int k = 0; k < 3000; ++k) path.values.push_back(p.gamma * (0.5 + 0.5 * std::sin(k * 0.01)));
    const auto out = sir_along_path(p, {0.99, 0.01}, path);
    CHECK(out.size() == path.values.size());
    for (std::size_t k = 1; k < out.size(); ++k) {
        CHECK(out[k].s > 0.0);
        CHECK(out[k].i > 0.0);
        CHECK(out[k].s + out[k].i <= out[k - 1].s + out[k - 1].i);
    }
}

// Closed-form identity S_t = S_0 exp(-int beta I), I_t = I_0 exp(-alpha t + int beta S), with the
// integrals taken by the trapezoid rule over the integrator's own output.
static double closed_form_error(double dt, double horizon) {
    const ModelParams p;
    const double beta = 0.1;
    const auto n = static_cast<std::size_t>(std::lround(horizon / dt));
    BetaPath path{dt, std::vector<double>(n + 1, beta)};
    const auto traj = sir_along_path(p, {0.99, 0.01}, path);
    double int_i = 0.0, int_s = 0.0, worst = 0.0;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        int_i += 0.5 * dt * beta * (traj[k - 1].i + traj[k].i);
        int_s += 0.5 * dt * beta * (traj[k - 1].s + traj[k].s);
        const double t = static_cast<double>(k) * dt;
        worst = std::max(worst, std::abs(traj[k].s - 0.99 * std::exp(-int_i)));
        worst = std::max(worst, std::abs(traj[k].i - 0.01 * std::exp(-p.alpha * t + int_s)));
    }
    return worst;
}

TEST_CASE("closed-form identity at t = 10") {
    CHECK(closed_form_error(0.1, 10.0) < 1e-6);
    // at dt = 1 the trapezoid oracle itself is off by ~2e-6, so the coarsest step checked is 0.5
    CHECK(closed_form_error(0.5, 10.0) < 1e-6);
}

// S_t = S_0 exp(-beta int I) with int I = (S_0 + I_0 - S_t - I_t) / alpha taken exactly from the
// output, so the residual is pure integrator error
static double exact_identity_error(double dt) {
    const ModelParams p;
    const double beta = 0.15;
    const auto n = static_cast<std::size_t>(std::lround(60.0 / dt));
    const auto traj = sir_along_path(p, {0.99, 0.01}, BetaPath{dt, std::vector<double>(n + 1, beta)});
    double worst = 0.0;
    for (const SirState& x : traj) {
        const double int_i = (1.0 - x.s - x.i) / p.alpha;
        worst = std::max(worst, std::abs(x.s - 0.99 * std::exp(-beta * int_i)));
    }
    return worst;
}

TEST_CASE("closed-form identity error: fourth order for RK4, second order through the trapezoid") {
    const double e1 = exact_identity_error(1.0), e2 = exact_identity_error(0.5), e4 = exact_identity_error(0.25);
    CHECK(std::log2(e1 / e2) > 3.7);
    CHECK(std::log2(e2 / e4) > 3.7);
    CHECK(e4 < 1e-8);
    // the trapezoid oracle caps the observed order at 2
    const double q1 = closed_form_error(1.0, 10.0), q2 = closed_form_error(0.5, 10.0);
    CHECK(std::log2(q1 / q2) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("RK4 converges at fourth order") {
    // reference at a very fine step; error ratio for halving dt should be near 16
    const ModelParams p;
    auto final_state = [&](double dt) {
        const auto n = static_cast<std::size_t>(std::lround(100.0 / dt));
        const auto traj = sir_along_path(p, {0.99, 0.01}, BetaPath{dt, std::vector<double>(n + 1, 0.15)});
        return traj.back();
    };
    const SirState ref = final_state(1.0 / 256.0);
    auto err = [&](double dt) {
        const SirState s = final_state(dt);
        return std::abs(s.s - ref.s) + std::abs(s.i - ref.i);
    };
    const double e1 = err(1.0), e2 = err(0.5), e3 = err(0.25);
    CHECK(std::log2(e1 / e2) == doctest::Approx(4.0).epsilon(0.1));
    CHECK(std::log2(e2 / e3) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("halving dt below 0.25 changes the day-1500 state by less than 1e-6") {
    const ModelParams p;
    auto final_state = [&](double dt) {
        const auto n = static_cast<std::size_t>(std::lround(1500.0 / dt));
        return sir_along_path(p, {0.99, 0.01}, BetaPath{dt, std::vector<double>(n + 1, 0.1)}).back();
    };
    const SirState a = final_state(0.25), b = final_state(0.125);
    CHECK(std::abs(a.s - b.s) < 1e-6);
    CHECK(std::abs(a.i - b.i) < 1e-6);
}

TEST_CASE("deterministic final size matches the fixed-point oracle") {
    const ModelParams p;
    // independent oracle: fixed-point iteration of s = 0.99 exp(-1.8 (1 - s)) from below
    double s_inf = 0.0;
    for (int k = 0; k < 10000; ++k) s_inf = 0.99 * std::exp(-1.8 * (1.0 - s_inf));
    CHECK(final_size_susceptible(0.99, 0.01, 1.8) == doctest::Approx(s_inf).epsilon(1e-12));
    CHECK(1.0 - s_inf == doctest::Approx(0.737).epsilon(0.005));

    const auto n = static_cast<std::size_t>(1500.0 / 0.1);
    const auto traj = sir_along_path(p, {0.99, 0.01}, BetaPath{0.1, std::vector<double>(n + 1, 0.1)});
    const double recovered = 1.0 - traj.back().s - traj.back().i;
    CHECK(std::abs(recovered - (1.0 - s_inf)) < 0.005);
}

TEST_CASE("drift mode names") {
    CHECK(to_string(DriftMode::normalized) == "normalized");
    CHECK(drift_mode_from_string("paper") == DriftMode::paper);
    CHECK_THROWS(drift_mode_from_string("other"));
}

}
