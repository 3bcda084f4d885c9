#include "epictrl/parallel.hpp"
#include "epictrl/rng.hpp"
#include "epictrl/sde.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace epictrl;

TEST_SUITE("sde") {

TEST_CASE("Philox4x32-10 known-answer vectors") {
    using W = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are stateless and roughly standard normal") {
    RngStream a(42, 7), b(42, 7), c(42, 8);
    double mean = 0.0, sq = 0.0, cross = 0.0;
    constexpr int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double x = a.next();
        CHECK_MESSAGE(x == b.gaussian_at(static_cast<std::uint64_t>(k)), "sample ", k);
        const double y = c.next();
        mean += x;
        sq += x * x;
        cross += x * y;
    }
    CHECK(std::abs(mean / n) < 5.0 / std::sqrt(n));
    CHECK(std::abs(sq / n - 1.0) < 0.02);
    CHECK(std::abs(cross / n) < 5.0 / std::sqrt(n));
}

TEST_CASE("drift examples") {
    ModelParams p;
    CHECK(drift(p, p.beta_hat, 0.0) == 0.0);
    CHECK(drift(p, 0.1, 1.0) == doctest::Approx(-0.01));
    p.cap_L = 0.2;
    CHECK(drift(p, 0.1, 0.0) == doctest::Approx(-0.008));
    p.drift_mode = DriftMode::normalized;
    CHECK(drift(p, 0.1, 0.0) == doctest::Approx(0.0));
    CHECK(drift(p, 0.1, 0.2) == doctest::Approx(0.1 * (0.1 * 0.8 - 0.1)));
}

TEST_CASE("clamped diffusion") {
    const ModelParams p;
    CHECK(diffusion_clamped(p, 0.08) == doctest::Approx(0.0064));
    CHECK(diffusion_clamped(p, 0.0) == 0.0);
    CHECK(diffusion_clamped(p, p.gamma) == 0.0);
    CHECK(diffusion_clamped(p, -0.01) == 0.0);
    CHECK(diffusion_clamped(p, 0.2) == 0.0);
    for (double z = 0.001; z < p.gamma; z += 0.001) CHECK(diffusion_clamped(p, z) <= 0.0064 + 1e-15);
}

TEST_CASE("em_step clamps and keeps stationary points") {
    const ModelParams p;
    bool clamped = false;
    CHECK(em_step(p, 0.1, 0.0, 1e6, 0.5, &clamped) == p.gamma);
    CHECK(clamped);
    CHECK(em_step(p, 0.1, 0.0, -1e6, 0.5, &clamped) == 0.0);
    CHECK(em_step(p, p.beta_hat, 0.0, 0.0, 0.5, &clamped) == p.beta_hat);
    CHECK_FALSE(clamped);
}

TEST_CASE("zero noise reproduces the linear ODE") {
    ModelParams p;
    p.sigma_vol = 0.0;
    const SdeScheme sch{0.01, 50.0, 1};
    const auto set = simulate_beta_paths(p, sch, 0.0, 1, 0.03);
    const auto& v = set.paths[0].values;
    for (std::size_t k = 0; k < v.size(); k += 100) {
        const double t = static_cast<double>(k) * sch.dt;
        CHECK(std::abs(v[k] - (p.beta_hat + (0.03 - p.beta_hat) * std::exp(-p.theta * t))) < 1e-4);
    }
}

TEST_CASE("scheme step count validation") {
    CHECK(SdeScheme{0.5, 300.0, 0}.n_steps() == 600);
    CHECK_THROWS(SdeScheme{0.7, 300.0, 0}.n_steps());
    CHECK_THROWS(SdeScheme{0.0, 300.0, 0}.n_steps());
    CHECK_THROWS(SdeScheme{1.0, 0.5, 0}.n_steps());
}

TEST_CASE("range, clamp budget and weak convergence with xi = 0") {
    const ModelParams p;
    const SdeScheme sch{0.5, 200.0, 3};
    const double z0 = 0.05;
    const auto set = simulate_beta_paths(p, sch, 0.0, 10000, z0);
    double sum = 0.0, sq = 0.0;
    for (const auto& path : set.paths) {
        for (double b : path.values) REQUIRE((b >= 0.0 && b <= p.gamma));
        sum += path.values.back();
        sq += path.values.back() * path.values.back();
    }
    CHECK(static_cast<double>(set.clamp_activations) < 1e-3 * static_cast<double>(set.total_steps));
    const double n = static_cast<double>(set.paths.size());
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    // the drift is linear in z, so the mean solves the ODE up to clamp effects
    const double ode = p.beta_hat + (z0 - p.beta_hat) * std::exp(-p.theta * 200.0);
    CHECK(std::abs(mean - ode) < 3.0 * se + 1e-12);
}

TEST_CASE("maximal lockdown eradicates on average") {
    const ModelParams p;
    const auto set = simulate_beta_paths(p, SdeScheme{0.5, 300.0, 5}, p.cap_L, 10000, p.beta_hat);
    double sum = 0.0;
    for (const auto& path : set.paths) sum += path.values.back();
    CHECK(sum / 10000.0 < 0.005);
}

TEST_CASE("comparison property under common noise") {
    const ModelParams p;
    const SdeScheme sch{0.5, 300.0, 9};
    const auto lo = simulate_beta_paths(p, sch, p.cap_L, 300, 0.1);
    const auto mid = simulate_beta_paths(
        p, sch, std::function<double(double, double)>([&](double t, double z) {
            return std::fmod(t, 40.0) < 20.0 ? p.cap_L * z / p.gamma : 0.3;
        }),
        300, 0.1);
    const auto hi = simulate_beta_paths(p, sch, 0.0, 300, 0.1);
    for (std::size_t k = 0; k < lo.paths.size(); ++k)
        for (std::size_t n = 0; n < lo.paths[k].values.size(); ++n) {
            REQUIRE(lo.paths[k].values[n] <= mid.paths[k].values[n]);
            REQUIRE(mid.paths[k].values[n] <= hi.paths[k].values[n]);
        }
}

TEST_CASE("paths do not depend on the thread count") {
    const ModelParams p;
    const SdeScheme sch{0.5, 100.0, 77};
    const unsigned saved = thread_count();
    set_thread_count(1);
    const auto a = simulate_beta_paths(p, sch, 0.2, 64, 0.1);
    set_thread_count(4);
    const auto b = simulate_beta_paths(p, sch, 0.2, 64, 0.1);
    set_thread_count(saved);
    for (std::size_t k = 0; k < a.paths.size(); ++k) CHECK(a.paths[k].values == b.paths[k].values);
    CHECK(a.clamp_activations == b.clamp_activations);
}

TEST_CASE("single noiseless path is the deterministic path") {
    ModelParams p;
    p.sigma_vol = 0.0;
    const auto a = simulate_beta_paths(p, SdeScheme{0.5, 20.0, 1}, 0.0, 1, 0.12);
    const auto b = simulate_beta_paths(p, SdeScheme{0.5, 20.0, 999}, 0.0, 1, 0.12);
    CHECK(a.paths[0].values == b.paths[0].values);
}

TEST_CASE("compensated summation") {
    CompensatedSum s;
    s.add(1e16);
    for (int k = 0; k < 1000; ++k) s.add(1.0);
    s.add(-1e16);
    CHECK(s.value() == 1000.0);
}

TEST_CASE("parallel_for rethrows") {
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                        if (i == 3) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
}

}
