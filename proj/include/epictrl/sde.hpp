#pragma once

#include "epictrl/model.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

namespace epictrl {

/// Mean-reverting drift of the transmission rate under lockdown intensity xi.
inline double drift(const ModelParams& p, double z, double xi) {
    const double level = p.drift_mode == DriftMode::paper ? p.cap_L - xi : 1.0 - xi;
    return p.theta * (p.beta_hat * level - z);
}

/// sigma * z * (gamma - z) on (0, gamma), zero outside.
inline double diffusion_clamped(const ModelParams& p, double z) {
    if (z <= 0.0 || z >= p.gamma) return 0.0;
    return p.sigma_vol * z * (p.gamma - z);
}

/// Euler-Maruyama step followed by a clamp to [0, gamma].
/// `dw` is the Brownian increment, i.e. already scaled by sqrt(dt).
/// `clamped`, when given, is set to whether the clamp changed the raw update.
inline double em_step(const ModelParams& p, double z, double xi, double dw, double dt,
                      bool* clamped = nullptr) {
    const double raw = z + drift(p, z, xi) * dt + diffusion_clamped(p, z) * dw;
    const double out = raw < 0.0 ? 0.0 : (raw > p.gamma ? p.gamma : raw);
    if (clamped) *clamped = out != raw;
    return out;
}

/// Time discretization plus reproducibility seed.
struct SdeScheme {
    double dt = 0.5;
    double horizon = 300.0;
    std::uint64_t seed = 20200601;

    /// Number of steps; throws unless dt > 0, horizon >= dt and horizon/dt is an integer.
    std::size_t n_steps() const;
};

/// Either a constant lockdown intensity or a callback (t, z) -> xi.
using BetaPolicy = std::variant<double, std::function<double(double, double)>>;

struct BetaPathSet {
    std::vector<BetaPath> paths;
    std::uint64_t clamp_activations = 0;
    std::uint64_t total_steps = 0;
};

/// Simulates `n_paths` transmission-rate paths from `z0`; path k draws its increments from
/// RngStream(scheme.seed, k). Output is identical for any thread count.
BetaPathSet simulate_beta_paths(const ModelParams& p, const SdeScheme& scheme, const BetaPolicy& policy,
                                std::size_t n_paths, double z0);

} // namespace epictrl
