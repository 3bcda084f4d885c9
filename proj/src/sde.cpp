#include "epictrl/sde.hpp"

#include "epictrl/parallel.hpp"
#include "epictrl/rng.hpp"

#include <stdexcept>

namespace epictrl {

std::size_t SdeScheme::n_steps() const {
    if (!(dt > 0.0)) throw std::invalid_argument("scheme dt must be positive");
    if (!(horizon >= dt)) throw std::invalid_argument("scheme horizon must be at least dt");
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument("scheme horizon must be an integer multiple of dt");
    return static_cast<std::size_t>(rounded);
}

BetaPathSet simulate_beta_paths(const ModelParams& p, const SdeScheme& scheme, const BetaPolicy& policy,
                                std::size_t n_paths, double z0) {
    if (n_paths < 1) throw std::invalid_argument("simulate_beta_paths: n_paths must be >= 1");
    if (!(z0 >= 0.0 && z0 <= p.gamma)) throw std::invalid_argument("simulate_beta_paths: z0 not in [0,gamma]");
    const std::size_t steps = scheme.n_steps();
    const double sqrt_dt = std::sqrt(scheme.dt);

    BetaPathSet out;
    out.paths.resize(n_paths);
    std::vector<std::uint64_t> clamps(n_paths, 0);

    parallel_for(n_paths, [&](std::size_t k) {
        RngStream rng(scheme.seed, k);
        BetaPath& path = out.paths[k];
        path.dt = scheme.dt;
        path.values.resize(steps + 1);
        double z = z0;
        path.values[0] = z;
        for (std::size_t n = 0; n < steps; ++n) {
            const double t = static_cast<double>(n) * scheme.dt;
            const double xi = std::holds_alternative<double>(policy)
                                  ? std::get<double>(policy)
                                  : std::get<1>(policy)(t, z);
            bool clamped = false;
            z = em_step(p, z, xi, sqrt_dt * rng.next(), scheme.dt, &clamped);
            clamps[k] += clamped ? 1 : 0;
            path.values[n + 1] = z;
        }
    });

    for (auto c : clamps) out.clamp_activations += c;
    out.total_steps = static_cast<std::uint64_t>(steps) * n_paths;
    return out;
}

} // namespace epictrl
