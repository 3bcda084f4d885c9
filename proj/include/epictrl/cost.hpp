#pragma once

#include "epictrl/model.hpp"
#include "epictrl/sde.hpp"

namespace epictrl {

struct CostEval {
    double infection_cost = 0.0;
    double effort_cost = 0.0;
    double total = 0.0;
};

struct HamiltonianEval {
    double minimizer_xi = 0.0;
    double value = 0.0;
};

/// Quadratic running cost (y / y_bar)^2 + xi^2 / 2.
inline CostEval running_cost(const ModelParams& p, double y, double xi) {
    const double r = y / p.y_bar;
    CostEval c;
    c.infection_cost = r * r;
    c.effort_cost = 0.5 * xi * xi;
    c.total = c.infection_cost + c.effort_cost;
    return c;
}

/// Minimizer over [0, L] of xi^2/2 + drift(z, xi) * vz. The drift is affine in xi with
/// slope -theta * beta_hat in both drift modes, so the argmin is the clamp of theta*beta_hat*vz.
inline double feedback_xi(const ModelParams& p, double vz) {
    const double xi = p.theta * p.beta_hat * vz;
    if (!(xi > 0.0)) return 0.0;
    return xi < p.cap_L ? xi : p.cap_L;
}

/// Pointwise infimum over xi in [0, L] of C(y, xi) + drift(z, xi) * vz, with its argmin.
inline HamiltonianEval hamiltonian(const ModelParams& p, double y, double z, double vz) {
    HamiltonianEval h;
    h.minimizer_xi = feedback_xi(p, vz);
    h.value = running_cost(p, y, h.minimizer_xi).total + drift(p, z, h.minimizer_xi) * vz;
    return h;
}

} // namespace epictrl
