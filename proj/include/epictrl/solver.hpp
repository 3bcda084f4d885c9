#pragma once

#include "epictrl/grid.hpp"
#include "epictrl/model.hpp"

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

namespace epictrl {

/// How each sweep evaluates the next iterate.
///
/// `policy_iteration`: paths follow the feedback induced by the previous iterate's vz and the
///                     integrand is the running cost C(I, xi) of that feedback (Howard).
/// `uncontrolled_recursion`: paths follow xi = 0 and the control enters only through the
///                     integrand, see IntegrandForm.
/// Both start from v = 0, so the first sweep is the xi = 0 cost-to-go in either scheme.
enum class SolverScheme { policy_iteration, uncontrolled_recursion };

std::string_view to_string(SolverScheme scheme);
SolverScheme solver_scheme_from_string(std::string_view name);

/// Integrand used along the uncontrolled (xi = 0) paths of the uncontrolled recursion.
///
/// `consistent`: C(y, xi*) + (b(z, xi*) - b(z, 0)) * vz. The uncontrolled drift is already
///               carried by the paths, so only the control-induced drift change enters the
///               integrand and the fixed point solves the HJB equation.
/// `literal`:    the full Hamiltonian C(y, xi*) + b(z, xi*) * vz.
enum class IntegrandForm { consistent, literal };

std::string_view to_string(IntegrandForm form);
IntegrandForm integrand_form_from_string(std::string_view name);

struct SolverConfig {
    std::size_t n_paths = 200;      ///< Monte Carlo paths per node
    double dt = 0.5;                ///< days
    double horizon = 1500.0;        ///< truncation horizon, days
    int max_iterations = 30;
    double tolerance = 0.05;        ///< sup-norm change that stops the recursion
    std::uint64_t seed = 20200601;
    /// Reuse per-z-node beta paths (uncontrolled recursion) and the per-path Gaussian
    /// increments (both schemes) across nodes and sweeps instead of regenerating them.
    bool shared_beta_paths = true;
    SolverScheme scheme = SolverScheme::policy_iteration;
    IntegrandForm integrand = IntegrandForm::consistent;
    /// A path stops early once I falls below this level while gamma * S < alpha (I can no
    /// longer grow). 0 disables the cutoff.
    double extinction_threshold = 1e-9;

    bool operator==(const SolverConfig&) const = default;
};

/// Throws std::invalid_argument unless the config is usable with `p`; in particular the
/// horizon must satisfy horizon * lambda >= 3.
void validate_config(const SolverConfig& cfg, const ModelParams& p);

/// FNV-1a hash of the exact bit patterns of every parameter that determines a solve.
std::uint64_t fingerprint(const ModelParams& p, const SolverConfig& cfg, const GridSpec& spec);

struct FkEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    /// Mean over paths of an upper bound on the discarded infection-cost tail beyond the
    /// truncation point (horizon or early stop).
    double tail_bound = 0.0;
    /// Mean discounted value of the previous iterate at the truncation point: an estimate (not
    /// a bound) of the same tail. Zero from feynman_kac_custom.
    double tail_estimate = 0.0;
    std::uint64_t clamped_queries = 0;
    std::uint64_t steps = 0;
};

/// Discounted running-cost estimate from state `q` given the previous iterate `g_prev`, under
/// cfg.scheme. Path j uses RngStream(cfg.seed, j) for every node and sweep, so nodes and
/// sweeps share common random numbers.
FkEstimate feynman_kac_value(const ModelParams& p, const SolverConfig& cfg, const ValueGrid& g_prev,
                             const EpidemicState& q);

/// Same estimate with the integrand replaced by `integrand(t, S, I, beta)`; used to check the
/// quadrature and discounting in isolation.
FkEstimate feynman_kac_custom(const ModelParams& p, const SolverConfig& cfg, const EpidemicState& q,
                              const std::function<double(double, double, double, double)>& integrand);

struct SolveDiagnostics {
    double apriori_tail_bound = 0.0;   ///< C_max * exp(-lambda T) / lambda
    double max_tail_bound = 0.0;       ///< largest per-node a-posteriori tail bound
    double max_tail_estimate = 0.0;    ///< largest per-node continuation estimate of the tail
    double sup_v = 0.0;
    double clamped_query_fraction = 0.0;
    double seconds = 0.0;
};

struct SolveResult {
    ValueGrid grid;
    SolveDiagnostics diagnostics;
};

using SolveProgress = std::function<void(int iteration, double residual, double sup_v)>;

/// Value recursion from v = 0: each sweep re-evaluates every active node with the previous
/// grid's z-derivative, pads inactive nodes, and recomputes vz by finite differences.
/// Stops when the sup-norm change drops below cfg.tolerance or after max_iterations; in the
/// latter case the grid is returned with converged = false.
SolveResult solve(const ModelParams& p, const SolverConfig& cfg, const GridSpec& spec,
                  const SolveProgress& progress = {});

/// Upper bound on the running cost of C(I, 0) over [0, inf) discounted at lambda, for a path
/// currently at (s, i): I grows at most at rate gamma*s - alpha and never exceeds s + i.
double infection_tail_bound(const ModelParams& p, double s, double i);

/// Largest running cost over the admissible set, (1 / y_bar)^2 + L^2 / 2.
double max_running_cost(const ModelParams& p);

} // namespace epictrl
