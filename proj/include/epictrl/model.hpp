#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace epictrl {

/// How the lockdown cap enters the mean-reversion target of the transmission rate.
///
/// `paper`:      target = beta_hat * (L - xi)
/// `normalized`: target = beta_hat * (1 - xi), so the uncontrolled target is beta_hat for every L.
/// The two coincide when L = 1.
enum class DriftMode { paper, normalized };

std::string_view to_string(DriftMode mode);
DriftMode drift_mode_from_string(std::string_view name);

/// Scalar model constants. Time unit is one day.
struct ModelParams {
    double alpha = 1.0 / 18.0;   ///< recovery rate
    double theta = 0.1;          ///< mean-reversion speed of the transmission rate
    double beta_hat = 0.1;       ///< natural transmission level
    double gamma = 0.16;         ///< maximal transmission rate
    double sigma_vol = 1.0;      ///< volatility multiplier
    double lambda = 1.0 / 365.0; ///< effective discount rate
    double cap_L = 1.0;          ///< maximal lockdown intensity
    double y_bar = 0.1;          ///< health-system capacity (infected fraction)
    DriftMode drift_mode = DriftMode::paper;

    bool operator==(const ModelParams&) const = default;
};

/// Thrown by validate_params; what() names the violated invariant.
class ParamError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Returns `p` unchanged when every invariant holds, throws ParamError on the first violation.
ModelParams validate_params(const ModelParams& p);

/// Susceptible and infected fractions.
struct SirState {
    double s = 0.0;
    double i = 0.0;
};

/// A point of the state domain: susceptible, infected, transmission rate.
struct EpidemicState {
    double s = 0.0;
    double i = 0.0;
    double beta = 0.0;

    SirState sir() const { return {s, i}; }
};

/// Throws std::invalid_argument unless s > 0, i > 0, s + i <= 1.
void require_valid(const SirState& state);
/// Additionally requires 0 < beta < gamma.
void require_valid(const EpidemicState& state, const ModelParams& p);

/// Transmission-rate samples on a uniform time grid, beta_{k*dt}.
struct BetaPath {
    double dt = 1.0;
    std::vector<double> values;
};

namespace detail {

inline SirState sir_rhs(double s, double i, double beta, double alpha) {
    const double infections = beta * s * i;
    return {-infections, infections - alpha * i};
}

} // namespace detail

/// One classical RK4 step of dS = -beta S I dt, dI = (beta S I - alpha I) dt with beta frozen.
/// No precondition checks; the hot loops of the solver and simulator call this directly.
inline SirState sir_step_unchecked(const SirState& st, double beta, double alpha, double dt) {
    using detail::sir_rhs;
    const double h2 = 0.5 * dt;
    const SirState k1 = sir_rhs(st.s, st.i, beta, alpha);
    const SirState k2 = sir_rhs(st.s + h2 * k1.s, st.i + h2 * k1.i, beta, alpha);
    const SirState k3 = sir_rhs(st.s + h2 * k2.s, st.i + h2 * k2.i, beta, alpha);
    const SirState k4 = sir_rhs(st.s + dt * k3.s, st.i + dt * k3.i, beta, alpha);
    const double w = dt / 6.0;
    return {st.s + w * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
            st.i + w * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i)};
}

/// Checked RK4 step. Requires dt > 0, beta in [0, gamma] and a valid state.
SirState sir_step(const ModelParams& p, const SirState& st, double beta, double dt);

/// Runs sir_step over the path, beta held at its left-endpoint value on each step.
/// Output has one entry per path sample; entry 0 is `s0`.
std::vector<SirState> sir_along_path(const ModelParams& p, const SirState& s0, const BetaPath& path);

/// Final susceptible fraction of the deterministic SIR model with constant reproduction
/// number `r0`: the root in (0, s0) of s = s0 * exp(-r0 * (s0 + i0 - s)), found by bisection.
double final_size_susceptible(double s0, double i0, double r0);

} // namespace epictrl
