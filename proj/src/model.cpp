#include "epictrl/model.hpp"

#include <cmath>

namespace epictrl {

std::string_view to_string(DriftMode mode) {
    return mode == DriftMode::paper ? "paper" : "normalized";
}

DriftMode drift_mode_from_string(std::string_view name) {
    if (name == "paper") return DriftMode::paper;
    if (name == "normalized") return DriftMode::normalized;
    throw std::invalid_argument("unknown drift_mode '" + std::string(name) + "'");
}

ModelParams validate_params(const ModelParams& p) {
    auto fail = [](const char* what) { throw ParamError(what); };
    // NaN fails every comparison below, so it is rejected as well.
    if (!(p.alpha > 0.0)) fail("alpha must be positive");
    if (!(p.theta > 0.0)) fail("theta must be positive");
    if (!(p.gamma > 0.0)) fail("gamma must be positive");
    if (!(p.sigma_vol >= 0.0)) fail("sigma_vol must be non-negative");
    if (!(p.lambda > 0.0)) fail("lambda must be positive");
    if (!(p.beta_hat > 0.0 && p.beta_hat < p.gamma)) fail("beta_hat not in (0,gamma)");
    if (!(p.cap_L >= 0.0 && p.cap_L <= 1.0)) fail("cap_L not in [0,1]");
    if (!(p.y_bar > 0.0 && p.y_bar < 1.0)) fail("y_bar not in (0,1)");
    return p;
}

void require_valid(const SirState& st) {
    // s + i = 1 (no recovered yet) is admitted; the dynamics leave it immediately.
    if (!(st.s > 0.0 && st.i > 0.0 && st.s + st.i <= 1.0))
        throw std::invalid_argument("SIR state outside domain: need s>0, i>0, s+i<=1");
}

void require_valid(const EpidemicState& st, const ModelParams& p) {
    require_valid(st.sir());
    if (!(st.beta > 0.0 && st.beta < p.gamma))
        throw std::invalid_argument("transmission rate outside (0,gamma)");
}

SirState sir_step(const ModelParams& p, const SirState& st, double beta, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("sir_step: dt must be positive");
    if (!(beta >= 0.0 && beta <= p.gamma)) throw std::invalid_argument("sir_step: beta not in [0,gamma]");
    require_valid(st);
    return sir_step_unchecked(st, beta, p.alpha, dt);
}

std::vector<SirState> sir_along_path(const ModelParams& p, const SirState& s0, const BetaPath& path) {
    require_valid(s0);
    if (path.values.empty()) throw std::invalid_argument("sir_along_path: empty beta path");
    std::vector<SirState> out;
    out.reserve(path.values.size());
    out.push_back(s0);
    for (std::size_t k = 0; k + 1 < path.values.size(); ++k)
        out.push_back(sir_step(p, out.back(), path.values[k], path.dt));
    return out;
}

double final_size_susceptible(double s0, double i0, double r0) {
    if (!(s0 > 0.0 && i0 >= 0.0 && r0 > 0.0))
        throw std::invalid_argument("final_size_susceptible: invalid arguments");
    const double total = s0 + i0;
    auto g = [&](double s) { return s - s0 * std::exp(-r0 * (total - s)); };
    // g is concave with g(0) < 0 <= g(s0): exactly one sign change on (0, s0].
    double lo = 0.0;
    double hi = s0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace epictrl
