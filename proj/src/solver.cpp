#include "epictrl/solver.hpp"

#include "epictrl/cost.hpp"
#include "epictrl/parallel.hpp"
#include "epictrl/rng.hpp"
#include "epictrl/sde.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace epictrl {

std::string_view to_string(IntegrandForm form) {
    return form == IntegrandForm::consistent ? "consistent" : "literal";
}

std::string_view to_string(SolverScheme scheme) {
    return scheme == SolverScheme::policy_iteration ? "policy_iteration" : "uncontrolled_recursion";
}

SolverScheme solver_scheme_from_string(std::string_view name) {
    if (name == "policy_iteration") return SolverScheme::policy_iteration;
    if (name == "uncontrolled_recursion") return SolverScheme::uncontrolled_recursion;
    throw std::invalid_argument("unknown solver scheme '" + std::string(name) + "'");
}

IntegrandForm integrand_form_from_string(std::string_view name) {
    if (name == "consistent") return IntegrandForm::consistent;
    if (name == "literal") return IntegrandForm::literal;
    throw std::invalid_argument("unknown integrand form '" + std::string(name) + "'");
}

void validate_config(const SolverConfig& cfg, const ModelParams& p) {
    auto fail = [](const char* what) { throw std::invalid_argument(what); };
    if (cfg.n_paths < 1) fail("solver n_paths must be >= 1");
    if (cfg.max_iterations < 1) fail("solver max_iterations must be >= 1");
    if (!(cfg.tolerance > 0.0)) fail("solver tolerance must be positive");
    if (!(cfg.extinction_threshold >= 0.0)) fail("solver extinction_threshold must be non-negative");
    SdeScheme{cfg.dt, cfg.horizon, cfg.seed}.n_steps();
    if (!(cfg.horizon * p.lambda >= 3.0)) fail("solver horizon too short: need horizon * lambda >= 3");
}

namespace {

class Fnv1a {
public:
    void add(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h_ ^= (v >> (8 * b)) & 0xFF;
            h_ *= 0x100000001B3ull;
        }
    }
    void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
    void add(int v) { add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
    void add(bool v) { add(static_cast<std::uint64_t>(v)); }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xCBF29CE484222325ull;
};

} // namespace

std::uint64_t fingerprint(const ModelParams& p, const SolverConfig& cfg, const GridSpec& s) {
    Fnv1a h;
    for (double d : {p.alpha, p.theta, p.beta_hat, p.gamma, p.sigma_vol, p.lambda, p.cap_L, p.y_bar}) h.add(d);
    // the two drift modes coincide at L = 1; hashing a canonical mode lets them share a grid
    h.add(p.cap_L == 1.0 ? 0 : static_cast<int>(p.drift_mode));
    h.add(static_cast<std::uint64_t>(cfg.n_paths));
    h.add(cfg.dt);
    h.add(cfg.horizon);
    h.add(cfg.max_iterations);
    h.add(cfg.tolerance);
    h.add(cfg.seed);
    // shared_beta_paths changes scheduling only, not results, so it is left out
    h.add(static_cast<int>(cfg.scheme));
    h.add(static_cast<int>(cfg.integrand));
    h.add(cfg.extinction_threshold);
    for (int n : {s.nx, s.ny, s.nz}) h.add(n);
    for (double d : {s.x_lo, s.x_hi, s.y_lo, s.y_hi, s.z_lo, s.z_hi, s.simplex_cap}) h.add(d);
    return h.value();
}

double max_running_cost(const ModelParams& p) {
    return 1.0 / (p.y_bar * p.y_bar) + 0.5 * p.cap_L * p.cap_L;
}

double infection_tail_bound(const ModelParams& p, double s, double i) {
    if (i <= 0.0) return 0.0;
    const double c0 = (i / p.y_bar) * (i / p.y_bar);
    const double growth = p.gamma * s - p.alpha;
    if (growth < 0.0) return c0 / (p.lambda - 2.0 * growth);
    const double cap = std::min(1.0, s + i);
    if (growth == 0.0) return c0 / p.lambda;
    const double t_cap = std::log(cap / i) / growth;
    const double rate = 2.0 * growth - p.lambda;
    const double rising = rate == 0.0 ? c0 * t_cap : c0 * std::expm1(rate * t_cap) / rate;
    const double capped = (cap / p.y_bar) * (cap / p.y_bar) * std::exp(-p.lambda * t_cap) / p.lambda;
    return rising + capped;
}

namespace {

struct PathOutcome {
    double value = 0.0;
    double tail = 0.0;
    std::uint64_t clamped = 0;
    std::uint64_t steps = 0;
    // where the path was truncated, for the continuation estimate
    EpidemicState end;
    double end_discount = 0.0;
};

bool extinct(const ModelParams& p, const SolverConfig& cfg, const SirState& st) {
    return st.i < cfg.extinction_threshold && p.gamma * st.s < p.alpha;
}

/// Integrates one path along a precomputed beta path. `integrand(t, s, i, beta, clamped)`
/// returns the running cost.
template <typename Integrand>
PathOutcome integrate_along(const ModelParams& p, const SolverConfig& cfg, const double* beta, std::size_t n_steps,
                            SirState st, Integrand&& integrand) {
    PathOutcome out;
    const double step_discount = std::exp(-p.lambda * cfg.dt);
    double discount = 1.0;
    CompensatedSum sum;
    std::size_t k = 0;
    for (; k < n_steps; ++k) {
        if (extinct(p, cfg, st)) break;
        const double t = static_cast<double>(k) * cfg.dt;
        sum.add(discount * integrand(t, st.s, st.i, beta[k], out.clamped));
        st = sir_step_unchecked(st, beta[k], p.alpha, cfg.dt);
        discount *= step_discount;
    }
    out.steps = k;
    out.value = sum.value() * cfg.dt;
    out.tail = discount * infection_tail_bound(p, st.s, st.i);
    out.end = {st.s, st.i, beta[k]};
    out.end_discount = discount;
    return out;
}

/// Integrates one closed-loop path under the feedback read from `vz`; `dw` holds the
/// Brownian increments of the path.
PathOutcome integrate_controlled(const ModelParams& p, const SolverConfig& cfg, const double* dw, std::size_t n_steps,
                                 const EpidemicState& q, const GridSampler& vz) {
    PathOutcome out;
    const double step_discount = std::exp(-p.lambda * cfg.dt);
    double discount = 1.0;
    double xi = 0.0;
    CompensatedSum sum;
    SirState st = q.sir();
    double z = q.beta;
    std::size_t k = 0;
    for (; k < n_steps; ++k) {
        if (extinct(p, cfg, st)) break;
        bool c = false;
        xi = feedback_xi(p, vz(st.s, st.i, z, c));
        out.clamped += c ? 1 : 0;
        sum.add(discount * running_cost(p, st.i, xi).total);
        const double z_next = em_step(p, z, xi, dw[k], cfg.dt);
        st = sir_step_unchecked(st, z, p.alpha, cfg.dt);
        z = z_next;
        discount *= step_discount;
    }
    out.steps = k;
    out.value = sum.value() * cfg.dt;
    out.tail = discount * (infection_tail_bound(p, st.s, st.i) + 0.5 * xi * xi / p.lambda);
    out.end = {st.s, st.i, z};
    out.end_discount = discount;
    return out;
}

FkEstimate summarize(const std::vector<PathOutcome>& paths, const GridSampler* v_prev) {
    CompensatedSum sum, sum_sq, tail, cont;
    FkEstimate est;
    for (const auto& o : paths) {
        sum.add(o.value);
        tail.add(o.tail);
        if (v_prev && o.end_discount > 0.0) {
            bool c = false;
            cont.add(o.end_discount * (*v_prev)(o.end.s, o.end.i, o.end.beta, c));
        }
        est.clamped_queries += o.clamped;
        est.steps += o.steps;
    }
    const double n = static_cast<double>(paths.size());
    est.mean = sum.value() / n;
    for (const auto& o : paths) sum_sq.add((o.value - est.mean) * (o.value - est.mean));
    est.std_error = paths.size() > 1 ? std::sqrt(sum_sq.value() / (n - 1.0) / n) : 0.0;
    est.tail_bound = tail.value() / n;
    est.tail_estimate = cont.value() / n;
    return est;
}

/// Running cost along an uncontrolled path given the previous iterate's vz.
struct RecursionIntegrand {
    const ModelParams& p;
    GridSampler vz;
    IntegrandForm form;

    double operator()(double, double s, double i, double beta, std::uint64_t& clamped) const {
        bool c = false;
        const double grad = vz(s, i, beta, c);
        clamped += c ? 1 : 0;
        const double xi = feedback_xi(p, grad);
        const double cost = running_cost(p, i, xi).total;
        if (form == IntegrandForm::consistent)
            return cost + (drift(p, beta, xi) - drift(p, beta, 0.0)) * grad;
        return cost + drift(p, beta, xi) * grad;
    }
};

/// Brownian increments sqrt(dt) * N(0,1) for paths 0..n_paths-1, row j = path j.
std::vector<double> increments(const SolverConfig& cfg, std::size_t steps) {
    const double sqrt_dt = std::sqrt(cfg.dt);
    std::vector<double> dw(steps * cfg.n_paths);
    parallel_for(cfg.n_paths, [&](std::size_t j) {
        RngStream rng(cfg.seed, j);
        double* row = dw.data() + j * steps;
        for (std::size_t k = 0; k < steps; ++k) row[k] = sqrt_dt * rng.next();
    });
    return dw;
}

/// Uncontrolled (xi = 0) beta paths from z0, row j = path j with steps + 1 samples.
std::vector<double> beta_block(const ModelParams& p, const SolverConfig& cfg, const std::vector<double>& dw,
                               std::size_t steps, double z0) {
    std::vector<double> block((steps + 1) * cfg.n_paths);
    for (std::size_t j = 0; j < cfg.n_paths; ++j) {
        const double* inc = dw.data() + j * steps;
        double* out = block.data() + j * (steps + 1);
        double z = z0;
        out[0] = z;
        for (std::size_t k = 0; k < steps; ++k) {
            z = em_step(p, z, 0.0, inc[k], cfg.dt);
            out[k + 1] = z;
        }
    }
    return block;
}

/// Evaluates one state for one sweep. `betas` is the uncontrolled block for q.beta when the
/// caller has it cached, otherwise null.
FkEstimate evaluate_state(const ModelParams& p, const SolverConfig& cfg, const ValueGrid& g_prev,
                          const EpidemicState& q, const std::vector<double>& dw, std::size_t steps,
                          const std::vector<double>* betas) {
    const GridSampler vz(g_prev.spec, g_prev.vz);
    const GridSampler v(g_prev.spec, g_prev.v);
    std::vector<PathOutcome> outcomes(cfg.n_paths);
    if (cfg.scheme == SolverScheme::policy_iteration) {
        for (std::size_t j = 0; j < cfg.n_paths; ++j)
            outcomes[j] = integrate_controlled(p, cfg, dw.data() + j * steps, steps, q, vz);
    } else {
        std::vector<double> local;
        if (betas == nullptr) {
            local = beta_block(p, cfg, dw, steps, q.beta);
            betas = &local;
        }
        const RecursionIntegrand integrand{p, vz, cfg.integrand};
        for (std::size_t j = 0; j < cfg.n_paths; ++j)
            outcomes[j] = integrate_along(p, cfg, betas->data() + j * (steps + 1), steps, q.sir(), integrand);
    }
    return summarize(outcomes, &v);
}

} // namespace

FkEstimate feynman_kac_custom(const ModelParams& p, const SolverConfig& cfg, const EpidemicState& q,
                              const std::function<double(double, double, double, double)>& integrand) {
    validate_config(cfg, p);
    const std::size_t steps = SdeScheme{cfg.dt, cfg.horizon, cfg.seed}.n_steps();
    const auto dw = increments(cfg, steps);
    const auto betas = beta_block(p, cfg, dw, steps, q.beta);
    std::vector<PathOutcome> outcomes(cfg.n_paths);
    parallel_for(cfg.n_paths, [&](std::size_t j) {
        outcomes[j] = integrate_along(p, cfg, betas.data() + j * (steps + 1), steps, q.sir(),
                                      [&](double t, double s, double i, double b, std::uint64_t&) {
                                          return integrand(t, s, i, b);
                                      });
    });
    return summarize(outcomes, nullptr);
}

FkEstimate feynman_kac_value(const ModelParams& p, const SolverConfig& cfg, const ValueGrid& g_prev,
                             const EpidemicState& q) {
    validate_config(cfg, p);
    require_valid(q, p);
    const std::size_t steps = SdeScheme{cfg.dt, cfg.horizon, cfg.seed}.n_steps();
    const auto dw = increments(cfg, steps);
    return evaluate_state(p, cfg, g_prev, q, dw, steps, nullptr);
}

SolveResult solve(const ModelParams& params, const SolverConfig& cfg, const GridSpec& spec,
                  const SolveProgress& progress) {
    const auto started = std::chrono::steady_clock::now();
    const ModelParams p = validate_params(params);
    validate_config(cfg, p);
    validate_grid(spec, p);
    const std::size_t steps = SdeScheme{cfg.dt, cfg.horizon, cfg.seed}.n_steps();

    struct Node {
        int ix, iy, iz;
    };
    std::vector<Node> nodes;
    for (int iz = 0; iz < spec.nz; ++iz)
        for (int ix = 0; ix < spec.nx; ++ix)
            for (int iy = 0; iy < spec.ny; ++iy)
                if (spec.active(ix, iy)) nodes.push_back({ix, iy, iz});

    // Without sharing, every node regenerates its increments; results are identical.
    std::vector<double> shared_dw;
    std::vector<std::vector<double>> beta_cache;
    if (cfg.shared_beta_paths) {
        shared_dw = increments(cfg, steps);
        if (cfg.scheme == SolverScheme::uncontrolled_recursion) {
            beta_cache.resize(spec.nz);
            parallel_for(spec.nz, [&](std::size_t iz) {
                beta_cache[iz] = beta_block(p, cfg, shared_dw, steps, spec.z(static_cast<int>(iz)));
            });
        }
    }

    SolveResult result;
    ValueGrid& g = result.grid;
    g = make_zero_grid(spec);
    g.fingerprint = fingerprint(p, cfg, spec);

    std::vector<double> tails(spec.size(), 0.0), continuation(spec.size(), 0.0);
    std::vector<std::uint64_t> clamped(spec.size(), 0), walked(spec.size(), 0);

    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        std::vector<double> next(spec.size(), 0.0), next_err(spec.size(), 0.0);
        parallel_for(nodes.size(), [&](std::size_t n) {
            const Node& node = nodes[n];
            const EpidemicState q{spec.x(node.ix), spec.y(node.iy), spec.z(node.iz)};
            FkEstimate est;
            if (cfg.shared_beta_paths) {
                est = evaluate_state(p, cfg, g, q, shared_dw, steps, beta_cache.empty() ? nullptr : &beta_cache[node.iz]);
            } else {
                est = evaluate_state(p, cfg, g, q, increments(cfg, steps), steps, nullptr);
            }
            const std::size_t idx = spec.index(node.ix, node.iy, node.iz);
            next[idx] = est.mean;
            next_err[idx] = est.std_error;
            tails[idx] = est.tail_bound;
            continuation[idx] = est.tail_estimate;
            clamped[idx] = est.clamped_queries;
            walked[idx] = est.steps;
        });
        pad_inactive(spec, next);
        pad_inactive(spec, next_err);

        double residual = 0.0, sup_v = 0.0;
        for (const Node& node : nodes) {
            const std::size_t idx = spec.index(node.ix, node.iy, node.iz);
            residual = std::max(residual, std::abs(next[idx] - g.v[idx]));
            sup_v = std::max(sup_v, std::abs(next[idx]));
        }
        g.v = std::move(next);
        g.v_stderr = std::move(next_err);
        g.vz = derive_vz(spec, g.v);
        g.iteration = iter;
        g.residual = residual;
        g.residual_history.push_back(residual);
        if (progress) progress(iter, residual, sup_v);
        if (residual < cfg.tolerance) {
            g.converged = true;
            break;
        }
    }

    SolveDiagnostics& d = result.diagnostics;
    d.apriori_tail_bound = max_running_cost(p) * std::exp(-p.lambda * cfg.horizon) / p.lambda;
    std::uint64_t total_clamped = 0, total_steps = 0;
    for (const Node& node : nodes) {
        const std::size_t idx = spec.index(node.ix, node.iy, node.iz);
        d.max_tail_bound = std::max(d.max_tail_bound, tails[idx]);
        d.max_tail_estimate = std::max(d.max_tail_estimate, continuation[idx]);
        d.sup_v = std::max(d.sup_v, std::abs(g.v[idx]));
        total_clamped += clamped[idx];
        total_steps += walked[idx];
    }
    d.clamped_query_fraction = total_steps ? static_cast<double>(total_clamped) / total_steps : 0.0;
    d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

} // namespace epictrl
