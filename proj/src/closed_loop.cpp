#include "epictrl/closed_loop.hpp"

#include "epictrl/cost.hpp"
#include "epictrl/parallel.hpp"
#include "epictrl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace epictrl {

double EnsembleResult::mean_at(Series s, double day) const {
    if (days.empty()) throw std::out_of_range("empty ensemble");
    const auto it = std::lower_bound(days.begin(), days.end(), day);
    std::size_t idx = static_cast<std::size_t>(it - days.begin());
    if (idx == days.size()) idx = days.size() - 1;
    if (idx > 0 && std::abs(days[idx - 1] - day) <= std::abs(days[idx] - day)) --idx;
    return (*this)[s].mean[idx];
}

namespace {

struct PolicyEval {
    double xi;
    double vz;
};

class PolicyEvaluator {
public:
    PolicyEvaluator(const ModelParams& p, const PolicySource& policy) : p_(p), policy_(policy) {
        if (const auto* g = std::get_if<GridPolicy>(&policy_)) {
            if (g->grid == nullptr) throw std::invalid_argument("grid policy without grid");
            sampler_.emplace(g->grid->spec, g->grid->vz);
        } else if (const auto* c = std::get_if<ConstantPolicy>(&policy_)) {
            if (!(c->xi >= 0.0 && c->xi <= p.cap_L))
                throw std::invalid_argument("constant policy outside [0, cap_L]");
        }
    }

    PolicyEval operator()(double s, double i, double beta, std::uint64_t& clamped) const {
        if (sampler_) {
            bool c = false;
            const double vz = (*sampler_)(s, i, beta, c);
            clamped += c ? 1 : 0;
            return {feedback_xi(p_, vz), vz};
        }
        if (const auto* c = std::get_if<ConstantPolicy>(&policy_)) return {c->xi, 0.0};
        return {0.0, 0.0};
    }

private:
    const ModelParams& p_;
    const PolicySource& policy_;
    std::optional<GridSampler> sampler_;
};

bool on_day_boundary(double t) { return std::abs(t - std::round(t)) < 1e-9; }

/// Welford accumulator; merging uses Chan's update so identical samples give exactly zero spread.
struct Moments {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        n += 1.0;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    void merge(const Moments& o) {
        if (o.n == 0.0) return;
        if (n == 0.0) {
            *this = o;
            return;
        }
        const double total = n + o.n;
        const double d = o.mean - mean;
        mean += d * (o.n / total);
        m2 += o.m2 + d * d * (n * o.n / total);
        n = total;
    }
    double variance() const { return n > 1.0 ? std::max(0.0, m2 / (n - 1.0)) : 0.0; }
};

} // namespace

PathRecord simulate_path(const ModelParams& p, const PolicySource& policy, const SdeScheme& scheme,
                         const EpidemicState& s0, std::uint64_t path_index) {
    require_valid(s0, p);
    if (const auto* g = std::get_if<GridPolicy>(&policy); g && g->grid) {
        const GridSpec& s = g->grid->spec;
        if (s0.s < s.x_lo || s0.s > s.x_hi || s0.i < s.y_lo || s0.i > s.y_hi || s0.beta < s.z_lo || s0.beta > s.z_hi)
            throw std::invalid_argument("initial state outside the policy grid");
    }
    const std::size_t steps = scheme.n_steps();
    const PolicyEvaluator eval(p, policy);
    RngStream rng(scheme.seed, path_index);
    const double sqrt_dt = std::sqrt(scheme.dt);

    PathRecord rec;
    for (auto* v : {&rec.t, &rec.s, &rec.i, &rec.beta, &rec.xi, &rec.vz}) v->reserve(steps + 1);
    SirState st = s0.sir();
    double z = s0.beta;
    for (std::size_t k = 0; k <= steps; ++k) {
        const PolicyEval pe = eval(st.s, st.i, z, rec.clamped_queries);
        rec.t.push_back(static_cast<double>(k) * scheme.dt);
        rec.s.push_back(st.s);
        rec.i.push_back(st.i);
        rec.beta.push_back(z);
        rec.xi.push_back(pe.xi);
        rec.vz.push_back(pe.vz);
        if (k == steps) break;
        const double dw = sqrt_dt * rng.next();
        const double z_next = em_step(p, z, pe.xi, dw, scheme.dt);
        st = sir_step_unchecked(st, z, p.alpha, scheme.dt);
        z = z_next;
    }
    return rec;
}

EnsembleResult simulate_closed_loop(const ModelParams& p, const PolicySource& policy, const SdeScheme& scheme,
                                    const EpidemicState& s0, std::size_t n_paths, double xi_eps) {
    if (n_paths < 1) throw std::invalid_argument("simulate_closed_loop: n_paths must be >= 1");
    const std::size_t steps = scheme.n_steps();
    std::vector<std::size_t> record_steps;
    for (std::size_t k = 0; k <= steps; ++k)
        if (on_day_boundary(static_cast<double>(k) * scheme.dt)) record_steps.push_back(k);
    const std::size_t n_days = record_steps.size();

    constexpr std::size_t kBlock = 64;
    const std::size_t n_blocks = (n_paths + kBlock - 1) / kBlock;
    struct BlockStats {
        std::vector<Moments> moments;  // n_days * kSeriesCount
        Moments cost;
        std::uint64_t clamped = 0;
        double conservation = 0.0;
    };
    std::vector<BlockStats> blocks(n_blocks);

    parallel_for(n_blocks, [&](std::size_t b) {
        BlockStats& bs = blocks[b];
        bs.moments.assign(n_days * kSeriesCount, Moments{});
        const std::size_t end = std::min(n_paths, (b + 1) * kBlock);
        for (std::size_t path = b * kBlock; path < end; ++path) {
            const PathRecord rec = simulate_path(p, policy, scheme, s0, path);
            bs.clamped += rec.clamped_queries;
            CompensatedSum cost;
            double discount = 1.0;
            const double step_discount = std::exp(-p.lambda * scheme.dt);
            for (std::size_t k = 0; k < steps; ++k) {
                cost.add(discount * running_cost(p, rec.i[k], rec.xi[k]).total);
                discount *= step_discount;
            }
            bs.cost.add(cost.value() * scheme.dt);
            for (std::size_t d = 0; d < n_days; ++d) {
                const std::size_t k = record_steps[d];
                const double s = rec.s[k], i = rec.i[k], beta = rec.beta[k];
                const double r = 1.0 - s - i;
                bs.conservation = std::max(bs.conservation, std::abs(s + i + r - 1.0));
                const double rt = beta / p.alpha;
                const std::array<double, kSeriesCount> values = {s, i, r, beta, rec.xi[k], rt, rt * s};
                for (std::size_t q = 0; q < kSeriesCount; ++q) bs.moments[d * kSeriesCount + q].add(values[q]);
            }
        }
    });

    EnsembleResult e;
    e.n_paths = n_paths;
    e.seed = scheme.seed;
    if (const auto* g = std::get_if<GridPolicy>(&policy); g && g->grid) e.fingerprint = g->grid->fingerprint;
    std::vector<Moments> total(n_days * kSeriesCount);
    Moments cost;
    for (const auto& bs : blocks) {
        for (std::size_t m = 0; m < total.size(); ++m) total[m].merge(bs.moments[m]);
        cost.merge(bs.cost);
        e.clamped_queries += bs.clamped;
        e.max_conservation_error = std::max(e.max_conservation_error, bs.conservation);
    }
    e.days.resize(n_days);
    for (std::size_t d = 0; d < n_days; ++d) e.days[d] = std::round(static_cast<double>(record_steps[d]) * scheme.dt);
    const double n = static_cast<double>(n_paths);
    for (std::size_t q = 0; q < kSeriesCount; ++q) {
        SeriesBand& band = e.series[q];
        band.mean.resize(n_days);
        band.lo.resize(n_days);
        band.hi.resize(n_days);
        for (std::size_t d = 0; d < n_days; ++d) {
            const Moments& m = total[d * kSeriesCount + q];
            const double half = 1.96 * std::sqrt(m.variance() / n);
            band.mean[d] = m.mean;
            band.lo[d] = m.mean - half;
            band.hi[d] = m.mean + half;
        }
    }
    e.discounted_cost_mean = cost.mean;
    e.discounted_cost_stderr = std::sqrt(cost.variance() / n);
    e.metrics = compute_metrics(e, xi_eps);
    return e;
}

ScalarMetrics compute_metrics(const EnsembleResult& e, double xi_eps) {
    ScalarMetrics m;
    const auto& xi = e[Series::xi].mean;
    const auto& rtst = e[Series::RtSt].mean;
    const std::size_t n = e.days.size();
    if (n == 0) return m;
    auto day = [&](std::size_t d) { return static_cast<int>(std::lround(e.days[d])); };

    for (std::size_t d = 0; d < n; ++d)
        if (xi[d] > xi_eps) {
            m.first_containment_day = day(d);
            break;
        }
    for (std::size_t d = 0; d < n; ++d)
        if (xi[d] > kSevereThreshold) {
            std::size_t end = d;
            while (end < n && xi[end] > kSevereThreshold) ++end;
            m.severe_onset_day = day(d);
            // run length in days; the run may reach the last record
            m.severe_duration = (end < n ? day(end) : day(n - 1) + 1) - day(d);
            break;
        }
    m.final_recovered = e[Series::R].mean.back();
    m.min_mean_Rt = *std::min_element(e[Series::Rt].mean.begin(), e[Series::Rt].mean.end());
    if (rtst.back() < 1.0) {
        std::size_t d = n - 1;
        while (d > 0 && rtst[d - 1] < 1.0) --d;
        m.first_day_RtSt_below_1 = day(d);
    }
    return m;
}

} // namespace epictrl
