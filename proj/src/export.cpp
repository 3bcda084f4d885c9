#include "epictrl/closed_loop.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace epictrl {

namespace {

// CSV column order; differs from Series order (day first, then S, I, R, beta, xi, Rt, RtSt).
constexpr std::array<Series, kSeriesCount> kCsvOrder = {Series::S,  Series::I,  Series::R,   Series::beta,
                                                        Series::xi, Series::Rt, Series::RtSt};

std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::string opt_cell(const std::optional<T>& v) {
    if (!v) return {};
    if constexpr (std::is_floating_point_v<T>)
        return fmt9(*v);
    else
        return std::to_string(*v);
}

} // namespace

std::string ensemble_csv_header() {
    std::string h = "day";
    for (Series s : kCsvOrder) {
        const std::string name(kSeriesNames[static_cast<std::size_t>(s)]);
        h += "," + name + "_mean," + name + "_lo," + name + "_hi";
    }
    return h;
}

void export_ensemble(const EnsembleResult& e, const std::filesystem::path& dir, std::string_view stem,
                     std::string_view title) {
    std::filesystem::create_directories(dir);
    const std::string base(stem);
    {
        auto os = open_out(dir / (base + ".csv"));
        os << ensemble_csv_header() << '\n';
        for (std::size_t d = 0; d < e.days.size(); ++d) {
            os << fmt9(e.days[d]);
            for (Series s : kCsvOrder) {
                const SeriesBand& b = e[s];
                os << ',' << fmt9(b.mean[d]) << ',' << fmt9(b.lo[d]) << ',' << fmt9(b.hi[d]);
            }
            os << '\n';
        }
        if (!os) throw std::runtime_error("write failed for " + base + ".csv");
    }
    {
        const ScalarMetrics& m = e.metrics;
        nlohmann::json j;
        j["first_containment_day"] = opt_json(m.first_containment_day);
        j["severe_onset_day"] = opt_json(m.severe_onset_day);
        j["severe_duration"] = opt_json(m.severe_duration);
        j["final_recovered"] = opt_json(m.final_recovered);
        j["min_mean_Rt"] = opt_json(m.min_mean_Rt);
        j["first_day_RtSt_below_1"] = opt_json(m.first_day_RtSt_below_1);
        j["n_paths"] = e.n_paths;
        j["seed"] = e.seed;
        j["fingerprint"] = e.fingerprint;
        j["discounted_cost_mean"] = e.discounted_cost_mean;
        j["discounted_cost_stderr"] = e.discounted_cost_stderr;
        auto os = open_out(dir / (base + ".metrics.json"));
        os << j.dump(2) << '\n';

        auto cs = open_out(dir / (base + ".metrics.csv"));
        cs << "first_containment_day,severe_onset_day,severe_duration,final_recovered,min_mean_Rt,"
              "first_day_RtSt_below_1\n";
        cs << opt_cell(m.first_containment_day) << ',' << opt_cell(m.severe_onset_day) << ','
           << opt_cell(m.severe_duration) << ',' << opt_cell(m.final_recovered) << ',' << opt_cell(m.min_mean_Rt)
           << ',' << opt_cell(m.first_day_RtSt_below_1) << '\n';
    }
    {
        auto os = open_out(dir / (base + ".svg"));
        os << render_svg(e, title.empty() ? std::string_view(base) : title);
    }
}

EnsembleResult read_ensemble_csv(const std::filesystem::path& csv) {
    std::ifstream is(csv);
    if (!is) throw std::runtime_error("cannot open " + csv.string());
    std::string line;
    if (!std::getline(is, line) || line != ensemble_csv_header())
        throw std::runtime_error("unexpected CSV header in " + csv.string());
    EnsembleResult e;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
        if (cells.size() != 1 + 3 * kSeriesCount) throw std::runtime_error("malformed CSV row in " + csv.string());
        e.days.push_back(cells[0]);
        for (std::size_t q = 0; q < kSeriesCount; ++q) {
            SeriesBand& b = e[kCsvOrder[q]];
            b.mean.push_back(cells[1 + 3 * q]);
            b.lo.push_back(cells[2 + 3 * q]);
            b.hi.push_back(cells[3 + 3 * q]);
        }
    }
    return e;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

struct Panel {
    std::string id;
    std::string label;
    std::vector<std::pair<Series, const char*>> curves;  // series, colour
};

struct Frame {
    double x0, y0, w, h;
    double t_min, t_max, v_min, v_max;
    double px(double t) const { return x0 + (t - t_min) / (t_max - t_min) * w; }
    double py(double v) const { return y0 + h - (v - v_min) / (v_max - v_min) * h; }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

} // namespace

std::string render_svg(const EnsembleResult& e, std::string_view title) {
    const std::vector<Panel> panels = {
        {"panel-xi", "lockdown ξ", {{Series::xi, "#444444"}}},
        {"panel-rt", "R_t", {{Series::Rt, "#7a3e9d"}}},
        {"panel-sir", "S / I / R", {{Series::S, "#1f77b4"}, {Series::I, "#d62728"}, {Series::R, "#2ca02c"}}},
        {"panel-rtst", "R_t · S_t", {{Series::RtSt, "#ff7f0e"}}},
    };
    constexpr double kPanelW = 260, kPanelH = 200, kPad = 50, kTop = 40;
    const double width = panels.size() * (kPanelW + kPad) + kPad;
    const double height = kTop + kPanelH + 60;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(kPad) << "\" y=\"20\" font-size=\"14\">" << title << " (n=" << e.n_paths
       << ", seed=" << e.seed << ")</text>\n";

    const double t_min = e.days.empty() ? 0.0 : e.days.front();
    const double t_max = e.days.empty() ? 1.0 : std::max(e.days.back(), t_min + 1.0);
    for (std::size_t k = 0; k < panels.size(); ++k) {
        const Panel& panel = panels[k];
        double lo = 1e300, hi = -1e300;
        for (const auto& [s, colour] : panel.curves) {
            const SeriesBand& b = e[s];
            if (b.lo.empty()) continue;
            lo = std::min(lo, *std::min_element(b.lo.begin(), b.lo.end()));
            hi = std::max(hi, *std::max_element(b.hi.begin(), b.hi.end()));
        }
        if (panel.id == "panel-rtst" || panel.id == "panel-rt") {
            lo = std::min(lo, 1.0);  // keep the critical level of one in view
            hi = std::max(hi, 1.0);
        }
        if (!(hi > lo)) {
            lo = (lo > 1e299 ? 0.0 : lo) - 0.5;
            hi = lo + 1.0;
        }
        const double margin = 0.05 * (hi - lo);
        const Frame f{kPad + k * (kPanelW + kPad), kTop, kPanelW, kPanelH, t_min, t_max, lo - margin, hi + margin};

        os << "<g class=\"panel\" id=\"" << panel.id << "\">\n";
        os << "  <rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.w) << "\" height=\""
           << num(f.h) << "\" fill=\"none\" stroke=\"black\"/>\n";
        os << "  <text x=\"" << num(f.x0 + f.w / 2) << "\" y=\"" << num(f.y0 - 6) << "\" text-anchor=\"middle\">"
           << panel.label << "</text>\n";
        for (double v : {lo, 0.5 * (lo + hi), hi})
            os << "  <text x=\"" << num(f.x0 - 4) << "\" y=\"" << num(f.py(v) + 4) << "\" text-anchor=\"end\">"
               << tick_label(v) << "</text>\n";
        for (double t : {t_min, 0.5 * (t_min + t_max), t_max})
            os << "  <text x=\"" << num(f.px(t)) << "\" y=\"" << num(f.y0 + f.h + 14)
               << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
        os << "  <text x=\"" << num(f.x0 + f.w / 2) << "\" y=\"" << num(f.y0 + f.h + 30)
           << "\" text-anchor=\"middle\">day</text>\n";
        if (panel.id == "panel-rtst" || panel.id == "panel-rt")
            os << "  <line x1=\"" << num(f.x0) << "\" x2=\"" << num(f.x0 + f.w) << "\" y1=\"" << num(f.py(1.0))
               << "\" y2=\"" << num(f.py(1.0)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
        for (const auto& [s, colour] : panel.curves) {
            const SeriesBand& b = e[s];
            os << "  <polygon class=\"band\" fill=\"" << colour << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
            for (std::size_t d = 0; d < e.days.size(); ++d) os << num(f.px(e.days[d])) << ',' << num(f.py(b.hi[d])) << ' ';
            for (std::size_t d = e.days.size(); d-- > 0;) os << num(f.px(e.days[d])) << ',' << num(f.py(b.lo[d])) << ' ';
            os << "\"/>\n";
            os << "  <polyline class=\"mean\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t d = 0; d < e.days.size(); ++d) os << num(f.px(e.days[d])) << ',' << num(f.py(b.mean[d])) << ' ';
            os << "\"/>\n";
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace epictrl
