#include "pcnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

namespace {

std::string cell(double v) { return std::isfinite(v) ? fmt::format("{}", v) : (std::isnan(v) ? "nan" : "inf"); }

}  // namespace

std::string metrics_csv(const std::vector<MetricsRecord>& records, const std::string& config_hash,
                        const std::string& experiment) {
    std::size_t layers = 0, sets = 0;
    for (const auto& r : records) {
        if (!(r.accuracy >= 0 && r.accuracy <= 1))
            throw std::invalid_argument(fmt::format("metrics: accuracy {} outside [0,1]", r.accuracy));
        layers = std::max(layers, r.epsilon.size());
        sets = std::max(sets, r.hps.size());
    }
    std::string out = fmt::format("# config_hash={} experiment={}\n", config_hash, experiment);
    out += "experiment,regime,mask,noise,level,restart,t,accuracy";
    for (std::size_t i = 0; i < layers; ++i) out += fmt::format(",eps_{}", i + 1);
    for (std::size_t s = 0; s < sets; ++s) {
        const std::string suffix = sets == 1 ? "" : fmt::format("_{}", s + 1);
        for (const char* name : {"mu", "gamma", "beta", "alpha"}) out += fmt::format(",{}{}", name, suffix);
    }
    out += '\n';
    for (const auto& r : records) {
        out += fmt::format("{},{},{},{},{},{},{},{}", r.experiment, r.regime, r.mask, to_string(r.kind), r.level,
                           r.restart, r.t, cell(r.accuracy));
        for (std::size_t i = 0; i < layers; ++i) out += "," + (i < r.epsilon.size() ? cell(r.epsilon[i]) : "");
        for (std::size_t s = 0; s < sets; ++s) {
            if (s < r.hps.size()) {
                const auto& h = r.hps[s];
                out += fmt::format(",{},{},{},{}", cell(h.mu), cell(h.gamma), cell(h.beta), cell(h.alpha));
            } else {
                out += ",,,,";
            }
        }
        out += '\n';
    }
    return out;
}

std::vector<RelativeHPRow> relative_hp_table(const std::vector<HPSummary>& summaries) {
    std::vector<RelativeHPRow> rows;
    for (const auto& s : summaries) {
        const HPSummary* clean = nullptr;
        for (const auto& c : summaries)
            if (c.mask == s.mask && (c.level == 0 || c.kind == NoiseKind::clean)) {
                clean = &c;
                break;
            }
        if (!clean) throw std::invalid_argument(fmt::format("relative_hp_table: no clean condition for mask '{}'", s.mask));
        if (clean->hps.size() != s.hps.size())
            throw std::invalid_argument("relative_hp_table: hyper-parameter set counts differ from the clean condition");
        for (std::size_t k = 0; k < s.hps.size(); ++k) {
            const auto& v = s.hps[k];
            const auto& c = clean->hps[k];
            const std::pair<const char*, std::pair<double, double>> named[] = {
                {"mu", {v.mu, c.mu}}, {"gamma", {v.gamma, c.gamma}}, {"beta", {v.beta, c.beta}}, {"alpha", {v.alpha, c.alpha}}};
            for (const auto& [name, vc] : named) {
                const double rel = vc.second == 0 ? std::numeric_limits<double>::quiet_NaN() : vc.first / vc.second;
                rows.push_back({s.mask, s.kind, s.level, k, name, vc.first, vc.second, rel});
            }
        }
    }
    return rows;
}

std::string relative_hp_csv(const std::vector<RelativeHPRow>& rows) {
    std::string out = "mask,noise,level,set,hp,value,clean,relative\n";
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{},{},{},{},{}\n", r.mask, to_string(r.kind), r.level, r.set + 1, r.name,
                           cell(r.value), cell(r.clean), cell(r.relative));
    return out;
}

// --- SVG ------------------------------------------------------------------------

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

std::pair<double, double> padded(double lo, double hi) {
    if (!(lo <= hi)) return {0, 1};
    if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<ChartPanel>& panels) {
    const double pw = 320, ph = 240, ml = 56, mr = 16, mt = 48, mb = 48, legend = 150;
    const double width = ml + panels.size() * (pw + ml + mr) + legend;
    const double height = mt + ph + mb;
    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        num(width), num(height), num(width / 2), escape(title));

    std::vector<std::string> names;
    for (const auto& p : panels)
        for (const auto& s : p.series)
            if (std::find(names.begin(), names.end(), s.name) == names.end()) names.push_back(s.name);
    auto colour = [&](const std::string& n) {
        const auto i = std::find(names.begin(), names.end(), n) - names.begin();
        return kPalette[i % std::size(kPalette)];
    };

    for (std::size_t k = 0; k < panels.size(); ++k) {
        const auto& p = panels[k];
        const double x0 = ml + k * (pw + ml + mr), y0 = mt;
        double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
        for (const auto& s : p.series)
            for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                xlo = std::min(xlo, s.x[i]);
                xhi = std::max(xhi, s.x[i]);
                ylo = std::min(ylo, s.y[i]);
                yhi = std::max(yhi, s.y[i]);
            }
        std::tie(xlo, xhi) = padded(xlo, xhi);
        std::tie(ylo, yhi) = padded(ylo, yhi);
        auto sx = [&](double v) { return x0 + (v - xlo) / (xhi - xlo) * pw; };
        auto sy = [&](double v) { return y0 + ph - (v - ylo) / (yhi - ylo) * ph; };

        out += fmt::format("<g>\n<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
                           num(x0), num(y0), num(pw), num(ph));
        out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(x0 + pw / 2), num(y0 - 8),
                           escape(p.title));
        for (int t = 0; t <= 4; ++t) {
            const double xv = xlo + (xhi - xlo) * t / 4, yv = ylo + (yhi - ylo) * t / 4;
            out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", num(sx(xv)),
                               num(y0 + ph + 14), xv);
            out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", num(x0 - 4),
                               num(sy(yv) + 4), yv);
        }
        out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(x0 + pw / 2),
                           num(y0 + ph + 34), escape(p.x_label));
        out += fmt::format("<text transform=\"translate({},{}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
                           num(x0 - 40), num(y0 + ph / 2), escape(p.y_label));
        for (const auto& s : p.series) {
            std::string pts;
            for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                pts += fmt::format("{}{},{}", pts.empty() ? "" : " ", num(sx(s.x[i])), num(sy(s.y[i])));
            }
            out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                               colour(s.name), pts);
        }
        out += "</g>\n";
    }
    const double lx = width - legend + 8;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double ly = mt + 14 * i;
        out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n", num(lx),
                           num(ly), num(lx + 18), num(ly), colour(names[i]));
        out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(lx + 24), num(ly + 4), escape(names[i]));
    }
    out += "</svg>\n";
    return out;
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
