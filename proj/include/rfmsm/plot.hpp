#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfmsm/error.hpp"
#include "rfmsm/eval.hpp"

// Standalone SVG figures: strategy x ratio heatmap and accuracy-vs-SNR curves.
namespace rfmsm::plot {

struct HeatmapCell {
    char strategy = 'A';
    double ratio = 0.0;
    double accuracy = 0.0;
    bool valid = false;
};

/// Parses the sweep CSV (strategy,ratio,accuracy,f1,seed_mean,seed_std).
inline std::vector<HeatmapCell> parse_heatmap_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line.rfind("strategy,ratio,accuracy", 0) == 0,
            ErrorCode::invalid_argument, "heatmap CSV must start with a strategy,ratio,accuracy header");
    std::vector<HeatmapCell> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) f.push_back(field);
        require(f.size() >= 3 && f[0].size() == 1, ErrorCode::invalid_argument, "malformed heatmap row: " + line);
        HeatmapCell c;
        c.strategy = f[0][0];
        try {
            c.ratio = std::stod(f[1]);
            if (!f[2].empty()) {
                c.accuracy = std::stod(f[2]);
                c.valid = true;
            }
        } catch (const std::exception&) {
            fail(ErrorCode::invalid_argument, "malformed number in heatmap row: " + line);
        }
        cells.push_back(c);
    }
    require(!cells.empty(), ErrorCode::invalid_argument, "heatmap CSV has no data rows");
    return cells;
}

namespace detail {

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

/// Blue (low) to yellow (high).
inline std::string ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(40 + 215 * t));
    const int g = static_cast<int>(std::lround(60 + 170 * t));
    const int b = static_cast<int>(std::lround(150 - 110 * t));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string provenance_comment(const nlohmann::json& provenance) {
    std::string s = provenance.dump();
    // "--" may not appear inside an XML comment
    for (std::size_t p = s.find("--"); p != std::string::npos; p = s.find("--", p)) s.replace(p, 2, "- -");
    return "<!-- provenance: " + s + " -->\n";
}

} // namespace detail

/// One rect per grid cell: rows are strategies, columns ratios.
inline std::string heatmap_svg(const std::vector<HeatmapCell>& cells, const nlohmann::json& provenance) {
    require(!cells.empty(), ErrorCode::invalid_argument, "nothing to plot");
    std::vector<char> rows;
    std::vector<double> cols;
    for (const auto& c : cells) {
        if (std::find(rows.begin(), rows.end(), c.strategy) == rows.end()) rows.push_back(c.strategy);
        if (std::find(cols.begin(), cols.end(), c.ratio) == cols.end()) cols.push_back(c.ratio);
    }
    std::sort(rows.begin(), rows.end());
    std::sort(cols.begin(), cols.end());
    double lo = 1.0, hi = 0.0;
    for (const auto& c : cells) {
        if (!c.valid) continue;
        lo = std::min(lo, c.accuracy);
        hi = std::max(hi, c.accuracy);
    }
    const double cw = 56, ch = 40, x0 = 60, y0 = 40;
    const double width = x0 + cw * static_cast<double>(cols.size()) + 20;
    const double height = y0 + ch * static_cast<double>(rows.size()) + 50;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt("%.0f", width) +
                      "\" height=\"" + detail::fmt("%.0f", height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += detail::provenance_comment(provenance);
    svg += "<text x=\"" + detail::fmt("%.0f", x0) + "\" y=\"20\" font-size=\"13\">Accuracy by masking strategy and ratio</text>\n";
    for (const auto& c : cells) {
        const auto r = static_cast<double>(std::find(rows.begin(), rows.end(), c.strategy) - rows.begin());
        const auto k = static_cast<double>(std::find(cols.begin(), cols.end(), c.ratio) - cols.begin());
        const double t = hi > lo ? (c.accuracy - lo) / (hi - lo) : 0.5;
        const std::string fill = c.valid ? detail::ramp(t) : "#cccccc";
        const double x = x0 + k * cw, y = y0 + r * ch;
        svg += "<rect class=\"cell\" x=\"" + detail::fmt("%.1f", x) + "\" y=\"" + detail::fmt("%.1f", y) +
               "\" width=\"" + detail::fmt("%.1f", cw) + "\" height=\"" + detail::fmt("%.1f", ch) + "\" fill=\"" +
               fill + "\" stroke=\"white\"/>\n";
        svg += "<text x=\"" + detail::fmt("%.1f", x + cw / 2) + "\" y=\"" + detail::fmt("%.1f", y + ch / 2 + 4) +
               "\" text-anchor=\"middle\">" + (c.valid ? detail::fmt("%.1f", 100.0 * c.accuracy) : "n/a") +
               "</text>\n";
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        svg += "<text x=\"" + detail::fmt("%.0f", x0 - 10) + "\" y=\"" +
               detail::fmt("%.1f", y0 + ch * (static_cast<double>(r) + 0.5) + 4) + "\" text-anchor=\"end\">" +
               std::string(1, rows[r]) + "</text>\n";
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
        svg += "<text x=\"" + detail::fmt("%.1f", x0 + cw * (static_cast<double>(k) + 0.5)) + "\" y=\"" +
               detail::fmt("%.1f", y0 + ch * static_cast<double>(rows.size()) + 16) + "\" text-anchor=\"middle\">" +
               detail::fmt("%.1f", cols[k]) + "</text>\n";
    }
    svg += "<text x=\"" + detail::fmt("%.1f", x0 + cw * static_cast<double>(cols.size()) / 2) + "\" y=\"" +
           detail::fmt("%.1f", height - 8) + "\" text-anchor=\"middle\">masking ratio</text>\n";
    svg += "</svg>\n";
    return svg;
}

struct Series {
    std::string label;
    std::vector<std::pair<int, double>> points;  // (snr_db, accuracy)
};

inline Series series_from_report(const MetricsReport& r, std::string label) {
    Series s{std::move(label), {}};
    for (const auto& [snr, acc] : r.per_snr_accuracy) s.points.emplace_back(snr, acc);
    return s;
}

/// Accuracy-vs-SNR line chart; one polyline and one circle per point per series.
inline std::string snr_chart_svg(const std::vector<Series>& series, const nlohmann::json& provenance) {
    require(!series.empty(), ErrorCode::invalid_argument, "nothing to plot");
    int smin = 0, smax = 0;
    bool first = true;
    for (const auto& s : series) {
        require(!s.points.empty(), ErrorCode::invalid_argument, "series '" + s.label + "' has no points");
        for (const auto& [snr, acc] : s.points) {
            smin = first ? snr : std::min(smin, snr);
            smax = first ? snr : std::max(smax, snr);
            first = false;
        }
    }
    const double w = 640, h = 400, left = 60, right = 150, top = 40, bottom = 50;
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](int snr) { return left + (smax > smin ? (snr - smin) * pw / (smax - smin) : pw / 2); };
    auto py = [&](double acc) { return top + (1.0 - acc) * ph; };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
                      "font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += detail::provenance_comment(provenance);
    svg += "<text x=\"60\" y=\"22\" font-size=\"13\">Accuracy vs SNR</text>\n";
    svg += "<rect x=\"" + detail::fmt("%.0f", left) + "\" y=\"" + detail::fmt("%.0f", top) + "\" width=\"" +
           detail::fmt("%.0f", pw) + "\" height=\"" + detail::fmt("%.0f", ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double acc = k / 4.0;
        svg += "<text x=\"" + detail::fmt("%.0f", left - 6) + "\" y=\"" + detail::fmt("%.1f", py(acc) + 4) +
               "\" text-anchor=\"end\">" + detail::fmt("%.2f", acc) + "</text>\n";
    }
    svg += "<text x=\"" + detail::fmt("%.0f", left) + "\" y=\"" + detail::fmt("%.0f", h - 28) + "\">" +
           std::to_string(smin) + " dB</text>\n";
    svg += "<text x=\"" + detail::fmt("%.0f", left + pw) + "\" y=\"" + detail::fmt("%.0f", h - 28) +
           "\" text-anchor=\"end\">" + std::to_string(smax) + " dB</text>\n";
    svg += "<text x=\"" + detail::fmt("%.0f", left + pw / 2) + "\" y=\"" + detail::fmt("%.0f", h - 10) +
           "\" text-anchor=\"middle\">SNR (dB)</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const std::string color = colors[k % std::size(colors)];
        std::string pts;
        for (const auto& [snr, acc] : series[k].points) {
            pts += detail::fmt("%.1f", px(snr)) + "," + detail::fmt("%.1f", py(acc)) + " ";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        for (const auto& [snr, acc] : series[k].points) {
            svg += "<circle class=\"vertex\" cx=\"" + detail::fmt("%.1f", px(snr)) + "\" cy=\"" +
                   detail::fmt("%.1f", py(acc)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
        }
        const double ly = top + 16.0 * static_cast<double>(k);
        svg += "<text x=\"" + detail::fmt("%.0f", left + pw + 12) + "\" y=\"" + detail::fmt("%.0f", ly + 4) +
               "\" fill=\"" + color + "\">" + detail::xml_escape(series[k].label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace rfmsm::plot
