#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gando::orchestrator {

inline std::string fixed(double v, int digits = 2) {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string pct(const std::optional<double>& v) { return v ? fixed(*v * 100.0, 2) : "n/a"; }

/// A titled table with string cells; the JSON form keeps raw numbers alongside.
struct Table {
    std::string name;
    std::string title;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    nlohmann::json records = nlohmann::json::array();
    std::string config_hash;
    std::vector<std::pair<std::string, std::string>> checkpoints;  // label -> id

    std::string markdown() const {
        std::string s = "## " + title + "\n\n";
        s += "config `" + config_hash + "`";
        for (const auto& [label, id] : checkpoints) s += ", " + label + " `" + id + "`";
        s += "\n\n|";
        for (const auto& h : header) s += " " + h + " |";
        s += "\n|";
        for (std::size_t i = 0; i < header.size(); ++i) s += i == 0 ? " --- |" : " ---: |";
        s += "\n";
        for (const auto& r : rows) {
            s += "|";
            for (const auto& c : r) s += " " + c + " |";
            s += "\n";
        }
        return s;
    }

    /// One JSON object per line; the first line carries provenance.
    std::string jsonl() const {
        nlohmann::json head = {{"type", "table"}, {"name", name}, {"title", title}, {"config_hash", config_hash}};
        nlohmann::json ck = nlohmann::json::object();
        for (const auto& [label, id] : checkpoints) ck[label] = id;
        head["checkpoints"] = ck;
        std::string s = head.dump() + "\n";
        for (const auto& r : records) s += r.dump() + "\n";
        return s;
    }
};

struct Series {
    std::string label;
    std::vector<double> y;
};

/// Minimal SVG line plot: shared x ticks, one polyline per series, y fixed to [0, y_max].
inline std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                                 const std::vector<std::string>& x_ticks, const std::vector<Series>& series, double y_max = 100.0) {
    const double W = 560, H = 360, L = 60, R = 140, T = 40, B = 50;
    const double pw = W - L - R, ph = H - T - B;
    const std::size_t n = x_ticks.size();
    auto px = [&](std::size_t i) { return L + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : pw / 2); };
    auto py = [&](double v) { return T + ph * (1.0 - std::clamp(v, 0.0, y_max) / y_max); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(W, 0) + "\" height=\"" + fixed(H, 0) +
                    "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fixed(W / 2, 1) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
    s += "<line x1=\"" + fixed(L, 1) + "\" y1=\"" + fixed(T + ph, 1) + "\" x2=\"" + fixed(L + pw, 1) + "\" y2=\"" + fixed(T + ph, 1) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + fixed(L, 1) + "\" y1=\"" + fixed(T, 1) + "\" x2=\"" + fixed(L, 1) + "\" y2=\"" + fixed(T + ph, 1) +
         "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = y_max * k / 4.0;
        s += "<text x=\"" + fixed(L - 6, 1) + "\" y=\"" + fixed(py(v) + 4, 1) + "\" text-anchor=\"end\">" + fixed(v, 0) + "</text>\n";
        s += "<line x1=\"" + fixed(L, 1) + "\" y1=\"" + fixed(py(v), 1) + "\" x2=\"" + fixed(L + pw, 1) + "\" y2=\"" + fixed(py(v), 1) +
             "\" stroke=\"#ddd\"/>\n";
    }
    for (std::size_t i = 0; i < n; ++i)
        s += "<text x=\"" + fixed(px(i), 1) + "\" y=\"" + fixed(T + ph + 18, 1) + "\" text-anchor=\"middle\">" + x_ticks[i] + "</text>\n";
    s += "<text x=\"" + fixed(L + pw / 2, 1) + "\" y=\"" + fixed(H - 10, 1) + "\" text-anchor=\"middle\">" + x_label + "</text>\n";
    s += "<text x=\"16\" y=\"" + fixed(T + ph / 2, 1) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + fixed(T + ph / 2, 1) +
         ")\">" + y_label + "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* c = colors[k % 6];
        std::string pts;
        for (std::size_t i = 0; i < series[k].y.size() && i < n; ++i) pts += fixed(px(i), 1) + "," + fixed(py(series[k].y[i]), 1) + " ";
        s += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        const double ly = T + 14 + 18.0 * static_cast<double>(k);
        s += "<line x1=\"" + fixed(L + pw + 12, 1) + "\" y1=\"" + fixed(ly, 1) + "\" x2=\"" + fixed(L + pw + 32, 1) + "\" y2=\"" +
             fixed(ly, 1) + "\" stroke=\"" + c + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + fixed(L + pw + 36, 1) + "\" y=\"" + fixed(ly + 4, 1) + "\">" + series[k].label + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

} // namespace gando::orchestrator
