#pragma once

// Dependency-free SVG line charts and heatmaps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pqos::svg {

struct Series {
    std::string name;
    std::string color;
    std::vector<double> values;
};

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

/// One polyline per series against a shared x axis.
inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<double>& x, const std::vector<Series>& series, int width = 900,
                              int height = 420) {
    const double ml = 70, mr = 20, mt = 40, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;
    double x0 = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
    double x1 = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
    double y0 = 0.0, y1 = 0.0;
    bool first = true;
    for (const auto& s : series)
        for (double v : s.values) {
            if (!std::isfinite(v)) continue;
            if (first) y0 = y1 = v, first = false;
            y0 = std::min(y0, v);
            y1 = std::max(y1, v);
        }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return mt + ph - (v - y0) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
    o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = y0 + (y1 - y0) * i / 4.0;
        const double xv = x0 + (x1 - x0) * i / 4.0;
        o << "<text x=\"" << ml - 6 << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
          << "</text>\n";
        o << "<text x=\"" << num(px(xv)) << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\">" << tick(xv)
          << "</text>\n";
    }
    o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << escape(x_label)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << mt + ph / 2 << ")\">" << escape(y_label) << "</text>\n";
    int legend = 0;
    for (const auto& s : series) {
        o << "<polyline class=\"series\" data-name=\"" << escape(s.name) << "\" fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"1.2\" points=\"";
        const std::size_t n = std::min(x.size(), s.values.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(s.values[i])) continue;
            o << num(px(x[i])) << ',' << num(py(s.values[i])) << ' ';
        }
        o << "\"/>\n";
        const double lx = ml + 10 + 150.0 * legend++;
        o << "<line x1=\"" << lx << "\" y1=\"" << mt + 12 << "\" x2=\"" << lx + 20 << "\" y2=\"" << mt + 12
          << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>";
        o << "<text x=\"" << lx + 26 << "\" y=\"" << mt + 16 << "\">" << escape(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

/// Diverging blue/white/red colour for a value in [-1, 1].
inline std::string diverging(double v) {
    v = std::clamp(v, -1.0, 1.0);
    int r, g, b;
    if (v >= 0) {
        r = 255;
        g = b = static_cast<int>(255 * (1.0 - v));
    } else {
        b = 255;
        r = g = static_cast<int>(255 * (1.0 + v));
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

inline std::string heatmap(const std::string& title, const std::vector<std::string>& rows,
                           const std::vector<std::string>& cols, const std::vector<std::optional<double>>& values) {
    const int cell = 46, ml = 260, mt = 60;
    const int width = ml + cell * static_cast<int>(cols.size()) + 20;
    const int height = mt + cell * static_cast<int>(rows.size()) + 200;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"10\" y=\"24\" font-size=\"15\">" << escape(title) << "</text>\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        o << "<text x=\"" << ml - 6 << "\" y=\"" << mt + cell * static_cast<int>(i) + cell / 2 + 4
          << "\" text-anchor=\"end\">" << escape(rows[i]) << "</text>\n";
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const auto& v = values[i * cols.size() + j];
            const int x = ml + cell * static_cast<int>(j), y = mt + cell * static_cast<int>(i);
            o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
              << "\" fill=\"" << (v ? diverging(*v) : std::string("#cccccc")) << "\" stroke=\"white\"/>";
            o << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
              << (v ? num(*v) : std::string("-")) << "</text>\n";
        }
    }
    const int label_y = mt + cell * static_cast<int>(rows.size()) + 8;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const int x = ml + cell * static_cast<int>(j) + cell / 2;
        o << "<text x=\"" << x << "\" y=\"" << label_y << "\" transform=\"rotate(60 " << x << ' ' << label_y
          << ")\">" << escape(cols[j]) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace pqos::svg
