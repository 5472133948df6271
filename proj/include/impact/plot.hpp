#pragma once

// Static SVG plots of CSV columns. Output depends only on the input table,
// so identical data gives byte-identical files.

#include "impact/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace impact {

enum class LineStyle {
    solid,
    /// Solid where the `stability` column is +1, dashed where it is -1;
    /// rows with is_fold = 1 get filled circles.
    by_stability,
};

struct PlotOptions {
    std::string x;
    std::string y;
    LineStyle style = LineStyle::by_stability;
    int width = 720;
    int height = 480;
    std::string title;
};

namespace detail {

inline std::string svg_number(double v, int decimals = 2) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
    std::string s(buf, res.ptr);
    if (s == "-0.00" || s == "-0") s.erase(0, 1);
    return s;
}

/// Tick values covering [lo, hi] with a 1-2-5 spacing.
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
    const double span = hi - lo;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step)
        ticks.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
    return ticks;
}

inline std::string tick_label(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << v;
    return os.str();
}

inline std::string escape_xml(const std::string& s) {
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

}  // namespace detail

/// Renders columns x and y of a table. Consecutive rows are joined; a line
/// segment is dashed when either end is unstable.
inline std::string plot_svg(const CsvTable& table, const PlotOptions& opt) {
    const int cx = table.column(opt.x);
    const int cy = table.column(opt.y);
    if (cx < 0) throw std::invalid_argument("no column named '" + opt.x + "'");
    if (cy < 0) throw std::invalid_argument("no column named '" + opt.y + "'");
    const int cs = opt.style == LineStyle::by_stability ? table.column("stability") : -1;
    const int cf = opt.style == LineStyle::by_stability ? table.column("is_fold") : -1;

    const std::size_t n = table.rows.size();
    std::vector<double> xs(n), ys(n);
    std::vector<int> stab(n, 1);
    std::vector<bool> fold(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = table.number(i, cx);
        ys[i] = table.number(i, cy);
        if (cs >= 0) stab[i] = table.number(i, cs) > 0.0 ? 1 : -1;
        if (cf >= 0) fold[i] = table.number(i, cf) != 0.0;
    }

    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (n > 0) {
        x0 = *std::min_element(xs.begin(), xs.end());
        x1 = *std::max_element(xs.begin(), xs.end());
        y0 = *std::min_element(ys.begin(), ys.end());
        y1 = *std::max_element(ys.begin(), ys.end());
    }
    auto pad = [](double& lo, double& hi) {
        if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double m = 0.04 * (hi - lo);
        lo -= m;
        hi += m;
    };
    pad(x0, x1);
    pad(y0, y1);

    const double left = 70, right = 20, top = opt.title.empty() ? 20 : 40, bottom = 50;
    const double pw = opt.width - left - right, ph = opt.height - top - bottom;
    auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
    auto sy = [&](double v) { return top + (y1 - v) / (y1 - y0) * ph; };
    using detail::svg_number;

    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
       << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opt.title.empty())
        os << "<text x=\"" << svg_number(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" "
           << "font-family=\"sans-serif\" font-size=\"14\">" << detail::escape_xml(opt.title)
           << "</text>\n";

    // Axes, ticks and grid.
    os << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
    os << "<rect x=\"" << svg_number(left) << "\" y=\"" << svg_number(top) << "\" width=\""
       << svg_number(pw) << "\" height=\"" << svg_number(ph) << "\"/>\n";
    os << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (double t : detail::nice_ticks(x0, x1)) {
        const double px = sx(t);
        os << "<line x1=\"" << svg_number(px) << "\" y1=\"" << svg_number(top + ph) << "\" x2=\""
           << svg_number(px) << "\" y2=\"" << svg_number(top + ph + 5) << "\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << svg_number(px) << "\" y1=\"" << svg_number(top) << "\" x2=\""
           << svg_number(px) << "\" y2=\"" << svg_number(top + ph)
           << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        os << "<text x=\"" << svg_number(px) << "\" y=\"" << svg_number(top + ph + 18)
           << "\" text-anchor=\"middle\">" << detail::tick_label(t) << "</text>\n";
    }
    for (double t : detail::nice_ticks(y0, y1)) {
        const double py = sy(t);
        os << "<line x1=\"" << svg_number(left - 5) << "\" y1=\"" << svg_number(py) << "\" x2=\""
           << svg_number(left) << "\" y2=\"" << svg_number(py) << "\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << svg_number(left) << "\" y1=\"" << svg_number(py) << "\" x2=\""
           << svg_number(left + pw) << "\" y2=\"" << svg_number(py)
           << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        os << "<text x=\"" << svg_number(left - 8) << "\" y=\"" << svg_number(py + 4)
           << "\" text-anchor=\"end\">" << detail::tick_label(t) << "</text>\n";
    }
    os << "<text x=\"" << svg_number(left + pw / 2) << "\" y=\"" << svg_number(opt.height - 10.0)
       << "\" text-anchor=\"middle\">" << detail::escape_xml(opt.x) << "</text>\n";
    os << "<text transform=\"translate(16," << svg_number(top + ph / 2) << ") rotate(-90)\" "
       << "text-anchor=\"middle\">" << detail::escape_xml(opt.y) << "</text>\n";
    os << "</g>\n";

    // Data: one polyline per run of equal line style.
    os << "<g fill=\"none\" stroke=\"#1f4e99\" stroke-width=\"1.5\">\n";
    std::size_t i = 0;
    while (i + 1 < n) {
        const bool dashed = stab[i] < 0 || stab[i + 1] < 0;
        std::size_t j = i + 1;
        while (j + 1 < n && ((stab[j] < 0 || stab[j + 1] < 0) == dashed)) ++j;
        os << "<polyline" << (dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
        for (std::size_t k = i; k <= j; ++k)
            os << (k > i ? " " : "") << svg_number(sx(xs[k])) << ',' << svg_number(sy(ys[k]));
        os << "\"/>\n";
        i = j;
    }
    os << "</g>\n<g fill=\"#777777\" stroke=\"none\">\n";
    for (std::size_t k = 0; k < n; ++k)
        if (fold[k])
            os << "<circle cx=\"" << svg_number(sx(xs[k])) << "\" cy=\"" << svg_number(sy(ys[k]))
               << "\" r=\"4\"/>\n";
    os << "</g>\n";

    // Legend.
    if (opt.style == LineStyle::by_stability) {
        const double lx = left + pw - 120, ly = top + 12;
        os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
        os << "<line x1=\"" << svg_number(lx) << "\" y1=\"" << svg_number(ly) << "\" x2=\""
           << svg_number(lx + 24) << "\" y2=\"" << svg_number(ly)
           << "\" stroke=\"#1f4e99\" stroke-width=\"1.5\"/>\n";
        os << "<text x=\"" << svg_number(lx + 30) << "\" y=\"" << svg_number(ly + 4)
           << "\">stable</text>\n";
        os << "<line x1=\"" << svg_number(lx) << "\" y1=\"" << svg_number(ly + 16) << "\" x2=\""
           << svg_number(lx + 24) << "\" y2=\"" << svg_number(ly + 16)
           << "\" stroke=\"#1f4e99\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
        os << "<text x=\"" << svg_number(lx + 30) << "\" y=\"" << svg_number(ly + 20)
           << "\">unstable</text>\n";
        os << "<circle cx=\"" << svg_number(lx + 12) << "\" cy=\"" << svg_number(ly + 32)
           << "\" r=\"4\" fill=\"#777777\"/>\n";
        os << "<text x=\"" << svg_number(lx + 30) << "\" y=\"" << svg_number(ly + 36)
           << "\">fold</text>\n";
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_plot(const std::filesystem::path& csv, const std::filesystem::path& svg,
                       const PlotOptions& opt) {
    const CsvTable table = read_csv(csv);
    auto out = detail::open_output(svg);
    out << plot_svg(table, opt);
}

}  // namespace impact
