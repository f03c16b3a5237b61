#include "growthssm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace growthssm {

namespace {

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void add(const std::vector<double>& vs) {
        for (double v : vs) add(v);
    }
    void settle() {
        if (!(lo <= hi)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    }
};

std::string escape(const std::string& s) {
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

/// Roughly five "nice" ticks (1, 2, 5 times a power of ten).
std::vector<double> ticks(double lo, double hi) {
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    return out;
}

} // namespace

std::string render_svg(const SvgChart& chart, int width, int height) {
    const double left = 64, right = 16, top = 32, bottom = 48;
    Range xr, yr;
    for (const auto& l : chart.lines) {
        xr.add(l.x);
        yr.add(l.y);
    }
    xr.add(chart.points.x);
    yr.add(chart.points.y);
    if (chart.band) {
        xr.add(chart.band->times);
        yr.add(chart.band->lower);
        yr.add(chart.band->upper);
    }
    xr.settle();
    yr.settle();
    const double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto sy = [&](double y) { return top + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!chart.title.empty()) {
        os << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(chart.title)
           << "</text>\n";
    }
    if (chart.band && !chart.band->times.empty()) {
        const auto& b = *chart.band;
        os << "<polygon fill=\"#9ab7e0\" fill-opacity=\"0.4\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < b.times.size(); ++i) os << sx(b.times[i]) << ',' << sy(b.upper[i]) << ' ';
        for (std::size_t i = b.times.size(); i-- > 0;) os << sx(b.times[i]) << ',' << sy(b.lower[i]) << ' ';
        os << "\"/>\n";
    }
    for (std::size_t i = 0; i < chart.points.x.size(); ++i) {
        if (!std::isfinite(chart.points.y[i])) continue;
        os << "<circle cx=\"" << sx(chart.points.x[i]) << "\" cy=\"" << sy(chart.points.y[i])
           << "\" r=\"1.8\" fill=\"#555\"/>\n";
    }
    for (const auto& l : chart.lines) {
        os << "<polyline fill=\"none\" stroke=\"" << escape(l.color) << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < l.x.size(); ++i) os << sx(l.x[i]) << ',' << sy(l.y[i]) << ' ';
        os << "\"><title>" << escape(l.label) << "</title></polyline>\n";
    }
    // Axes.
    os << "<g stroke=\"black\" stroke-width=\"1\">\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
    os << "</g>\n";
    for (double t : ticks(xr.lo, xr.hi)) {
        os << "<text x=\"" << sx(t) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << t << "</text>\n";
    }
    for (double t : ticks(yr.lo, yr.hi)) {
        os << "<text x=\"" << left - 6 << "\" y=\"" << sy(t) + 4 << "\" text-anchor=\"end\">" << t << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
       << escape(chart.x_label) << "</text>\n";
    os << "<text transform=\"translate(14," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << escape(chart.y_label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace growthssm
