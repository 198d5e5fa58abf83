#include "calm/svg.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace calm {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string esc(const std::string& s) {
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

}  // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<SvgBar>& bars) {
    const double row_h = 24.0, label_w = 220.0, plot_w = 360.0, top = 40.0;
    double height = top + row_h * static_cast<double>(bars.size()) + 20.0;
    double max_abs = 1e-12;
    for (const auto& b : bars) max_abs = std::max(max_abs, std::fabs(b.value));
    double mid = label_w + plot_w / 2.0;
    double scale = (plot_w / 2.0 - 8.0) / max_abs;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(label_w + plot_w + 80)
        << "\" height=\"" << num(height) << "\" font-family=\"monospace\" font-size=\"12\">\n";
    out << "<text x=\"10\" y=\"20\" font-size=\"14\">" << esc(title) << "</text>\n";
    out << "<line x1=\"" << num(mid) << "\" y1=\"" << num(top - 10) << "\" x2=\"" << num(mid)
        << "\" y2=\"" << num(height - 10) << "\" stroke=\"#999\"/>\n";
    for (size_t i = 0; i < bars.size(); ++i) {
        double y = top + row_h * static_cast<double>(i);
        double w = bars[i].value * scale;
        double x = w >= 0 ? mid : mid + w;
        out << "<text x=\"10\" y=\"" << num(y + 14) << "\">" << esc(bars[i].label) << "</text>\n";
        out << "<rect x=\"" << num(x) << "\" y=\"" << num(y + 4) << "\" width=\""
            << num(std::fabs(w)) << "\" height=\"16\" fill=\""
            << (bars[i].value >= 0 ? "#c0504d" : "#4f81bd") << "\"/>\n";
        out << "<text x=\"" << num(label_w + plot_w + 6) << "\" y=\"" << num(y + 14) << "\">"
            << num(bars[i].value) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::string svg_point_plot(const std::string& title, const std::vector<SvgPoint>& points) {
    const double row_h = 22.0, label_w = 260.0, plot_w = 320.0, top = 40.0;
    double height = top + row_h * static_cast<double>(points.size()) + 20.0;
    double lo = 0.0, hi = 0.0;
    for (const auto& p : points) {
        lo = std::min(lo, p.value);
        hi = std::max(hi, p.value);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    auto xpos = [&](double v) { return label_w + (v - lo) / (hi - lo) * (plot_w - 20.0) + 10.0; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(label_w + plot_w + 80)
        << "\" height=\"" << num(height) << "\" font-family=\"monospace\" font-size=\"12\">\n";
    out << "<text x=\"10\" y=\"20\" font-size=\"14\">" << esc(title) << "</text>\n";
    if (lo < 0.0 && hi > 0.0) {
        out << "<line x1=\"" << num(xpos(0.0)) << "\" y1=\"" << num(top - 10) << "\" x2=\""
            << num(xpos(0.0)) << "\" y2=\"" << num(height - 10) << "\" stroke=\"#ccc\"/>\n";
    }
    for (size_t i = 0; i < points.size(); ++i) {
        double y = top + row_h * static_cast<double>(i) + 8.0;
        out << "<text x=\"10\" y=\"" << num(y + 4) << "\">" << esc(points[i].label)
            << "</text>\n";
        out << "<circle cx=\"" << num(xpos(points[i].value)) << "\" cy=\"" << num(y)
            << "\" r=\"" << (points[i].highlighted ? "6" : "3") << "\" fill=\""
            << (points[i].highlighted ? "#c0504d" : "#4f81bd") << "\"/>\n";
        out << "<text x=\"" << num(label_w + plot_w + 6) << "\" y=\"" << num(y + 4) << "\">"
            << num(points[i].value) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace calm
