#pragma once

#include <string>
#include <vector>

namespace calm {

struct SvgBar {
    std::string label;
    double value = 0.0;
};

// Horizontal bar chart centered on zero for signed values. Fixed-precision
// coordinates keep output bytes deterministic.
std::string svg_bar_chart(const std::string& title, const std::vector<SvgBar>& bars);

struct SvgPoint {
    std::string label;
    double value = 0.0;
    bool highlighted = false;
};

// Point plot of values in listed order, highlighted points drawn larger.
std::string svg_point_plot(const std::string& title, const std::vector<SvgPoint>& points);

}  // namespace calm
