#pragma once

#include <string>
#include <vector>

namespace plumeseg {

struct Series {
    std::string name;
    std::vector<double> values;  // x is the index (epoch)
};

/// Minimal multi-series line chart; one <polyline> per series plus a legend.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& y_label, const std::vector<Series>& series);

struct Bar {
    std::string label;
    double value;
};

/// Vertical bar chart; one <rect> per bar with its value printed above.
void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& y_label, const std::vector<Bar>& bars);

}  // namespace plumeseg
