#include "plumeseg/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "plumeseg/errors.hpp"

namespace plumeseg {

namespace {

constexpr int kWidth = 640, kHeight = 400;
constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 40;
constexpr int kPlotW = kWidth - kLeft - kRight;
constexpr int kPlotH = kHeight - kTop - kBottom;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

void open_svg(std::ofstream& out, const std::string& path, const std::string& title,
              const std::string& y_label) {
    out.open(path);
    if (!out) throw IoError("cannot write SVG: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n"
        << "<text x=\"15\" y=\"" << kTop + kPlotH / 2 << "\" text-anchor=\"middle\" transform=\""
        << "rotate(-90 15 " << kTop + kPlotH / 2 << ")\">" << y_label << "</text>\n"
        << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW
        << "\" height=\"" << kPlotH << "\" fill=\"none\" stroke=\"#333\"/>\n";
}

void axis_ticks(std::ofstream& out, double lo, double hi) {
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        const double y = kTop + kPlotH - kPlotH * k / 4.0;
        out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n"
            << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\""
            << y << "\" stroke=\"#333\"/>\n";
    }
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& y_label, const std::vector<Series>& series) {
    double lo = 0.0, hi = 1e-12;
    size_t max_len = 1;
    for (const Series& s : series)
        for (const double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (const Series& s : series) max_len = std::max(max_len, s.values.size());

    std::ofstream out;
    open_svg(out, path, title, y_label);
    axis_ticks(out, lo, hi);
    auto px = [&](size_t i) {
        return kLeft + (max_len == 1 ? 0.0
                                     : kPlotW * static_cast<double>(i) /
                                           static_cast<double>(max_len - 1));
    };
    auto py = [&](double v) { return kTop + kPlotH - kPlotH * (v - lo) / (hi - lo); };

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < series[s].values.size(); ++i)
            out << fmt(px(i)) << ',' << fmt(py(series[s].values[i])) << ' ';
        out << "\"/>\n"
            << "<text x=\"" << kLeft + 8 << "\" y=\"" << kTop + 16 + 16 * s << "\" fill=\""
            << color << "\">" << series[s].name << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("short write on SVG: " + path);
}

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& y_label, const std::vector<Bar>& bars) {
    double lo = 0.0, hi = 1e-12;
    for (const Bar& b : bars) {
        lo = std::min(lo, b.value);
        hi = std::max(hi, b.value);
    }

    std::ofstream out;
    open_svg(out, path, title, y_label);
    axis_ticks(out, lo, hi);
    const double slot = bars.empty() ? kPlotW : kPlotW / static_cast<double>(bars.size());
    auto py = [&](double v) { return kTop + kPlotH - kPlotH * (v - lo) / (hi - lo); };
    for (size_t i = 0; i < bars.size(); ++i) {
        const double x = kLeft + slot * i + slot * 0.15;
        const double y = py(std::max(bars[i].value, 0.0));
        const double h = std::abs(py(bars[i].value) - py(0.0));
        out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(slot * 0.7)
            << "\" height=\"" << fmt(h) << "\" fill=\"" << kPalette[i % std::size(kPalette)]
            << "\"/>\n"
            << "<text x=\"" << fmt(x + slot * 0.35) << "\" y=\"" << fmt(y - 4)
            << "\" text-anchor=\"middle\">" << fmt(bars[i].value) << "</text>\n"
            << "<text x=\"" << fmt(x + slot * 0.35) << "\" y=\"" << kTop + kPlotH + 16
            << "\" text-anchor=\"middle\">" << bars[i].label << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("short write on SVG: " + path);
}

}  // namespace plumeseg
