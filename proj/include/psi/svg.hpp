#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

// Minimal static SVG charts: axes, bars, polylines. Enough to eyeball a report.
namespace psi::svg {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y); for histograms x is the bar's left edge
};

struct Box {
    std::string label;
    double lo, q1, median, q3, hi;
};

struct Bar {
    std::string label;
    double value;
    double err_lo, err_hi;  // absolute interval ends
};

void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<std::pair<double, double>>& points,
                     bool unit_square);
void write_histogram(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series, double bar_width);
void write_box_plot(const std::filesystem::path& path, const std::string& title, const std::string& ylabel,
                    const std::vector<Box>& boxes);
void write_bar_chart(const std::filesystem::path& path, const std::string& title, const std::string& ylabel,
                     const std::vector<Bar>& bars);

}  // namespace psi::svg
