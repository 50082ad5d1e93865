#include "psi/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "psi/error.hpp"

namespace psi::svg {
namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string tick(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

class Doc {
public:
    explicit Doc(const std::string& title) {
        s_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
           << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
           << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
           << "</text>\n";
    }

    void axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, bool x_ticks = true) {
        const double bx = kHeight - kBottom;
        s_ << "<line x1=\"" << kLeft << "\" y1=\"" << bx << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << bx
           << "\" stroke=\"black\"/>\n"
           << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << bx
           << "\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
            s_ << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
               << "</text>\n";
            if (x_ticks) {
                const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
                s_ << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << bx + 16 << "\" text-anchor=\"middle\">"
                   << tick(xv) << "</text>\n";
            }
        }
        s_ << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 15
           << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n"
           << "<text x=\"18\" y=\"" << (kTop + bx) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
           << (kTop + bx) / 2 << ")\">" << escape(ylabel) << "</text>\n";
    }

    void legend(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            const double y = kTop + 14.0 * static_cast<double>(i);
            s_ << "<rect x=\"" << kWidth - kRight - 120 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
               << kPalette[i % 5] << "\"/>\n"
               << "<text x=\"" << kWidth - kRight - 105 << "\" y=\"" << y << "\">" << escape(names[i]) << "</text>\n";
        }
    }

    std::ostringstream& raw() { return s_; }

    void save(const std::filesystem::path& path) {
        s_ << "</svg>\n";
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        out << s_.str();
    }

private:
    std::ostringstream s_;
};

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<std::pair<double, double>>& points,
                     bool unit_square) {
    Frame f{0, 1, 0, 1};
    if (!unit_square && !points.empty()) {
        f = {points.front().first, points.front().first, points.front().second, points.front().second};
        for (auto [x, y] : points) {
            f.x0 = std::min(f.x0, x);
            f.x1 = std::max(f.x1, x);
            f.y0 = std::min(f.y0, y);
            f.y1 = std::max(f.y1, y);
        }
        if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
        if (f.y1 <= f.y0) f.y1 = f.y0 + 1;
    }
    Doc doc(title);
    doc.axes(f, xlabel, ylabel);
    if (unit_square)
        doc.raw() << "<line x1=\"" << num(f.px(0)) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(f.px(1))
                  << "\" y2=\"" << num(f.py(1)) << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
    doc.raw() << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : points) doc.raw() << num(f.px(x)) << ',' << num(f.py(y)) << ' ';
    doc.raw() << "\"/>\n";
    doc.save(path);
}

void write_histogram(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series, double bar_width) {
    Frame f{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0, 1};
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            f.x0 = std::min(f.x0, x);
            f.x1 = std::max(f.x1, x + bar_width);
            f.y1 = std::max(f.y1, y);
        }
    if (!(f.x1 > f.x0)) f = {0, 1, 0, 1};
    Doc doc(title);
    doc.axes(f, xlabel, ylabel);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < series.size(); ++i) {
        names.push_back(series[i].name);
        for (auto [x, y] : series[i].points) {
            if (y <= 0) continue;
            doc.raw() << "<rect x=\"" << num(f.px(x)) << "\" y=\"" << num(f.py(y)) << "\" width=\""
                      << num(f.px(x + bar_width) - f.px(x)) << "\" height=\"" << num(f.py(0) - f.py(y))
                      << "\" fill=\"" << kPalette[i % 5] << "\" fill-opacity=\"0.5\"/>\n";
        }
    }
    doc.legend(names);
    doc.save(path);
}

void write_box_plot(const std::filesystem::path& path, const std::string& title, const std::string& ylabel,
                    const std::vector<Box>& boxes) {
    Frame f{0, static_cast<double>(std::max<std::size_t>(boxes.size(), 1)), std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
    for (const auto& b : boxes) {
        f.y0 = std::min(f.y0, b.lo);
        f.y1 = std::max(f.y1, b.hi);
    }
    if (!(f.y1 > f.y0)) {
        f.y0 = 0;
        f.y1 = 1;
    }
    Doc doc(title);
    doc.axes(f, "", ylabel, false);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        const double cx = f.px(static_cast<double>(i) + 0.5);
        const double hw = 0.25 * (f.px(1) - f.px(0));
        const char* color = kPalette[i % 5];
        doc.raw() << "<line x1=\"" << num(cx) << "\" y1=\"" << num(f.py(b.lo)) << "\" x2=\"" << num(cx) << "\" y2=\""
                  << num(f.py(b.hi)) << "\" stroke=\"" << color << "\"/>\n"
                  << "<rect x=\"" << num(cx - hw) << "\" y=\"" << num(f.py(b.q3)) << "\" width=\"" << num(2 * hw)
                  << "\" height=\"" << num(f.py(b.q1) - f.py(b.q3)) << "\" fill=\"" << color
                  << "\" fill-opacity=\"0.4\" stroke=\"" << color << "\"/>\n"
                  << "<line x1=\"" << num(cx - hw) << "\" y1=\"" << num(f.py(b.median)) << "\" x2=\"" << num(cx + hw)
                  << "\" y2=\"" << num(f.py(b.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n"
                  << "<text x=\"" << num(cx) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
                  << escape(b.label) << "</text>\n";
    }
    doc.save(path);
}

void write_bar_chart(const std::filesystem::path& path, const std::string& title, const std::string& ylabel,
                     const std::vector<Bar>& bars) {
    Frame f{0, static_cast<double>(std::max<std::size_t>(bars.size(), 1)), 0, 0};
    for (const auto& b : bars) {
        f.y0 = std::min({f.y0, b.value, b.err_lo});
        f.y1 = std::max({f.y1, b.value, b.err_hi});
    }
    if (!(f.y1 > f.y0)) f.y1 = f.y0 + 1;
    Doc doc(title);
    doc.axes(f, "", ylabel, false);
    doc.raw() << "<line x1=\"" << kLeft << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
              << num(f.py(0)) << "\" stroke=\"#999\"/>\n";
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& b = bars[i];
        const double cx = f.px(static_cast<double>(i) + 0.5);
        const double hw = 0.3 * (f.px(1) - f.px(0));
        const double top = std::max(b.value, 0.0), bottom = std::min(b.value, 0.0);
        doc.raw() << "<rect x=\"" << num(cx - hw) << "\" y=\"" << num(f.py(top)) << "\" width=\"" << num(2 * hw)
                  << "\" height=\"" << num(f.py(bottom) - f.py(top)) << "\" fill=\"" << kPalette[i % 5]
                  << "\" fill-opacity=\"0.6\"/>\n"
                  << "<line x1=\"" << num(cx) << "\" y1=\"" << num(f.py(b.err_lo)) << "\" x2=\"" << num(cx)
                  << "\" y2=\"" << num(f.py(b.err_hi)) << "\" stroke=\"black\"/>\n"
                  << "<text x=\"" << num(cx) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
                  << escape(b.label) << "</text>\n";
    }
    doc.save(path);
}

}  // namespace psi::svg
