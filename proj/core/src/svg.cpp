#include "mdlsel/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mdlsel/error.hpp"
#include "mdlsel/format.hpp"

namespace mdlsel {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 440;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 20;
constexpr double kBottom = 50;

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

LogLogPlot::LogLogPlot(std::string x_label, std::string y_label, double x_min, double x_max,
                       double y_min, double y_max)
    : x_label_(std::move(x_label)),
      y_label_(std::move(y_label)),
      x_min_(x_min),
      x_max_(x_max),
      y_min_(y_min),
      y_max_(y_max) {
    if (!(x_min > 0 && x_max > x_min && y_min > 0 && y_max > y_min))
        throw InvalidArgument("log-log plot needs positive increasing ranges");
}

double LogLogPlot::px(double x) const {
    const double t = std::log(x / x_min_) / std::log(x_max_ / x_min_);
    return kLeft + t * (kWidth - kLeft - kRight);
}

double LogLogPlot::py(double y) const {
    y = std::clamp(y, y_min_, y_max_);
    const double t = std::log(y / y_min_) / std::log(y_max_ / y_min_);
    return kHeight - kBottom - t * (kHeight - kTop - kBottom);
}

void LogLogPlot::polyline(const std::vector<std::pair<double, double>>& pts,
                          const std::string& color, double opacity, double width) {
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-opacity=\"" << num(opacity)
          << "\" stroke-width=\"" << num(width) << "\" points=\"";
    for (const auto& [x, y] : pts) {
        if (x <= 0 || y <= 0) continue;
        body_ << num(px(x)) << ',' << num(py(y)) << ' ';
    }
    body_ << "\"/>\n";
}

void LogLogPlot::points(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    for (const auto& [x, y] : pts) {
        if (x <= 0 || y <= 0) continue;
        body_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"4\" fill=\""
              << color << "\"/>\n";
    }
}

void LogLogPlot::vertical_marker(double x, const std::string& color, const std::string& label) {
    if (x < x_min_ || x > x_max_) return;
    body_ << "<line x1=\"" << num(px(x)) << "\" x2=\"" << num(px(x)) << "\" y1=\"" << num(kTop)
          << "\" y2=\"" << num(kHeight - kBottom) << "\" stroke=\"" << color
          << "\" stroke-dasharray=\"4 3\"/>\n";
    body_ << "<text x=\"" << num(px(x) + 3) << "\" y=\"" << num(kTop + 12)
          << "\" font-size=\"11\">" << escape(label) << "</text>\n";
}

void LogLogPlot::legend(const std::string& label, const std::string& color) {
    const double y = kTop + 14 + 16 * legend_rows_++;
    body_ << "<rect x=\"" << num(kWidth - 150) << "\" y=\"" << num(y - 9) << "\" width=\"10\" "
          << "height=\"10\" fill=\"" << color << "\"/>\n";
    body_ << "<text x=\"" << num(kWidth - 135) << "\" y=\"" << num(y) << "\" font-size=\"12\">"
          << escape(label) << "</text>\n";
}

std::string LogLogPlot::str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight
        << "\" height=\"" << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (double d = std::pow(10.0, std::floor(std::log10(x_min_))); d <= x_max_; d *= 10) {
        if (d < x_min_) continue;
        out << "<text x=\"" << num(px(d)) << "\" y=\"" << num(kHeight - kBottom + 16)
            << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt_real(d) << "</text>\n";
    }
    for (double d = std::pow(10.0, std::floor(std::log10(y_min_))); d <= y_max_; d *= 10) {
        if (d < y_min_) continue;
        out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(d) + 4)
            << "\" font-size=\"11\" text-anchor=\"end\">" << fmt_real(d) << "</text>\n";
    }
    out << "<text x=\"" << num((kWidth + kLeft) / 2) << "\" y=\"" << num(kHeight - 12)
        << "\" font-size=\"13\" text-anchor=\"middle\">" << escape(x_label_) << "</text>\n";
    out << "<text transform=\"translate(16," << num((kHeight - kBottom + kTop) / 2)
        << ") rotate(-90)\" font-size=\"13\" text-anchor=\"middle\">" << escape(y_label_)
        << "</text>\n";
    out << body_.str();
    out << "</svg>\n";
    return out.str();
}

}  // namespace mdlsel
