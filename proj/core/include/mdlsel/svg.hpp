#pragma once

#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mdlsel {

/// Minimal log-log line plot written as standalone SVG.
class LogLogPlot {
public:
    LogLogPlot(std::string x_label, std::string y_label, double x_min, double x_max, double y_min,
               double y_max);

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  double opacity, double width);
    void points(const std::vector<std::pair<double, double>>& pts, const std::string& color);
    void vertical_marker(double x, const std::string& color, const std::string& label);
    void legend(const std::string& label, const std::string& color);

    std::string str() const;

private:
    double px(double x) const;
    double py(double y) const;

    std::string x_label_, y_label_;
    double x_min_, x_max_, y_min_, y_max_;
    std::ostringstream body_;
    int legend_rows_ = 0;
};

}  // namespace mdlsel
