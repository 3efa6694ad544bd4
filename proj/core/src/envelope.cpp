#include "mdlsel/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdlsel/error.hpp"
#include "mdlsel/format.hpp"
#include "mdlsel/svg.hpp"

namespace mdlsel {

double total_cost(const CompressionLine& line, double n) {
    return line.fixed_cost_bits + n * line.rate_bits_per_sample;
}

std::vector<CompressionLine> intermediate_models(const PrequentialCurve& curve,
                                                 const std::string& feature) {
    std::vector<CompressionLine> lines;
    if (curve.points.empty()) return lines;
    std::vector<double> test, orig, ones(curve.points.size(), 1.0);
    for (const auto& p : curve.points) {
        test.push_back(p.test_bits);
        orig.push_back(p.orig_bits);
    }
    const auto loss = isotonic_nonincreasing(test, ones);
    const auto rate = isotonic_nonincreasing(orig, ones);

    for (std::size_t k = 0; k < curve.points.size(); ++k) {
        double area = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            area += static_cast<double>(curve.points[s].block_size) * (loss[s] - loss[k]);
        }
        CompressionLine line;
        line.fixed_cost_bits = std::max(0.0, area);
        line.rate_bits_per_sample = std::max(0.0, rate[k]);
        line.provenance = {feature, curve.points[k].train_size};
        lines.push_back(std::move(line));
    }
    return lines;
}

double crossover(const CompressionLine& a, const CompressionLine& b) {
    return (b.fixed_cost_bits - a.fixed_cost_bits) /
           (a.rate_bits_per_sample - b.rate_bits_per_sample);
}

namespace {

bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= kTieTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

// With rates r1 > r2 > r3, the middle line never wins strictly when its crossing
// with the first lies at or beyond the crossing of the first and third.
bool middle_redundant(const CompressionLine& l1, const CompressionLine& l2, const CompressionLine& l3) {
    const double lhs = (l3.fixed_cost_bits - l1.fixed_cost_bits) *
                       (l1.rate_bits_per_sample - l2.rate_bits_per_sample);
    const double rhs = (l2.fixed_cost_bits - l1.fixed_cost_bits) *
                       (l1.rate_bits_per_sample - l3.rate_bits_per_sample);
    return lhs < rhs || nearly_equal(lhs, rhs);
}

}  // namespace

Envelope lower_envelope(std::vector<CompressionLine> lines) {
    if (lines.empty()) throw InvalidArgument("envelope of an empty line set");
    for (const auto& l : lines) {
        if (!std::isfinite(l.fixed_cost_bits) || !std::isfinite(l.rate_bits_per_sample))
            throw InvalidArgument("compression line with a non-finite coefficient");
    }
    Envelope env;
    env.lines = std::move(lines);

    std::vector<std::size_t> order(env.lines.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& la = env.lines[a];
        const auto& lb = env.lines[b];
        if (la.rate_bits_per_sample != lb.rate_bits_per_sample)
            return la.rate_bits_per_sample > lb.rate_bits_per_sample;
        return la.fixed_cost_bits < lb.fixed_cost_bits;
    });

    std::vector<std::size_t> hull;
    for (std::size_t idx : order) {
        const auto& line = env.lines[idx];
        if (!hull.empty()) {
            const auto& last = env.lines[hull.back()];
            // equal rates: the earlier one has the lower fixed cost
            if (nearly_equal(last.rate_bits_per_sample, line.rate_bits_per_sample)) continue;
            // a flatter line that is no more expensive at N = 0 dominates everything before it
            while (!hull.empty() && (env.lines[hull.back()].fixed_cost_bits > line.fixed_cost_bits ||
                                     nearly_equal(env.lines[hull.back()].fixed_cost_bits, line.fixed_cost_bits))) {
                hull.pop_back();
            }
        }
        while (hull.size() >= 2 &&
               middle_redundant(env.lines[hull[hull.size() - 2]], env.lines[hull.back()], line)) {
            hull.pop_back();
        }
        hull.push_back(idx);
    }
    env.hull = std::move(hull);
    for (std::size_t i = 0; i + 1 < env.hull.size(); ++i) {
        const std::size_t a = env.hull[i];
        const std::size_t b = env.hull[i + 1];
        env.breakpoints.push_back({crossover(env.lines[a], env.lines[b]), a, b});
    }
    return env;
}

std::size_t Envelope::winner(double n) const {
    // first breakpoint at or beyond n; at an exact crossing the lower fixed cost wins
    const auto it = std::lower_bound(breakpoints.begin(), breakpoints.end(), n,
                                     [](const Breakpoint& b, double v) { return b.n < v; });
    return hull[static_cast<std::size_t>(it - breakpoints.begin())];
}

std::vector<Transition> transition_points(const Envelope& pooled) {
    std::vector<Transition> out;
    for (const auto& b : pooled.breakpoints) {
        const auto& from = pooled.lines[b.before].provenance;
        const auto& to = pooled.lines[b.after].provenance;
        if (from.truncation == 0 || to.truncation == 0) continue;
        if (from.feature == to.feature) continue;
        out.push_back({b.n, from.feature, to.feature, from.truncation, to.truncation});
    }
    return out;
}

std::vector<Transition> transition_points(const std::map<std::string, std::vector<CompressionLine>>& by_feature) {
    std::vector<CompressionLine> pooled;
    for (const auto& [feature, lines] : by_feature) {
        if (lines.empty()) throw InvalidArgument("feature '" + feature + "' contributes no lines");
        pooled.insert(pooled.end(), lines.begin(), lines.end());
    }
    if (pooled.empty()) return {};
    return transition_points(lower_envelope(std::move(pooled)));
}

double nearest_grid_size(double n, const std::vector<double>& grid) {
    if (grid.empty()) throw InvalidArgument("empty grid");
    double best = grid.front();
    for (double g : grid) {
        if (std::abs(std::log(g / n)) < std::abs(std::log(best / n))) best = g;
    }
    return best;
}

nlohmann::json envelope_to_json(const Envelope& env, const std::vector<Transition>& transitions) {
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& l : env.lines) {
        lines.push_back({{"feature", l.provenance.feature},
                         {"truncation", l.provenance.truncation},
                         {"fixed_cost_bits", l.fixed_cost_bits},
                         {"rate_bits_per_sample", l.rate_bits_per_sample}});
    }
    nlohmann::json bps = nlohmann::json::array();
    for (const auto& b : env.breakpoints) {
        bps.push_back({{"n", b.n}, {"before", b.before}, {"after", b.after}});
    }
    nlohmann::json trs = nlohmann::json::array();
    for (const auto& t : transitions) {
        trs.push_back({{"n_theory", t.n_theory},
                       {"from", t.from},
                       {"to", t.to},
                       {"from_truncation", t.from_truncation},
                       {"to_truncation", t.to_truncation}});
    }
    return {{"lines", lines}, {"hull", env.hull}, {"breakpoints", bps}, {"transitions", trs}};
}

std::string envelope_svg(const Envelope& env, const std::vector<Transition>& transitions,
                         PlotRange range) {
    double y_min = 1e300;
    double y_max = 0.0;
    for (double n : {range.n_min, range.n_max}) {
        const double c = total_cost(env.lines[env.winner(n)], n);
        y_min = std::min(y_min, std::max(c, 1e-3));
        y_max = std::max(y_max, c);
    }
    for (const auto& l : env.lines) y_max = std::max(y_max, total_cost(l, range.n_max));

    LogLogPlot plot("N (training samples)", "total codelength (bits)", range.n_min, range.n_max,
                    y_min * 0.5, y_max * 2.0);
    std::map<std::string, std::string> palette;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};
    for (const auto& l : env.lines) {
        if (!palette.contains(l.provenance.feature))
            palette[l.provenance.feature] = colors[palette.size() % 5];
    }
    constexpr int kSamples = 96;
    auto grid = [&](int i) {
        return range.n_min * std::pow(range.n_max / range.n_min, static_cast<double>(i) / (kSamples - 1));
    };
    for (const auto& l : env.lines) {
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < kSamples; ++i) pts.emplace_back(grid(i), total_cost(l, grid(i)));
        plot.polyline(pts, palette[l.provenance.feature], 0.35, 1.0);
    }
    std::vector<std::pair<double, double>> lower;
    for (int i = 0; i < kSamples; ++i) {
        lower.emplace_back(grid(i), total_cost(env.lines[env.winner(grid(i))], grid(i)));
    }
    plot.polyline(lower, "#000000", 1.0, 2.5);
    for (const auto& t : transitions) plot.vertical_marker(t.n_theory, "#444444", t.from + "→" + t.to);
    for (const auto& [feature, color] : palette) plot.legend(feature, color);
    return plot.str();
}

}  // namespace mdlsel
