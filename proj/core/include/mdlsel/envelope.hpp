#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdlsel/prequential.hpp"

namespace mdlsel {

struct LineProvenance {
    std::string feature;
    std::size_t truncation = 0;  ///< N_t: training size of the intermediate model
};

/// Affine codelength L + N * r of one candidate model.
struct CompressionLine {
    double fixed_cost_bits = 0.0;
    double rate_bits_per_sample = 0.0;
    LineProvenance provenance;
};

double total_cost(const CompressionLine& line, double n);

/// One line per curve point: fixed cost is the area of the smoothed held-out loss
/// above its value at the truncation point; rate is the smoothed original-distribution loss.
std::vector<CompressionLine> intermediate_models(const PrequentialCurve& curve,
                                                 const std::string& feature);

struct Breakpoint {
    double n = 0.0;
    std::size_t before = 0;  ///< index into Envelope::lines
    std::size_t after = 0;
};

/// Pointwise minimum of a set of lines over N >= 0.
struct Envelope {
    std::vector<CompressionLine> lines;
    std::vector<std::size_t> hull;  ///< surviving lines in order of increasing N
    std::vector<Breakpoint> breakpoints;

    /// Index of the minimizing line at n; ties go to the lower fixed cost.
    std::size_t winner(double n) const;
};

/// Relative tolerance below which two costs are treated as tied.
inline constexpr double kTieTolerance = 1e-12;

Envelope lower_envelope(std::vector<CompressionLine> lines);

/// Crossing of the two lines, N* = (L2 - L1) / (r1 - r2).
double crossover(const CompressionLine& a, const CompressionLine& b);

struct Transition {
    double n_theory = 0.0;
    std::string from;
    std::string to;
    std::size_t from_truncation = 0;
    std::size_t to_truncation = 0;
};

/// Breakpoints of the pooled envelope whose winners come from different features.
/// Lines of untrained (N_t = 0) models are shared by every feature and never
/// count as a feature.
std::vector<Transition> transition_points(const std::map<std::string, std::vector<CompressionLine>>& by_feature);
std::vector<Transition> transition_points(const Envelope& pooled);

/// Value of `grid` closest to n on a log scale.
double nearest_grid_size(double n, const std::vector<double>& grid);

nlohmann::json envelope_to_json(const Envelope& env, const std::vector<Transition>& transitions);

struct PlotRange {
    double n_min = 1.0;
    double n_max = 1e5;
};

/// Log-log plot of total cost against N for every line and the envelope.
std::string envelope_svg(const Envelope& env, const std::vector<Transition>& transitions,
                         PlotRange range);

}  // namespace mdlsel
