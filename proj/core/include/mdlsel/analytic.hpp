#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mdlsel/taskgen.hpp"

namespace mdlsel {

enum class ArchetypeKind : std::uint8_t { kSpurious = 0, kRobust = 1, kBayes = 2 };

std::string_view to_string(ArchetypeKind k);

/// Idealized model: spurious sees color, robust sees the digit band, bayes sees
/// color and the environment revealed by the watermark.
struct Archetype {
    ArchetypeKind kind = ArchetypeKind::kRobust;
    TaskConfig cfg;

    void validate() const;
};

/// Latent values a predictor may condition on.
struct LatentObservation {
    std::optional<int> band;
    std::optional<Color> color;
    std::optional<int> environment;
};

struct TableCell {
    int band = 0;
    int flip = 0;
    int environment = 0;
    Color color = Color::kNone;
    int label = 0;
    /// Environment readable from the watermark, or -1 when it is not informative.
    int watermark_env = -1;
    double probability = 0.0;
};

/// Exact joint over the latent outcomes of a task.
struct GenerativeTable {
    TaskConfig cfg;
    std::vector<TableCell> cells;

    double total() const;
    /// Sum of cell probabilities matching every field the observation sets.
    double probability(const LatentObservation& obs, std::optional<int> label = std::nullopt) const;
    /// Everything the input reveals: band, color, and environment when watermarked.
    LatentObservation full_observation(const TableCell& cell) const;
};

GenerativeTable build_table(const TaskConfig& cfg);

/// Whether the watermark identifies the environment.
bool watermark_informative(const TaskConfig& cfg);

/// Projection of a full observation onto the archetype's information set.
LatentObservation restrict_to(const Archetype& a, const LatentObservation& full);

/// P(y | obs) under the archetype, as {P(y=0), P(y=1)}.
std::array<double, 2> archetype_conditional(const Archetype& a, const GenerativeTable& table,
                                            const LatentObservation& obs);

struct ExcessReport {
    double cross_entropy_bits = 0.0;  ///< E[-log2 p(y|x)]
    double entropy_bits = 0.0;        ///< E[H(p*_x)]
    double excess_bits = 0.0;         ///< E[KL(p*_x || p_x)]
};

ExcessReport expected_excess_bits(const Archetype& a);

/// Observation an archetype makes of a generated sample.
LatentObservation observe(const Archetype& a, const Sample& s);

/// Mean -log2 p(y|x) of the archetype over a (latent-only) dataset.
double empirical_cross_entropy(const Archetype& a, const Dataset& data);

struct CandidateCost {
    double fixed_bits = 0.0;
    double rate_bits = 0.0;
};

/// argmin of L + N * rate; ties go to the lower L.
std::size_t idealized_choice(const std::vector<CandidateCost>& candidates, double n);

struct TaggedCandidate {
    ArchetypeKind kind = ArchetypeKind::kRobust;
    CandidateCost cost;
};

/// Range of N over which the robust archetype is the cheapest code.
struct RobustnessWindow {
    double n_min = 0.0;  ///< spurious -> robust crossover
    double n_max = 0.0;  ///< robust -> bayes crossover

    bool empty() const { return !(n_min < n_max); }
};

RobustnessWindow scenario_bounds(const std::vector<TaggedCandidate>& candidates);

/// Binary entropy in bits.
double binary_entropy(double p);

/// CSV of the table cells and of each archetype's conditional.
std::string archetype_table_csv(const TaskConfig& cfg);
/// CSV of the cheapest candidate over a grid of N.
std::string choice_sweep_csv(const std::vector<TaggedCandidate>& candidates,
                             const std::vector<double>& sizes);

}  // namespace mdlsel
