#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdlsel/nnet.hpp"
#include "mdlsel/taskgen.hpp"

namespace mdlsel {

/// Copy of `data` with `feature`'s latent values shuffled across samples and images re-rendered.
Dataset permute_feature(const Dataset& data, Feature feature, Rng& rng);

/// Accuracy on `testset` minus the mean accuracy over `n_repeats` feature permutations.
double permutation_importance(const MlpModel& model, const Dataset& testset, Feature feature,
                              Rng& rng, int n_repeats = 5);

/// Held-out sets on which the label correlates with a single feature.
struct OodSuite {
    std::map<Feature, Dataset> sets;

    static OodSuite build(const TaskConfig& cfg, std::size_t n, std::uint64_t seed,
                          const DigitSource& source);
};

/// Accuracy per split: "training", "validation" and one entry per feature set.
std::map<std::string, double> ood_accuracies(const MlpModel& model, const OodSuite& suite,
                                             const LabeledData* train = nullptr,
                                             const LabeledData* validation = nullptr);

struct RelianceRecord {
    std::size_t n = 0;
    int seed = 0;
    Feature feature = Feature::kDigit;
    double gap = 0.0;
};

struct SplitAccuracies {
    std::size_t n = 0;
    int seed = 0;
    std::map<std::string, double> accuracy;
};

struct GapStats {
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};

struct RelianceSeries {
    std::vector<RelianceRecord> gaps;
    std::vector<SplitAccuracies> accuracies;

    /// Distinct training sizes, increasing.
    std::vector<std::size_t> sizes() const;
    std::optional<GapStats> stats(std::size_t n, Feature feature) const;
    /// Mean accuracy on a split at size n over seeds.
    std::optional<double> mean_accuracy(std::size_t n, const std::string& split) const;
    /// Sort records by (n, seed, feature) so output is order-independent.
    void canonicalize();
};

/// Long format: n,seed,feature,gap followed by the split accuracies of that (n, seed).
void write_reliance_csv(std::ostream& out, const RelianceSeries& series);
RelianceSeries read_reliance_csv(std::istream& in);

struct EmpiricalTransition {
    double n_interpolated = 0.0;  ///< zero crossing, interpolated linearly in log N
    double n_grid = 0.0;          ///< closest evaluated size
    std::string from;             ///< feature with the larger gap before the crossing
    std::string to;
};

/// Last sign change of mean gap(a) - mean gap(b) over increasing N.
std::optional<EmpiricalTransition> empirical_transition(const RelianceSeries& series, Feature a,
                                                        Feature b);

struct TransitionPair {
    std::string label;
    double n_theory = 0.0;
    double n_empirical = 0.0;
};

struct CorrelationReport {
    double pearson_log10 = 0.0;
    double spearman = 0.0;
    std::size_t pairs = 0;
};

CorrelationReport correlation_report(const std::vector<TransitionPair>& pairs);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Pearson on average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

std::string scatter_csv(const std::vector<TransitionPair>& pairs);
/// N_theory against N_empirical on log axes with the identity line.
std::string scatter_svg(const std::vector<TransitionPair>& pairs);

}  // namespace mdlsel
