#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mdlsel/nnet.hpp"
#include "mdlsel/taskgen.hpp"

namespace mdlsel {

/// Boundaries 1 = t_0 < t_1 < ... < t_S = N. Block 0 holds samples 1..t_1 and is
/// coded by the uniform predictor; block s >= 1 holds samples t_s+1..t_{s+1} and
/// is coded by a model fitted on the first t_s samples.
struct BlockSchedule {
    std::vector<std::size_t> boundaries;

    std::size_t total() const { return boundaries.back(); }
    std::size_t block_count() const { return boundaries.size() == 1 ? 1 : boundaries.size() - 1; }
    /// 0-based half-open range of block s; the predictor is fitted on [0, begin).
    std::size_t block_begin(std::size_t s) const { return s == 0 ? 0 : boundaries[s]; }
    std::size_t block_end(std::size_t s) const {
        return boundaries.size() == 1 ? 1 : boundaries[s + 1];
    }
    void validate() const;
};

BlockSchedule make_schedule(std::size_t n, std::size_t first_block, double ratio);

/// Conditional label model used to code a block.
class Predictor {
public:
    virtual ~Predictor() = default;
    /// -log2 p(y_i | x_i) for every row of `data`.
    virtual std::vector<double> code_bits(const LabeledData& data) const = 0;
};

/// Fits a predictor on the transmitted prefix.
class Learner {
public:
    virtual ~Learner() = default;
    virtual std::unique_ptr<Predictor> fit(const LabeledData& prefix, std::uint64_t seed) const = 0;
};

class UniformPredictor final : public Predictor {
public:
    explicit UniformPredictor(int n_classes = 2) : n_classes_(n_classes) {}
    std::vector<double> code_bits(const LabeledData& data) const override;

private:
    int n_classes_;
};

class MlpPredictor final : public Predictor {
public:
    explicit MlpPredictor(MlpModel model) : model_(std::move(model)) {}
    std::vector<double> code_bits(const LabeledData& data) const override;
    const MlpModel& model() const { return model_; }

private:
    MlpModel model_;
};

/// Trains the MLP until early stopping on a fixed validation set.
class MlpLearner final : public Learner {
public:
    MlpLearner(MlpArchitecture arch, TrainConfig cfg, std::shared_ptr<const LabeledData> validation);
    std::unique_ptr<Predictor> fit(const LabeledData& prefix, std::uint64_t seed) const override;

private:
    MlpArchitecture arch_;
    TrainConfig cfg_;
    std::shared_ptr<const LabeledData> validation_;
};

/// One predictor of the prequential sequence.
struct CurvePoint {
    std::size_t train_size = 0;  ///< t_s; the predictor saw this many samples
    std::size_t block_size = 0;  ///< samples it coded (0 for the final model)
    double block_bits = 0.0;     ///< code cost of its block
    double test_bits = 0.0;      ///< l(t_s) on the held-out split, bits per sample
    double orig_bits = 0.0;      ///< l_orig(t_s) on the original distribution
    int count = 1;               ///< replicates averaged into this point
};

/// Points ordered by train_size. The last point is the final model fitted on
/// all N samples, which codes nothing.
struct PrequentialCurve {
    std::vector<CurvePoint> points;

    std::size_t total_samples() const;
    double total_bits() const;
};

struct EvalSets {
    const LabeledData* test = nullptr;      ///< held-out split of the coded distribution
    const LabeledData* original = nullptr;  ///< original (mixed) distribution
};

struct PrequentialResult {
    double total_bits = 0.0;
    PrequentialCurve curve;
};

/// Block-wise prequential codelength of `data` under `learner`.
PrequentialResult prequential_codelength(const LabeledData& data, const BlockSchedule& schedule,
                                         const Learner& learner, const EvalSets& evals,
                                         std::uint64_t seed, bool fit_final = true);

/// Weighted pool-adjacent-violators fit; the result is nonincreasing.
std::vector<double> isotonic_nonincreasing(const std::vector<double>& values,
                                           const std::vector<double>& weights);

struct Decomposition {
    double total_bits = 0.0;
    double asymptotic_bits = 0.0;  ///< N * per-sample cost of the last coded block
    double excess_bits = 0.0;      ///< total - asymptotic, before smoothing
    double model_cost_bits = 0.0;  ///< excess area of the smoothed block losses, >= 0
};

Decomposition decompose(double total_bits, const PrequentialCurve& curve, std::size_t n);

/// Replicate policy: more repetitions for small training sizes.
struct ReplicatePolicy {
    std::size_t small_n_threshold = 500;
    int small_replicates = 10;
    int large_replicates = 3;

    int replicates_for(std::size_t train_size) const {
        return train_size <= small_n_threshold ? small_replicates : large_replicates;
    }
    int max_replicates() const { return std::max(small_replicates, large_replicates); }
};

struct CandidateSpec {
    TaskConfig task;
    Feature feature = Feature::kDigit;
    std::size_t n = 8192;
    std::size_t first_block = 16;
    double ratio = 2.0;
    std::size_t test_size = 2048;
    std::size_t val_size = 512;
    MlpArchitecture arch;
    TrainConfig train;
    ReplicatePolicy replicates;
    std::uint64_t seed = 0;
};

struct ReplicateCurve {
    int replicate = 0;
    PrequentialCurve curve;
};

struct CandidateResult {
    Feature feature = Feature::kDigit;
    std::vector<ReplicateCurve> replicates;
    PrequentialCurve mean;
};

/// One replicate of a candidate: fresh feature-isolated data and training seeds.
ReplicateCurve candidate_replicate(const CandidateSpec& spec, int replicate,
                                   const DigitSource& source);
/// Pointwise mean over replicates; a point's count is the number of replicates holding it.
PrequentialCurve average_curves(const std::vector<ReplicateCurve>& replicates);
CandidateResult candidate_model_cost(const CandidateSpec& spec, const DigitSource& source);

/// CSV with columns feature,seed,t_s,block_bits,test_bits_per_sample,orig_bits_per_sample.
void write_curve_csv(std::ostream& out, Feature feature, const std::vector<ReplicateCurve>& reps,
                     bool header = true);
/// Replicates per feature, read back from write_curve_csv output.
std::map<Feature, std::vector<ReplicateCurve>> read_curve_csv(std::istream& in);

}  // namespace mdlsel
