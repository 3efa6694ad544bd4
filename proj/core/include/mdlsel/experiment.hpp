#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdlsel/envelope.hpp"
#include "mdlsel/metrics.hpp"
#include "mdlsel/nnet.hpp"
#include "mdlsel/prequential.hpp"
#include "mdlsel/taskgen.hpp"

namespace mdlsel {

enum class Preset : std::uint8_t { kDesk = 0, kFull = 1 };

Preset parse_preset(std::string_view name);
std::string_view to_string(Preset p);

/// Everything a run needs; serialized as a single JSON document.
struct ExperimentPlan {
    std::string name = "experiment";
    TaskConfig task;
    MlpArchitecture arch;
    TrainConfig train;
    std::vector<std::size_t> sizes;
    ReplicatePolicy replicates;
    /// Candidate features; the first two define the empirical transition.
    std::vector<Feature> features;
    std::size_t preq_first_block = 16;
    double preq_ratio = 2.0;
    std::size_t test_size = 2048;
    std::size_t val_size = 512;
    int n_repeats = 5;
    std::uint64_t seed = 0;
    std::string out_dir;
    int jobs = 1;

    void validate() const;
    /// Largest size of the grid; the prequential curves run up to it.
    std::size_t max_size() const { return sizes.back(); }
};

void to_json(nlohmann::json& j, const ExperimentPlan& p);
void from_json(const nlohmann::json& j, ExperimentPlan& p);

/// 2^6 ... 2^13.
std::vector<std::size_t> default_sizes();
/// Preset architecture, replicate policy and image geometry applied over `task`'s probabilities.
ExperimentPlan preset_plan(Preset preset, const TaskConfig& task);

/// Digest of the plan with output location and parallelism removed.
std::string config_hash(const ExperimentPlan& plan);

/// Runs `cells` on up to `jobs` threads; the first failure is rethrown after all finish.
void run_cells(const std::vector<std::function<void()>>& cells, int jobs);

/// Progress sink; silent by default.
using LogFn = std::function<void(const std::string&)>;

struct StageContext {
    const DigitSource* source = nullptr;  ///< defaults to the task's synthetic glyphs
    LogFn log;
};

/// Prequential curves per feature; writes curves.csv and a manifest. Completed
/// (feature, replicate) cells found on disk are reused.
std::filesystem::path run_prequential(const ExperimentPlan& plan, const StageContext& ctx = {});

struct EnvelopeOutput {
    Envelope envelope;
    std::vector<Transition> transitions;
    std::map<Feature, PrequentialCurve> mean_curves;
};

/// Builds lines from curve files and writes envelope.json and envelope.svg into out_dir.
EnvelopeOutput run_envelope(const std::vector<std::filesystem::path>& curve_files,
                            const std::filesystem::path& out_dir);

/// Trains on the original distribution for every (size, seed) and writes reliance.csv.
std::filesystem::path run_learning_sweep(const ExperimentPlan& plan, const StageContext& ctx = {});

struct ComparisonRow {
    std::string label;
    std::optional<double> n_theory;
    std::optional<EmpiricalTransition> empirical;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::optional<CorrelationReport> correlation;
};

/// Pairs each run directory's N_theory (envelope.json) with its N_empirical
/// (reliance.csv) and writes compare.json, scatter.csv and scatter.svg into out_dir.
ComparisonReport run_compare(const std::vector<std::filesystem::path>& run_dirs,
                             const std::filesystem::path& out_dir);

/// The transition reported for a run: the last feature change of the envelope.
std::optional<Transition> final_transition(const std::vector<Transition>& transitions);

/// Writes text through a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Resolved output directory: plan value, then $MDLSEL_OUT, then "mdlsel-out".
std::filesystem::path output_dir(const ExperimentPlan& plan);

}  // namespace mdlsel
