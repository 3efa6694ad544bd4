#include "mdlsel/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mdlsel/error.hpp"
#include "mdlsel/format.hpp"

namespace fs = std::filesystem;

namespace mdlsel {

Preset parse_preset(std::string_view name) {
    if (name == "desk") return Preset::kDesk;
    if (name == "full") return Preset::kFull;
    throw InvalidArgument("unknown preset '" + std::string(name) + "'");
}

std::string_view to_string(Preset p) { return p == Preset::kDesk ? "desk" : "full"; }

void ExperimentPlan::validate() const {
    task.validate();
    arch.validate();
    train.validate();
    if (arch.input_dim != task.input_dim())
        throw InvalidArgument("architecture input_dim does not match the image geometry");
    if (sizes.empty()) throw InvalidArgument("plan has no sizes");
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (sizes[i] <= sizes[i - 1]) throw InvalidArgument("sizes must be strictly increasing");
    }
    if (sizes.front() == 0) throw InvalidArgument("sizes must be positive");
    if (replicates.small_replicates < 1 || replicates.large_replicates < 1)
        throw InvalidArgument("replicate counts must be positive");
    if (features.empty()) throw InvalidArgument("plan lists no features");
    std::set<Feature> seen;
    for (Feature f : features) {
        if (!seen.insert(f).second) throw InvalidArgument("duplicate feature in plan");
        if (!task.has_feature(f))
            throw FeatureAbsent("feature '" + std::string(to_string(f)) + "' is absent from the task");
    }
    if (preq_first_block < 1 || preq_ratio <= 1.0) throw InvalidArgument("bad block schedule");
    if (test_size == 0 || val_size == 0) throw InvalidArgument("test and validation sizes must be positive");
    if (n_repeats < 1) throw InvalidArgument("n_repeats must be positive");
    if (jobs < 1) throw InvalidArgument("jobs must be positive");
}

void to_json(nlohmann::json& j, const ExperimentPlan& p) {
    std::vector<std::string> features;
    for (Feature f : p.features) features.emplace_back(to_string(f));
    j = {{"name", p.name},
         {"task", p.task},
         {"architecture", p.arch},
         {"train", p.train},
         {"sizes", p.sizes},
         {"replicates",
          {{"small_n_threshold", p.replicates.small_n_threshold},
           {"small", p.replicates.small_replicates},
           {"large", p.replicates.large_replicates}}},
         {"features", features},
         {"preq_first_block", p.preq_first_block},
         {"preq_ratio", p.preq_ratio},
         {"test_size", p.test_size},
         {"val_size", p.val_size},
         {"n_repeats", p.n_repeats},
         {"seed", p.seed},
         {"out_dir", p.out_dir},
         {"jobs", p.jobs}};
}

void from_json(const nlohmann::json& j, ExperimentPlan& p) {
    ExperimentPlan d;
    p.name = j.value("name", d.name);
    p.task = j.value("task", d.task);
    p.arch = j.value("architecture", d.arch);
    p.train = j.value("train", d.train);
    p.sizes = j.value("sizes", default_sizes());
    if (j.contains("replicates")) {
        const auto& r = j.at("replicates");
        p.replicates.small_n_threshold = r.value("small_n_threshold", d.replicates.small_n_threshold);
        p.replicates.small_replicates = r.value("small", d.replicates.small_replicates);
        p.replicates.large_replicates = r.value("large", d.replicates.large_replicates);
    }
    p.features.clear();
    for (const auto& f : j.value("features", std::vector<std::string>{}))
        p.features.push_back(parse_feature(f));
    p.preq_first_block = j.value("preq_first_block", d.preq_first_block);
    p.preq_ratio = j.value("preq_ratio", d.preq_ratio);
    p.test_size = j.value("test_size", d.test_size);
    p.val_size = j.value("val_size", d.val_size);
    p.n_repeats = j.value("n_repeats", d.n_repeats);
    p.seed = j.value("seed", d.seed);
    p.out_dir = j.value("out_dir", d.out_dir);
    p.jobs = j.value("jobs", d.jobs);
}

std::vector<std::size_t> default_sizes() {
    std::vector<std::size_t> s;
    for (int k = 6; k <= 13; ++k) s.push_back(std::size_t{1} << k);
    return s;
}

ExperimentPlan preset_plan(Preset preset, const TaskConfig& task) {
    ExperimentPlan p;
    p.task = task;
    p.sizes = default_sizes();
    if (preset == Preset::kDesk) {
        p.task.image_side = 16;
        p.task.watermark_bits = 16;
        p.arch.hidden_dim = 64;
        p.replicates = {500, 3, 3};
    } else {
        p.task.image_side = 32;
        p.task.watermark_bits = 32;
        p.arch.hidden_dim = 256;
        p.replicates = {500, 10, 3};
    }
    p.arch.n_hidden_layers = 2;
    p.arch.input_dim = p.task.input_dim();
    for (Feature f : kAllFeatures) {
        if (p.task.has_feature(f)) p.features.push_back(f);
    }
    return p;
}

std::string config_hash(const ExperimentPlan& plan) {
    nlohmann::json j = plan;
    j.erase("out_dir");
    j.erase("jobs");
    return digest_hex(j.dump());
}

void run_cells(const std::vector<std::function<void()>>& cells, int jobs) {
    if (cells.empty()) return;
    const auto n_threads = static_cast<std::size_t>(std::max(1, jobs));
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                cells[i]();
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < std::min(n_threads, cells.size()); ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path output_dir(const ExperimentPlan& plan) {
    if (!plan.out_dir.empty()) return plan.out_dir;
    if (const char* env = std::getenv("MDLSEL_OUT"); env && *env) return env;
    return "mdlsel-out";
}

namespace {

std::string hash_line(const std::string& hash) { return "# config " + hash + "\n"; }

bool cell_done(const fs::path& path, const std::string& hash) {
    if (!fs::exists(path)) return false;
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    return first + "\n" == hash_line(hash);
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Manifest of one output directory; the timestamp is its only run-dependent field.
class Manifest {
public:
    Manifest(fs::path dir, const ExperimentPlan& plan) : path_(dir / "manifest.json") {
        hash_ = config_hash(plan);
        if (fs::exists(path_)) {
            try {
                doc_ = nlohmann::json::parse(read_text(path_));
            } catch (const nlohmann::json::exception&) {
                doc_ = nlohmann::json::object();
            }
            if (doc_.value("config_hash", "") != hash_) doc_ = nlohmann::json::object();
        }
        nlohmann::json plan_json = plan;
        plan_json.erase("out_dir");
        plan_json.erase("jobs");
        doc_["config_hash"] = hash_;
        doc_["plan"] = plan_json;
        if (!doc_.contains("stages")) doc_["stages"] = nlohmann::json::object();
        save();
    }

    const std::string& hash() const { return hash_; }

    void complete(const std::string& stage, const std::string& cell, std::uint64_t seed) {
        std::lock_guard lock(mu_);
        auto& cells = doc_["stages"][stage];
        cells[cell] = {{"seed", seed}};
        save();
    }

    void finish(const std::string& stage, const std::string& output) {
        std::lock_guard lock(mu_);
        doc_["outputs"][stage] = output;
        save();
    }

private:
    void save() {
        doc_["updated_at"] = utc_now();
        write_text_atomic(path_, doc_.dump(2) + "\n");
    }

    fs::path path_;
    std::string hash_;
    nlohmann::json doc_;
    std::mutex mu_;
};

const DigitSource& resolve_source(const StageContext& ctx, const TaskConfig& task,
                                  std::unique_ptr<DigitSource>& holder) {
    if (ctx.source) {
        if (ctx.source->image_side() != task.image_side)
            throw InvalidArgument("digit source side does not match the task");
        return *ctx.source;
    }
    holder = default_source(task);
    return *holder;
}

void log(const StageContext& ctx, const std::string& msg) {
    if (ctx.log) ctx.log(msg);
}

}  // namespace

fs::path run_prequential(const ExperimentPlan& plan, const StageContext& ctx) {
    plan.validate();
    std::unique_ptr<DigitSource> holder;
    const DigitSource& source = resolve_source(ctx, plan.task, holder);
    const fs::path dir = output_dir(plan);
    fs::create_directories(dir / "cells");
    Manifest manifest(dir, plan);

    struct Cell {
        Feature feature;
        int replicate;
        fs::path path;
    };
    std::vector<Cell> cells;
    for (Feature f : plan.features) {
        for (int r = 0; r < plan.replicates.max_replicates(); ++r) {
            cells.push_back({f, r,
                             dir / "cells" /
                                 ("preq-" + std::string(to_string(f)) + "-r" + std::to_string(r) + ".csv")});
        }
    }

    std::vector<std::function<void()>> work;
    for (const auto& c : cells) {
        if (cell_done(c.path, manifest.hash())) {
            log(ctx, "preq " + std::string(to_string(c.feature)) + " r" + std::to_string(c.replicate) +
                         ": cached");
            continue;
        }
        work.emplace_back([&, c] {
            CandidateSpec spec;
            spec.task = plan.task;
            spec.feature = c.feature;
            spec.n = plan.max_size();
            spec.first_block = plan.preq_first_block;
            spec.ratio = plan.preq_ratio;
            spec.test_size = plan.test_size;
            spec.val_size = plan.val_size;
            spec.arch = plan.arch;
            spec.train = plan.train;
            spec.replicates = plan.replicates;
            spec.seed = plan.seed;
            const auto rep = candidate_replicate(spec, c.replicate, source);
            std::ostringstream csv;
            csv << hash_line(manifest.hash());
            write_curve_csv(csv, c.feature, {rep}, false);
            write_text_atomic(c.path, csv.str());
            manifest.complete("preq", c.path.filename().string(), plan.seed);
            log(ctx, "preq " + std::string(to_string(c.feature)) + " r" + std::to_string(c.replicate) +
                         ": done");
        });
    }
    run_cells(work, plan.jobs);

    std::ostringstream merged;
    merged << hash_line(manifest.hash());
    merged << "feature,seed,t_s,block_bits,test_bits_per_sample,orig_bits_per_sample\n";
    for (const auto& c : cells) {
        std::istringstream in(read_text(c.path));
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.front() != '#') merged << line << '\n';
        }
    }
    const fs::path out = dir / "curves.csv";
    write_text_atomic(out, merged.str());
    manifest.finish("preq", "curves.csv");
    return out;
}

EnvelopeOutput run_envelope(const std::vector<fs::path>& curve_files, const fs::path& out_dir) {
    if (curve_files.empty()) throw InvalidArgument("no curve files");
    std::map<Feature, std::vector<ReplicateCurve>> curves;
    std::string hash;
    for (const auto& path : curve_files) {
        const std::string text = read_text(path);
        if (hash.empty() && text.rfind("# config ", 0) == 0)
            hash = text.substr(9, text.find('\n') - 9);
        std::istringstream in(text);
        for (auto& [feature, reps] : read_curve_csv(in)) {
            auto& dst = curves[feature];
            dst.insert(dst.end(), reps.begin(), reps.end());
        }
    }
    if (curves.empty()) throw FormatError("curve files hold no curves");

    EnvelopeOutput out;
    std::map<std::string, std::vector<CompressionLine>> by_feature;
    std::vector<CompressionLine> pooled;
    for (const auto& [feature, reps] : curves) {
        out.mean_curves[feature] = average_curves(reps);
        auto lines = intermediate_models(out.mean_curves[feature], std::string(to_string(feature)));
        pooled.insert(pooled.end(), lines.begin(), lines.end());
    }
    out.envelope = lower_envelope(pooled);
    out.transitions = transition_points(out.envelope);

    nlohmann::json doc = envelope_to_json(out.envelope, out.transitions);
    doc["config_hash"] = hash;
    std::vector<std::string> features;
    for (const auto& [feature, _] : curves) features.emplace_back(to_string(feature));
    doc["features"] = features;
    if (const auto t = final_transition(out.transitions)) {
        doc["n_theory"] = t->n_theory;
        doc["n_theory_grid"] = nearest_grid_size(t->n_theory, [] {
            std::vector<double> g;
            for (auto s : default_sizes()) g.push_back(static_cast<double>(s));
            return g;
        }());
    } else {
        doc["n_theory"] = nullptr;
    }
    fs::create_directories(out_dir);
    write_text_atomic(out_dir / "envelope.json", doc.dump(2) + "\n");
    std::string svg = envelope_svg(out.envelope, out.transitions, {1.0, 1e5});
    svg.insert(svg.find('\n') + 1, "<!-- config " + hash + " -->\n");
    write_text_atomic(out_dir / "envelope.svg", svg);
    return out;
}

std::optional<Transition> final_transition(const std::vector<Transition>& transitions) {
    if (transitions.empty()) return std::nullopt;
    return transitions.back();
}

fs::path run_learning_sweep(const ExperimentPlan& plan, const StageContext& ctx) {
    plan.validate();
    std::unique_ptr<DigitSource> holder;
    const DigitSource& source = resolve_source(ctx, plan.task, holder);
    const fs::path dir = output_dir(plan);
    fs::create_directories(dir / "cells");
    Manifest manifest(dir, plan);

    const Dataset test = make_dataset(plan.task, plan.test_size, derive_seed(plan.seed, 0, "sweep-test"), source);
    const OodSuite suite = OodSuite::build(plan.task, plan.test_size, derive_seed(plan.seed, 0, "sweep-ood"), source);

    struct Cell {
        std::size_t n;
        int seed;
        fs::path path;
    };
    std::vector<Cell> cells;
    for (std::size_t n : plan.sizes) {
        for (int s = 0; s < plan.replicates.replicates_for(n); ++s) {
            cells.push_back({n, s, dir / "cells" /
                                       ("sweep-n" + std::to_string(n) + "-s" + std::to_string(s) + ".csv")});
        }
    }

    std::vector<std::function<void()>> work;
    for (const auto& c : cells) {
        if (cell_done(c.path, manifest.hash())) {
            log(ctx, "sweep n=" + std::to_string(c.n) + " s" + std::to_string(c.seed) + ": cached");
            continue;
        }
        work.emplace_back([&, c] {
            const std::uint64_t cell_seed = derive_seed(derive_seed(plan.seed, c.n, "sweep"), c.seed, "cell");
            const LabeledData train = to_labeled(make_dataset(plan.task, c.n, derive_seed(cell_seed, 0, "train"), source));
            const LabeledData val = to_labeled(make_dataset(plan.task, plan.val_size, derive_seed(cell_seed, 0, "val"), source));
            TrainConfig cfg = plan.train;
            cfg.seed = derive_seed(cell_seed, 0, "fit");
            const TrainResult fit = train_until_converged(train, val, cfg, plan.arch);

            RelianceSeries series;
            series.accuracies.push_back({c.n, c.seed, ood_accuracies(fit.model, suite, &train, &val)});
            for (Feature f : kAllFeatures) {
                if (!plan.task.has_feature(f)) continue;
                Rng rng(cell_seed, static_cast<std::uint64_t>(f), "permute");
                series.gaps.push_back({c.n, c.seed, f, permutation_importance(fit.model, test, f, rng, plan.n_repeats)});
            }
            std::ostringstream csv;
            csv << hash_line(manifest.hash());
            write_reliance_csv(csv, series);
            write_text_atomic(c.path, csv.str());
            manifest.complete("sweep", c.path.filename().string(), cfg.seed);
            log(ctx, "sweep n=" + std::to_string(c.n) + " s" + std::to_string(c.seed) + ": done after " +
                         std::to_string(fit.history.size()) + " epochs");
        });
    }
    run_cells(work, plan.jobs);

    RelianceSeries merged;
    for (const auto& c : cells) {
        std::istringstream in(read_text(c.path));
        const auto part = read_reliance_csv(in);
        merged.gaps.insert(merged.gaps.end(), part.gaps.begin(), part.gaps.end());
        merged.accuracies.insert(merged.accuracies.end(), part.accuracies.begin(), part.accuracies.end());
    }
    std::ostringstream csv;
    csv << hash_line(manifest.hash());
    write_reliance_csv(csv, merged);
    const fs::path out = dir / "reliance.csv";
    write_text_atomic(out, csv.str());
    manifest.finish("sweep", "reliance.csv");
    return out;
}

ComparisonReport run_compare(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
    if (run_dirs.empty()) throw InvalidArgument("no run directories");
    ComparisonReport report;
    std::vector<TransitionPair> pairs;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& dir : run_dirs) {
        const auto manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
        const ExperimentPlan plan = manifest.at("plan").get<ExperimentPlan>();
        if (plan.features.size() < 2) throw InvalidArgument(dir.string() + ": plan needs two features");
        const auto env = nlohmann::json::parse(read_text(dir / "envelope.json"));
        std::istringstream rel(read_text(dir / "reliance.csv"));
        const RelianceSeries series = read_reliance_csv(rel);

        ComparisonRow row;
        row.label = plan.name;
        if (env.contains("n_theory") && !env.at("n_theory").is_null()) row.n_theory = env.at("n_theory").get<double>();
        row.empirical = empirical_transition(series, plan.features[0], plan.features[1]);
        nlohmann::json r = {{"label", row.label}, {"config_hash", manifest.value("config_hash", "")}};
        r["n_theory"] = row.n_theory ? nlohmann::json(*row.n_theory) : nlohmann::json(nullptr);
        if (row.empirical) {
            r["n_empirical"] = row.empirical->n_interpolated;
            r["n_empirical_grid"] = row.empirical->n_grid;
            r["empirical_from"] = row.empirical->from;
            r["empirical_to"] = row.empirical->to;
        } else {
            r["n_empirical"] = nullptr;
        }
        rows.push_back(r);
        if (row.n_theory && row.empirical)
            pairs.push_back({row.label, *row.n_theory, row.empirical->n_interpolated});
        report.rows.push_back(std::move(row));
    }
    nlohmann::json doc = {{"rows", rows}, {"reference_pearson_full_scale", 0.976}};
    if (pairs.size() >= 3) {
        report.correlation = correlation_report(pairs);
        doc["pearson_log10"] = report.correlation->pearson_log10;
        doc["spearman"] = report.correlation->spearman;
        doc["pairs"] = report.correlation->pairs;
    } else {
        doc["pearson_log10"] = nullptr;
        doc["spearman"] = nullptr;
        doc["pairs"] = pairs.size();
    }
    fs::create_directories(out_dir);
    write_text_atomic(out_dir / "compare.json", doc.dump(2) + "\n");
    write_text_atomic(out_dir / "scatter.csv", scatter_csv(pairs));
    write_text_atomic(out_dir / "scatter.svg", scatter_svg(pairs));
    return report;
}

}  // namespace mdlsel
