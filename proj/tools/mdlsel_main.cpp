#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mdlsel/analytic.hpp"
#include "mdlsel/dataio.hpp"
#include "mdlsel/error.hpp"
#include "mdlsel/experiment.hpp"

namespace fs = std::filesystem;
using namespace mdlsel;

namespace {

struct CommonFlags {
    std::string plan_path;
    std::string out;
    std::string preset = "desk";
    int jobs = 0;
    std::optional<std::uint64_t> seed;
    std::string images;
    std::string labels;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--plan", f.plan_path, "Experiment plan (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "Output directory (default: $MDLSEL_OUT or ./mdlsel-out)");
    cmd->add_option("--preset", f.preset, "Scale preset used when no plan is given")
        ->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "Master seed");
    cmd->add_option("--images", f.images, "IDX image file with base digits")->check(CLI::ExistingFile);
    cmd->add_option("--labels", f.labels, "IDX label file matching --images")->check(CLI::ExistingFile);
}

ExperimentPlan load_plan(const CommonFlags& f) {
    ExperimentPlan plan;
    if (!f.plan_path.empty()) {
        std::ifstream in(f.plan_path);
        try {
            const auto j = nlohmann::json::parse(in);
            plan = j.get<ExperimentPlan>();
            if (!j.contains("architecture")) plan.arch.input_dim = plan.task.input_dim();
            if (j.contains("preset")) {
                ExperimentPlan base = preset_plan(parse_preset(j.at("preset").get<std::string>()), plan.task);
                base.name = plan.name;
                base.seed = plan.seed;
                if (j.contains("features")) base.features = plan.features;
                if (j.contains("sizes")) base.sizes = plan.sizes;
                plan = base;
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(f.plan_path + ": " + e.what());
        }
    } else {
        plan = preset_plan(parse_preset(f.preset), TaskConfig{});
    }
    if (!f.out.empty()) plan.out_dir = f.out;
    if (f.jobs > 0) plan.jobs = f.jobs;
    if (f.seed) plan.seed = *f.seed;
    if (!f.images.empty()) plan.task.source = DigitSourceKind::kIdxFiles;
    plan.validate();
    return plan;
}

std::optional<StoredDigits> idx_source(const CommonFlags& f, const ExperimentPlan& plan) {
    if (f.images.empty() != f.labels.empty()) throw InvalidArgument("--images and --labels go together");
    if (f.images.empty()) return std::nullopt;
    return load_digit_source(f.images, f.labels, plan.task.image_side);
}

StageContext context(const std::optional<StoredDigits>& idx) {
    StageContext ctx;
    if (idx) ctx.source = &*idx;
    ctx.log = [](const std::string& msg) { std::clog << msg << '\n'; };
    return ctx;
}

int exit_code(const Error& e) {
    if (dynamic_cast<const FormatError*>(&e)) return 3;
    if (dynamic_cast<const FeatureAbsent*>(&e)) return 4;
    if (dynamic_cast<const CapacityError*>(&e)) return 5;
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature selection by minimum description length on the watermarked colored-digit task"};
    app.require_subcommand(1);

    CommonFlags gen_f, preq_f, sweep_f;
    std::size_t gen_n = 1024;
    std::string gen_role = "original";
    auto* gen = app.add_subcommand("gen", "Generate a dataset and write it as a binary container");
    add_common(gen, gen_f);
    gen->add_option("-n,--count", gen_n, "Samples");
    gen->add_option("--role", gen_role, "original | isolated:<feature> | ood:<feature>");

    auto* preq = app.add_subcommand("preq", "Prequential curves for every planned feature");
    add_common(preq, preq_f);

    std::vector<std::string> env_curves;
    std::string env_out;
    auto* env = app.add_subcommand("envelope", "Compression lines, lower envelope and N_theory");
    env->add_option("curves", env_curves, "Curve CSV files")->required()->check(CLI::ExistingFile);
    env->add_option("--out", env_out, "Output directory");

    auto* sweep = app.add_subcommand("sweep", "Train over the size grid and measure feature reliance");
    add_common(sweep, sweep_f);

    std::vector<std::string> cmp_runs;
    std::string cmp_out;
    auto* cmp = app.add_subcommand("compare", "Pair N_theory with N_empirical across runs");
    cmp->add_option("runs", cmp_runs, "Run directories")->required()->check(CLI::ExistingDirectory);
    cmp->add_option("--out", cmp_out, "Output directory");

    TaskConfig oracle_task;
    std::vector<double> oracle_l, oracle_r;
    auto* oracle = app.add_subcommand("oracle", "Archetype tables and idealized choices as CSV");
    oracle->add_option("--p-e", oracle_task.p_e, "P(environment = 1)")->check(CLI::Range(0.0, 1.0));
    oracle->add_option("--p-flip", oracle_task.p_flip, "Label noise")->check(CLI::Range(0.0, 1.0));
    oracle->add_flag("--no-watermark{false}", oracle_task.watermark, "Task without a watermark");
    oracle->add_option("--costs", oracle_l, "Fixed costs of spurious, robust, bayes (bits)")->expected(3);
    oracle->add_option("--rates", oracle_r, "Rates of spurious, robust, bayes (bits/sample)")->expected(3);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto plan = load_plan(gen_f);
            const auto idx = idx_source(gen_f, plan);
            std::unique_ptr<DigitSource> synth;
            const DigitSource* source = idx ? static_cast<const DigitSource*>(&*idx) : nullptr;
            if (!source) {
                synth = default_source(plan.task);
                source = synth.get();
            }
            const auto role = DatasetRole::parse(gen_role);
            Dataset ds;
            switch (role.kind) {
                case DatasetRole::Kind::kOriginal: ds = make_dataset(plan.task, gen_n, plan.seed, *source); break;
                case DatasetRole::Kind::kIsolated:
                    ds = make_feature_isolated_dataset(plan.task, role.feature, gen_n, plan.seed, *source);
                    break;
                case DatasetRole::Kind::kOod:
                    ds = make_ood_testset(plan.task, role.feature, gen_n, plan.seed, *source);
                    break;
            }
            const fs::path dir = output_dir(plan);
            fs::create_directories(dir);
            const fs::path path = dir / ("dataset-" + role.name() + ".mdlb");
            const auto bytes = encode_dataset(ds);
            write_file(path, bytes);
            std::cout << path.string() << '\n';
        } else if (*preq) {
            const auto plan = load_plan(preq_f);
            const auto idx = idx_source(preq_f, plan);
            std::cout << run_prequential(plan, context(idx)).string() << '\n';
        } else if (*env) {
            std::vector<fs::path> files(env_curves.begin(), env_curves.end());
            const fs::path out = env_out.empty() ? files.front().parent_path() : fs::path(env_out);
            const auto result = run_envelope(files, out);
            std::cout << "n_theory,from,to\n";
            for (const auto& t : result.transitions)
                std::cout << t.n_theory << ',' << t.from << ',' << t.to << '\n';
        } else if (*sweep) {
            const auto plan = load_plan(sweep_f);
            const auto idx = idx_source(sweep_f, plan);
            std::cout << run_learning_sweep(plan, context(idx)).string() << '\n';
        } else if (*cmp) {
            std::vector<fs::path> dirs(cmp_runs.begin(), cmp_runs.end());
            const fs::path out = cmp_out.empty() ? fs::path(".") : fs::path(cmp_out);
            const auto report = run_compare(dirs, out);
            std::cout << "label,n_theory,n_empirical\n";
            for (const auto& r : report.rows) {
                std::cout << r.label << ',';
                if (r.n_theory) std::cout << *r.n_theory;
                std::cout << ',';
                if (r.empirical) std::cout << r.empirical->n_interpolated;
                std::cout << '\n';
            }
            if (report.correlation)
                std::cout << "# pearson_log10=" << report.correlation->pearson_log10
                          << " spearman=" << report.correlation->spearman << '\n';
        } else if (*oracle) {
            std::cout << archetype_table_csv(oracle_task);
            if (!oracle_l.empty() && oracle_l.size() == oracle_r.size()) {
                std::vector<TaggedCandidate> cands;
                const ArchetypeKind kinds[] = {ArchetypeKind::kSpurious, ArchetypeKind::kRobust,
                                               ArchetypeKind::kBayes};
                for (std::size_t i = 0; i < 3; ++i) cands.push_back({kinds[i], {oracle_l[i], oracle_r[i]}});
                std::vector<double> sizes;
                for (double n = 1; n <= 1 << 16; n *= 2) sizes.push_back(n);
                std::cout << '\n' << choice_sweep_csv(cands, sizes);
                const auto w = scenario_bounds(cands);
                std::cout << "\nn_min,n_max,empty\n" << w.n_min << ',' << w.n_max << ',' << w.empty() << '\n';
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
