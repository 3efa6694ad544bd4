#include "mdlsel/prequential.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mdlsel/error.hpp"
#include "mdlsel/format.hpp"

namespace mdlsel {

void BlockSchedule::validate() const {
    if (boundaries.empty() || boundaries.front() != 1)
        throw InvalidArgument("block schedule must start at 1");
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
        if (boundaries[i] <= boundaries[i - 1])
            throw InvalidArgument("block boundaries must be strictly increasing");
    }
}

BlockSchedule make_schedule(std::size_t n, std::size_t first_block, double ratio) {
    if (n < 1) throw InvalidArgument("schedule needs N >= 1");
    if (first_block < 1) throw InvalidArgument("first block must hold at least one sample");
    if (!(ratio > 1.0) || !std::isfinite(ratio)) throw InvalidArgument("block ratio must exceed 1");
    BlockSchedule s;
    s.boundaries.push_back(1);
    double b = static_cast<double>(first_block);
    while (b < static_cast<double>(n)) {
        const auto v = static_cast<std::size_t>(b);
        if (v > s.boundaries.back()) s.boundaries.push_back(v);
        b = std::ceil(b * ratio);
    }
    if (n > s.boundaries.back()) s.boundaries.push_back(n);
    return s;
}

std::vector<double> UniformPredictor::code_bits(const LabeledData& data) const {
    return std::vector<double>(data.size(), std::log2(static_cast<double>(n_classes_)));
}

std::vector<double> MlpPredictor::code_bits(const LabeledData& data) const {
    std::vector<double> out;
    out.reserve(data.size());
    constexpr Eigen::Index kChunk = 1024;
    for (Eigen::Index start = 0; start < data.x.rows(); start += kChunk) {
        const Eigen::Index n = std::min(kChunk, data.x.rows() - start);
        const auto bits = label_bits(forward(model_, data.x.middleRows(start, n)),
                                     std::span(data.y).subspan(static_cast<std::size_t>(start),
                                                               static_cast<std::size_t>(n)));
        out.insert(out.end(), bits.begin(), bits.end());
    }
    return out;
}

MlpLearner::MlpLearner(MlpArchitecture arch, TrainConfig cfg,
                       std::shared_ptr<const LabeledData> validation)
    : arch_(arch), cfg_(cfg), validation_(std::move(validation)) {
    if (!validation_ || validation_->size() == 0)
        throw InvalidArgument("MLP learner needs a validation set for early stopping");
}

std::unique_ptr<Predictor> MlpLearner::fit(const LabeledData& prefix, std::uint64_t seed) const {
    TrainConfig cfg = cfg_;
    cfg.seed = seed;
    return std::make_unique<MlpPredictor>(
        train_until_converged(prefix, *validation_, cfg, arch_).model);
}

std::size_t PrequentialCurve::total_samples() const {
    std::size_t n = 0;
    for (const auto& p : points) n += p.block_size;
    return n;
}

double PrequentialCurve::total_bits() const {
    double t = 0.0;
    for (const auto& p : points) t += p.block_bits;
    return t;
}

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

LabeledData rows(const LabeledData& d, std::size_t begin, std::size_t end) {
    LabeledData out;
    out.x = d.x.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    out.y.assign(d.y.begin() + static_cast<std::ptrdiff_t>(begin),
                 d.y.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

void score(CurvePoint& p, const Predictor& pred, const EvalSets& evals) {
    if (evals.test != nullptr) p.test_bits = mean_of(pred.code_bits(*evals.test));
    if (evals.original != nullptr) p.orig_bits = mean_of(pred.code_bits(*evals.original));
}

}  // namespace

PrequentialResult prequential_codelength(const LabeledData& data, const BlockSchedule& schedule,
                                         const Learner& learner, const EvalSets& evals,
                                         std::uint64_t seed, bool fit_final) {
    schedule.validate();
    if (schedule.total() != data.size())
        throw InvalidArgument("schedule covers " + std::to_string(schedule.total()) +
                              " samples but the dataset holds " + std::to_string(data.size()));
    PrequentialResult r;
    const UniformPredictor uniform;
    for (std::size_t s = 0; s < schedule.block_count(); ++s) {
        const std::size_t begin = schedule.block_begin(s);
        const std::size_t end = schedule.block_end(s);
        std::unique_ptr<Predictor> fitted;
        const Predictor* pred = &uniform;
        if (begin > 0) {
            fitted = learner.fit(rows(data, 0, begin), derive_seed(seed, s, "preq-fit"));
            pred = fitted.get();
        }
        const auto bits = pred->code_bits(rows(data, begin, end));
        CurvePoint p;
        p.train_size = begin;
        p.block_size = end - begin;
        p.block_bits = std::accumulate(bits.begin(), bits.end(), 0.0);
        score(p, *pred, evals);
        r.total_bits += p.block_bits;
        r.curve.points.push_back(p);
    }
    if (fit_final) {
        const auto final_model = learner.fit(data, derive_seed(seed, schedule.block_count(), "preq-fit"));
        CurvePoint p;
        p.train_size = data.size();
        score(p, *final_model, evals);
        r.curve.points.push_back(p);
    }
    return r;
}

std::vector<double> isotonic_nonincreasing(const std::vector<double>& values,
                                           const std::vector<double>& weights) {
    if (values.size() != weights.size()) throw InvalidArgument("isotonic: size mismatch");
    struct Pool {
        double mean;
        double weight;
        std::size_t len;
    };
    std::vector<Pool> pools;
    for (std::size_t i = 0; i < values.size(); ++i) {
        pools.push_back({values[i], weights[i], 1});
        while (pools.size() >= 2 && pools[pools.size() - 2].mean < pools.back().mean) {
            const Pool b = pools.back();
            pools.pop_back();
            Pool& a = pools.back();
            const double w = a.weight + b.weight;
            a.mean = w > 0.0 ? (a.mean * a.weight + b.mean * b.weight) / w : 0.5 * (a.mean + b.mean);
            a.weight = w;
            a.len += b.len;
        }
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& p : pools) out.insert(out.end(), p.len, p.mean);
    return out;
}

Decomposition decompose(double total_bits, const PrequentialCurve& curve, std::size_t n) {
    std::vector<double> losses;
    std::vector<double> sizes;
    for (const auto& p : curve.points) {
        if (p.block_size == 0) continue;
        losses.push_back(p.block_bits / static_cast<double>(p.block_size));
        sizes.push_back(static_cast<double>(p.block_size));
    }
    if (losses.empty()) throw InvalidArgument("decompose: curve has no coded blocks");
    Decomposition d;
    d.total_bits = total_bits;
    d.asymptotic_bits = static_cast<double>(n) * losses.back();
    d.excess_bits = total_bits - d.asymptotic_bits;

    const auto smooth = isotonic_nonincreasing(losses, sizes);
    double area = 0.0;
    for (std::size_t i = 0; i < smooth.size(); ++i) area += sizes[i] * (smooth[i] - smooth.back());
    d.model_cost_bits = std::max(0.0, area);
    return d;
}

ReplicateCurve candidate_replicate(const CandidateSpec& spec, int replicate,
                                   const DigitSource& source) {
    const auto r = static_cast<std::uint64_t>(replicate);
    const std::string feat(to_string(spec.feature));
    const BlockSchedule schedule = make_schedule(spec.n, spec.first_block, spec.ratio);

    // Replicates beyond the large-N count only fit the small-N boundaries.
    std::size_t n_used = spec.n;
    bool fit_final = true;
    if (replicate >= spec.replicates.replicates_for(spec.n)) {
        fit_final = false;
        n_used = 0;
        for (std::size_t s = 0; s < schedule.block_count(); ++s) {
            if (replicate < spec.replicates.replicates_for(schedule.block_begin(s)))
                n_used = schedule.block_end(s);
        }
    }
    BlockSchedule used = schedule;
    while (used.boundaries.size() > 1 && used.boundaries.back() > n_used) used.boundaries.pop_back();
    if (n_used > used.boundaries.back()) used.boundaries.push_back(n_used);

    const Dataset train = make_feature_isolated_dataset(
        spec.task, spec.feature, n_used, derive_seed(spec.seed, r, "preq-train/" + feat), source);
    const Dataset test = make_feature_isolated_dataset(
        spec.task, spec.feature, spec.test_size, derive_seed(spec.seed, r, "preq-test/" + feat), source);
    const auto val = std::make_shared<const LabeledData>(to_labeled(make_feature_isolated_dataset(
        spec.task, spec.feature, spec.val_size, derive_seed(spec.seed, r, "preq-val/" + feat), source)));
    const LabeledData original = to_labeled(
        make_dataset(spec.task, spec.test_size, derive_seed(spec.seed, 0, "orig-test"), source));
    const LabeledData test_xy = to_labeled(test);

    const MlpLearner learner(spec.arch, spec.train, val);
    const auto result = prequential_codelength(to_labeled(train), used, learner,
                                               EvalSets{&test_xy, &original},
                                               derive_seed(spec.seed, r, "preq-fit/" + feat), fit_final);
    return ReplicateCurve{replicate, result.curve};
}

PrequentialCurve average_curves(const std::vector<ReplicateCurve>& replicates) {
    std::map<std::size_t, std::vector<const CurvePoint*>> by_size;
    for (const auto& rep : replicates) {
        for (const auto& p : rep.curve.points) by_size[p.train_size].push_back(&p);
    }
    PrequentialCurve out;
    for (const auto& [size, pts] : by_size) {
        CurvePoint m;
        m.train_size = size;
        m.block_size = pts.front()->block_size;
        m.count = static_cast<int>(pts.size());
        for (const CurvePoint* p : pts) {
            if (p->block_size != m.block_size)
                throw InvalidArgument("replicates disagree on the block schedule");
            m.block_bits += p->block_bits;
            m.test_bits += p->test_bits;
            m.orig_bits += p->orig_bits;
        }
        const double c = static_cast<double>(pts.size());
        m.block_bits /= c;
        m.test_bits /= c;
        m.orig_bits /= c;
        out.points.push_back(m);
    }
    return out;
}

CandidateResult candidate_model_cost(const CandidateSpec& spec, const DigitSource& source) {
    CandidateResult res;
    res.feature = spec.feature;
    for (int r = 0; r < spec.replicates.max_replicates(); ++r) {
        res.replicates.push_back(candidate_replicate(spec, r, source));
    }
    res.mean = average_curves(res.replicates);
    return res;
}

void write_curve_csv(std::ostream& out, Feature feature, const std::vector<ReplicateCurve>& reps,
                     bool header) {
    if (header) out << "feature,seed,t_s,block_bits,test_bits_per_sample,orig_bits_per_sample\n";
    for (const auto& rep : reps) {
        for (const auto& p : rep.curve.points) {
            out << to_string(feature) << ',' << rep.replicate << ',' << p.train_size << ','
                << fmt_real(p.block_bits) << ',' << fmt_real(p.test_bits) << ','
                << fmt_real(p.orig_bits) << '\n';
        }
    }
}

std::map<Feature, std::vector<ReplicateCurve>> read_curve_csv(std::istream& in) {
    std::map<Feature, std::vector<ReplicateCurve>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.front() == '#' || line.rfind("feature,", 0) == 0) continue;
        const auto f = split_csv(line);
        if (f.size() != 6) throw FormatError("curve csv line " + std::to_string(lineno) + ": expected 6 fields");
        try {
            const Feature feature = parse_feature(f[0]);
            const int rep = std::stoi(f[1]);
            auto& reps = out[feature];
            if (reps.empty() || reps.back().replicate != rep) reps.push_back(ReplicateCurve{rep, {}});
            CurvePoint p;
            p.train_size = std::stoull(f[2]);
            p.block_bits = std::stod(f[3]);
            p.test_bits = std::stod(f[4]);
            p.orig_bits = std::stod(f[5]);
            reps.back().curve.points.push_back(p);
        } catch (const std::logic_error& e) {
            throw FormatError("curve csv line " + std::to_string(lineno) + ": " + e.what());
        } catch (const InvalidArgument& e) {
            throw FormatError("curve csv line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    // Block sizes are gaps between consecutive training sizes of the feature's
    // schedule; replicates that stop early share the prefix of that schedule.
    for (auto& [feature, reps] : out) {
        std::vector<std::size_t> sizes;
        for (const auto& rep : reps) {
            for (std::size_t i = 0; i < rep.curve.points.size(); ++i) {
                if (i > 0 && rep.curve.points[i].train_size <= rep.curve.points[i - 1].train_size)
                    throw FormatError("curve csv: training sizes must increase within a replicate");
                sizes.push_back(rep.curve.points[i].train_size);
            }
        }
        std::sort(sizes.begin(), sizes.end());
        sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
        for (auto& rep : reps) {
            for (auto& p : rep.curve.points) {
                const auto next = std::upper_bound(sizes.begin(), sizes.end(), p.train_size);
                p.block_size = next == sizes.end() ? 0 : *next - p.train_size;
            }
        }
    }
    return out;
}

}  // namespace mdlsel
