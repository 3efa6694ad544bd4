#include "mdlsel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "mdlsel/error.hpp"
#include "mdlsel/format.hpp"
#include "mdlsel/svg.hpp"

namespace mdlsel {

Dataset permute_feature(const Dataset& data, Feature feature, Rng& rng) {
    const auto& cfg = data.config();
    if (!cfg.has_feature(feature))
        throw FeatureAbsent("feature '" + std::string(to_string(feature)) + "' is absent from the task");
    std::vector<Sample> samples(data.samples().begin(), data.samples().end());
    std::vector<std::size_t> perm(samples.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());

    const auto& src = data.samples();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& from = src[perm[i]];
        Sample& to = samples[i];
        switch (feature) {
            case Feature::kDigit:
                to.digit_class = from.digit_class;
                to.glyph = from.glyph;
                break;
            case Feature::kColor: to.color = from.color; break;
            case Feature::kWatermark: to.watermark = from.watermark; break;
        }
        if (!to.image.empty()) to.image = render(to, cfg, data.banks());
    }
    return data.with_samples(std::move(samples));
}

double permutation_importance(const MlpModel& model, const Dataset& testset, Feature feature,
                              Rng& rng, int n_repeats) {
    if (n_repeats < 1) throw InvalidArgument("n_repeats must be positive");
    if (!testset.config().has_feature(feature))
        throw FeatureAbsent("feature '" + std::string(to_string(feature)) + "' is absent from the task");
    const double base = evaluate(model, testset).accuracy;
    double permuted = 0.0;
    for (int r = 0; r < n_repeats; ++r) {
        permuted += evaluate(model, permute_feature(testset, feature, rng)).accuracy;
    }
    return base - permuted / n_repeats;
}

OodSuite OodSuite::build(const TaskConfig& cfg, std::size_t n, std::uint64_t seed,
                         const DigitSource& source) {
    OodSuite suite;
    for (Feature f : kAllFeatures) {
        if (!cfg.has_feature(f)) continue;
        suite.sets.emplace(f, make_ood_testset(cfg, f, n, derive_seed(seed, static_cast<int>(f), "ood"),
                                               source));
    }
    return suite;
}

std::map<std::string, double> ood_accuracies(const MlpModel& model, const OodSuite& suite,
                                             const LabeledData* train,
                                             const LabeledData* validation) {
    std::map<std::string, double> acc;
    if (train) acc["training"] = evaluate(model, *train).accuracy;
    if (validation) acc["validation"] = evaluate(model, *validation).accuracy;
    for (const auto& [feature, ds] : suite.sets) {
        acc[std::string(to_string(feature))] = evaluate(model, ds).accuracy;
    }
    return acc;
}

std::vector<std::size_t> RelianceSeries::sizes() const {
    std::set<std::size_t> s;
    for (const auto& r : gaps) s.insert(r.n);
    for (const auto& a : accuracies) s.insert(a.n);
    return {s.begin(), s.end()};
}

std::optional<GapStats> RelianceSeries::stats(std::size_t n, Feature feature) const {
    std::vector<double> v;
    for (const auto& r : gaps) {
        if (r.n == n && r.feature == feature) v.push_back(r.gap);
    }
    if (v.empty()) return std::nullopt;
    GapStats s;
    s.count = static_cast<int>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / s.count;
    if (s.count > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / (s.count - 1));
    }
    return s;
}

std::optional<double> RelianceSeries::mean_accuracy(std::size_t n, const std::string& split) const {
    double sum = 0.0;
    int count = 0;
    for (const auto& a : accuracies) {
        if (a.n != n) continue;
        const auto it = a.accuracy.find(split);
        if (it == a.accuracy.end()) continue;
        sum += it->second;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return sum / count;
}

void RelianceSeries::canonicalize() {
    std::sort(gaps.begin(), gaps.end(), [](const RelianceRecord& a, const RelianceRecord& b) {
        return std::tie(a.n, a.seed, a.feature) < std::tie(b.n, b.seed, b.feature);
    });
    std::sort(accuracies.begin(), accuracies.end(), [](const SplitAccuracies& a, const SplitAccuracies& b) {
        return std::tie(a.n, a.seed) < std::tie(b.n, b.seed);
    });
}

namespace {

const std::vector<std::string>& split_names() {
    static const std::vector<std::string> names{"training", "validation", "digit", "color", "watermark"};
    return names;
}

}  // namespace

void write_reliance_csv(std::ostream& out, const RelianceSeries& series) {
    out << "n,seed,feature,gap";
    for (const auto& s : split_names()) out << ",acc_" << s;
    out << '\n';
    RelianceSeries sorted = series;
    sorted.canonicalize();
    for (const auto& r : sorted.gaps) {
        out << r.n << ',' << r.seed << ',' << to_string(r.feature) << ',' << fmt_real(r.gap);
        const SplitAccuracies* acc = nullptr;
        for (const auto& a : sorted.accuracies) {
            if (a.n == r.n && a.seed == r.seed) acc = &a;
        }
        for (const auto& s : split_names()) {
            out << ',';
            if (!acc) continue;
            const auto it = acc->accuracy.find(s);
            if (it != acc->accuracy.end()) out << fmt_real(it->second);
        }
        out << '\n';
    }
}

RelianceSeries read_reliance_csv(std::istream& in) {
    std::string line;
    do {
        if (!std::getline(in, line)) throw FormatError("reliance CSV: missing header");
    } while (!line.empty() && line.front() == '#');
    const auto header = split_csv(line);
    if (header.size() < 4 || header[0] != "n" || header[1] != "seed" || header[2] != "feature" ||
        header[3] != "gap")
        throw FormatError("reliance CSV: unexpected header");
    RelianceSeries series;
    std::set<std::pair<std::size_t, int>> seen;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != header.size())
            throw FormatError("reliance CSV: wrong field count on line " + std::to_string(row));
        try {
            RelianceRecord r;
            r.n = std::stoull(f[0]);
            r.seed = std::stoi(f[1]);
            r.feature = parse_feature(f[2]);
            r.gap = std::stod(f[3]);
            series.gaps.push_back(r);
            if (seen.insert({r.n, r.seed}).second) {
                SplitAccuracies acc{r.n, r.seed, {}};
                for (std::size_t k = 4; k < f.size(); ++k) {
                    if (!f[k].empty()) acc.accuracy[header[k].substr(4)] = std::stod(f[k]);
                }
                series.accuracies.push_back(std::move(acc));
            }
        } catch (const std::logic_error&) {
            throw FormatError("reliance CSV: bad value on line " + std::to_string(row));
        } catch (const InvalidArgument& e) {
            throw FormatError("reliance CSV line " + std::to_string(row) + ": " + e.what());
        }
    }
    return series;
}

namespace {

int sign(double v) { return (v > 0) - (v < 0); }

double nearest_size(double n, const std::vector<double>& grid) {
    double best = grid.front();
    for (double g : grid) {
        if (std::abs(std::log(g / n)) < std::abs(std::log(best / n))) best = g;
    }
    return best;
}

}  // namespace

std::optional<EmpiricalTransition> empirical_transition(const RelianceSeries& series, Feature a,
                                                        Feature b) {
    std::vector<double> ns, g;
    for (std::size_t n : series.sizes()) {
        const auto sa = series.stats(n, a);
        const auto sb = series.stats(n, b);
        if (!sa || !sb) continue;
        ns.push_back(static_cast<double>(n));
        g.push_back(sa->mean - sb->mean);
    }
    if (ns.size() < 2) return std::nullopt;

    int k = static_cast<int>(g.size()) - 1;
    while (k >= 0 && sign(g[k]) == 0) --k;
    if (k < 0) return std::nullopt;
    int j = k - 1;
    while (j >= 0 && sign(g[j]) != -sign(g[k])) {
        if (sign(g[j]) == sign(g[k])) k = j;
        --j;
    }
    if (j < 0) return std::nullopt;

    double log_n;
    if (k == j + 1) {
        const double t = g[j] / (g[j] - g[k]);
        log_n = std::log(ns[j]) + t * (std::log(ns[k]) - std::log(ns[j]));
    } else {
        // a run of exact zeros between j and k: take its geometric midpoint
        log_n = 0.5 * (std::log(ns[j + 1]) + std::log(ns[k - 1]));
    }
    EmpiricalTransition t;
    t.n_interpolated = std::exp(log_n);
    t.n_grid = nearest_size(t.n_interpolated, ns);
    const bool a_first = g[j] > 0;
    t.from = std::string(to_string(a_first ? a : b));
    t.to = std::string(to_string(a_first ? b : a));
    return t;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw InvalidArgument("pearson: mismatched inputs");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks(x), ranks(y));
}

CorrelationReport correlation_report(const std::vector<TransitionPair>& pairs) {
    if (pairs.size() < 3) throw InvalidArgument("correlation needs at least 3 pairs");
    std::vector<double> lt, le, t, e;
    for (const auto& p : pairs) {
        if (!(p.n_theory > 0) || !(p.n_empirical > 0))
            throw InvalidArgument("transition sizes must be positive");
        t.push_back(p.n_theory);
        e.push_back(p.n_empirical);
        lt.push_back(std::log10(p.n_theory));
        le.push_back(std::log10(p.n_empirical));
    }
    return {pearson(lt, le), spearman(t, e), pairs.size()};
}

std::string scatter_csv(const std::vector<TransitionPair>& pairs) {
    std::ostringstream out;
    out << "label,n_theory,n_empirical\n";
    for (const auto& p : pairs) {
        out << p.label << ',' << fmt_real(p.n_theory) << ',' << fmt_real(p.n_empirical) << '\n';
    }
    return out.str();
}

std::string scatter_svg(const std::vector<TransitionPair>& pairs) {
    double lo = 1e300, hi = 0;
    for (const auto& p : pairs) {
        lo = std::min({lo, p.n_theory, p.n_empirical});
        hi = std::max({hi, p.n_theory, p.n_empirical});
    }
    if (pairs.empty() || !(lo > 0)) {
        lo = 10;
        hi = 1e4;
    }
    lo /= 2;
    hi *= 2;
    LogLogPlot plot("N_theory", "N_empirical", lo, hi, lo, hi);
    plot.polyline({{lo, lo}, {hi, hi}}, "#888888", 1.0, 1.0);
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : pairs) pts.emplace_back(p.n_theory, p.n_empirical);
    plot.points(pts, "#1f77b4");
    return plot.str();
}

}  // namespace mdlsel
