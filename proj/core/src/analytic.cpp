#include "mdlsel/analytic.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "mdlsel/error.hpp"
#include "mdlsel/format.hpp"

namespace mdlsel {

std::string_view to_string(ArchetypeKind k) {
    switch (k) {
        case ArchetypeKind::kSpurious: return "spurious";
        case ArchetypeKind::kRobust: return "robust";
        case ArchetypeKind::kBayes: return "bayes";
    }
    return "?";
}

bool watermark_informative(const TaskConfig& cfg) {
    return cfg.watermark && !cfg.random_watermark && !cfg.digit_only;
}

void Archetype::validate() const {
    cfg.validate();
    if (kind == ArchetypeKind::kBayes && !watermark_informative(cfg))
        throw InvalidArgument("the bayes archetype needs a watermark that reveals the environment");
    if (kind == ArchetypeKind::kSpurious && cfg.digit_only)
        throw FeatureAbsent("the spurious archetype needs color");
}

double GenerativeTable::total() const {
    double t = 0.0;
    for (const auto& c : cells) t += c.probability;
    return t;
}

namespace {

bool matches(const TableCell& c, const LatentObservation& obs) {
    if (obs.band && *obs.band != c.band) return false;
    if (obs.color && *obs.color != c.color) return false;
    if (obs.environment && *obs.environment != c.watermark_env) return false;
    return true;
}

double safe_bits(double p) {
    return p <= 0.0 ? std::numeric_limits<double>::infinity() : -std::log2(p);
}

}  // namespace

double GenerativeTable::probability(const LatentObservation& obs, std::optional<int> label) const {
    double p = 0.0;
    for (const auto& c : cells) {
        if (label && c.label != *label) continue;
        if (matches(c, obs)) p += c.probability;
    }
    return p;
}

LatentObservation GenerativeTable::full_observation(const TableCell& cell) const {
    LatentObservation obs;
    if (!cfg.noise_digit) obs.band = cell.band;
    if (!cfg.digit_only) obs.color = cell.color;
    if (cell.watermark_env >= 0) obs.environment = cell.watermark_env;
    return obs;
}

GenerativeTable build_table(const TaskConfig& cfg) {
    cfg.validate();
    GenerativeTable table;
    table.cfg = cfg;
    const bool informative = watermark_informative(cfg);
    for (int band = 0; band < 2; ++band) {
        for (int flip = 0; flip < 2; ++flip) {
            for (int env = 0; env < 2; ++env) {
                const double base = 0.5 * (flip ? cfg.p_flip : 1.0 - cfg.p_flip) *
                                    (env ? cfg.p_e : 1.0 - cfg.p_e);
                const int label = band ^ flip;
                std::vector<std::pair<Color, double>> colors;
                if (cfg.digit_only) {
                    colors = {{Color::kNone, 1.0}};
                } else if (cfg.uninformative_majority && env == cfg.majority_environment()) {
                    colors = {{Color::kGreen, 0.5}, {Color::kRed, 0.5}};
                } else {
                    const bool green = (label == 0) == (env == 0);
                    colors = {{green ? Color::kGreen : Color::kRed, 1.0}};
                }
                for (const auto& [color, pc] : colors) {
                    table.cells.push_back({band, flip, env, color, label, informative ? env : -1,
                                           base * pc});
                }
            }
        }
    }
    return table;
}

LatentObservation restrict_to(const Archetype& a, const LatentObservation& full) {
    LatentObservation o;
    switch (a.kind) {
        case ArchetypeKind::kSpurious: o.color = full.color; break;
        case ArchetypeKind::kRobust: o.band = full.band; break;
        case ArchetypeKind::kBayes:
            o.color = full.color;
            o.environment = full.environment;
            break;
    }
    return o;
}

std::array<double, 2> archetype_conditional(const Archetype& a, const GenerativeTable& table,
                                            const LatentObservation& obs) {
    const bool sees_band = a.kind == ArchetypeKind::kRobust;
    const bool sees_color = a.kind != ArchetypeKind::kRobust;
    const bool sees_env = a.kind == ArchetypeKind::kBayes;
    if ((obs.band && !sees_band) || (obs.color && !sees_color) || (obs.environment && !sees_env))
        throw InvalidArgument("observation outside the " + std::string(to_string(a.kind)) +
                              " archetype's information set");
    const double p = table.probability(obs);
    if (p <= 0.0) throw InvalidArgument("observation has zero probability");
    const double p1 = table.probability(obs, 1) / p;
    return {1.0 - p1, p1};
}

ExcessReport expected_excess_bits(const Archetype& a) {
    a.validate();
    const auto table = build_table(a.cfg);
    ExcessReport r;
    for (const auto& cell : table.cells) {
        if (cell.probability <= 0.0) continue;
        const auto full = table.full_observation(cell);
        const double p_true = table.probability(full, cell.label) / table.probability(full);
        const auto q = archetype_conditional(a, table, restrict_to(a, full));
        r.cross_entropy_bits += cell.probability * safe_bits(q[cell.label]);
        r.entropy_bits += cell.probability * safe_bits(p_true);
    }
    r.excess_bits = r.cross_entropy_bits - r.entropy_bits;
    return r;
}

LatentObservation observe(const Archetype& a, const Sample& s) {
    LatentObservation full;
    if (!a.cfg.noise_digit) full.band = digit_band(s.digit_class);
    if (!a.cfg.digit_only) full.color = s.color;
    if (watermark_informative(a.cfg)) {
        if (!s.watermark) throw InvalidArgument("sample carries no watermark");
        full.environment = s.watermark->bank;
    }
    return restrict_to(a, full);
}

double empirical_cross_entropy(const Archetype& a, const Dataset& data) {
    a.validate();
    if (data.empty()) throw InvalidArgument("empty dataset");
    const auto table = build_table(a.cfg);
    std::map<std::tuple<int, int, int>, std::array<double, 2>> cache;
    double sum = 0.0;
    for (const auto& s : data.samples()) {
        const auto obs = observe(a, s);
        const auto key = std::make_tuple(obs.band.value_or(-1),
                                         obs.color ? static_cast<int>(*obs.color) : -1,
                                         obs.environment.value_or(-1));
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, archetype_conditional(a, table, obs)).first;
        sum += safe_bits(it->second[s.label]);
    }
    return sum / static_cast<double>(data.size());
}

std::size_t idealized_choice(const std::vector<CandidateCost>& candidates, double n) {
    if (candidates.empty()) throw InvalidArgument("no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double ci = candidates[i].fixed_bits + n * candidates[i].rate_bits;
        const double cb = candidates[best].fixed_bits + n * candidates[best].rate_bits;
        if (ci < cb || (ci == cb && candidates[i].fixed_bits < candidates[best].fixed_bits)) best = i;
    }
    return best;
}

namespace {

// N at which `later` (the costlier, lower-rate code) becomes cheaper; +inf if never.
double overtakes(const CandidateCost& early, const CandidateCost& later) {
    const double dr = early.rate_bits - later.rate_bits;
    if (dr <= 0.0) return std::numeric_limits<double>::infinity();
    return std::max(0.0, (later.fixed_bits - early.fixed_bits) / dr);
}

}  // namespace

RobustnessWindow scenario_bounds(const std::vector<TaggedCandidate>& candidates) {
    std::optional<CandidateCost> spur, robust, bayes;
    for (const auto& c : candidates) {
        switch (c.kind) {
            case ArchetypeKind::kSpurious: spur = c.cost; break;
            case ArchetypeKind::kRobust: robust = c.cost; break;
            case ArchetypeKind::kBayes: bayes = c.cost; break;
        }
    }
    if (!spur || !robust || !bayes) throw InvalidArgument("need spurious, robust and bayes candidates");
    return {overtakes(*spur, *robust), overtakes(*robust, *bayes)};
}

double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

std::string archetype_table_csv(const TaskConfig& cfg) {
    const auto table = build_table(cfg);
    std::ostringstream out;
    out << "band,flip,environment,color,label,watermark_env,probability";
    std::vector<Archetype> archetypes;
    for (auto kind : {ArchetypeKind::kSpurious, ArchetypeKind::kRobust, ArchetypeKind::kBayes}) {
        Archetype a{kind, cfg};
        try {
            a.validate();
        } catch (const Error&) {
            continue;
        }
        archetypes.push_back(a);
        out << ",p1_" << to_string(kind);
    }
    out << '\n';
    for (const auto& c : table.cells) {
        out << c.band << ',' << c.flip << ',' << c.environment << ',' << to_string(c.color) << ','
            << c.label << ',' << c.watermark_env << ',' << fmt_real(c.probability);
        for (const auto& a : archetypes) {
            const auto obs = restrict_to(a, table.full_observation(c));
            out << ',';
            if (table.probability(obs) > 0) out << fmt_real(archetype_conditional(a, table, obs)[1]);
        }
        out << '\n';
    }
    out << "\narchetype,cross_entropy_bits,entropy_bits,excess_bits\n";
    for (const auto& a : archetypes) {
        const auto r = expected_excess_bits(a);
        out << to_string(a.kind) << ',' << fmt_real(r.cross_entropy_bits) << ','
            << fmt_real(r.entropy_bits) << ',' << fmt_real(r.excess_bits) << '\n';
    }
    return out.str();
}

std::string choice_sweep_csv(const std::vector<TaggedCandidate>& candidates,
                             const std::vector<double>& sizes) {
    std::vector<CandidateCost> costs;
    for (const auto& c : candidates) costs.push_back(c.cost);
    std::ostringstream out;
    out << "n,choice";
    for (const auto& c : candidates) out << ",cost_" << to_string(c.kind);
    out << '\n';
    for (double n : sizes) {
        out << fmt_real(n) << ',' << to_string(candidates[idealized_choice(costs, n)].kind);
        for (const auto& c : costs) out << ',' << fmt_real(c.fixed_bits + n * c.rate_bits);
        out << '\n';
    }
    return out.str();
}

}  // namespace mdlsel
