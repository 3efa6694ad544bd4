#include "mdlsel/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

#include "mdlsel/error.hpp"

namespace mdlsel {

std::string_view to_string(Color c) {
    switch (c) {
        case Color::kRed: return "red";
        case Color::kGreen: return "green";
        case Color::kNone: break;
    }
    return "none";
}

std::string_view to_string(Feature f) {
    switch (f) {
        case Feature::kDigit: return "digit";
        case Feature::kColor: return "color";
        case Feature::kWatermark: return "watermark";
    }
    return "?";
}

Feature parse_feature(std::string_view name) {
    for (Feature f : kAllFeatures) {
        if (to_string(f) == name) return f;
    }
    throw InvalidArgument("unknown feature '" + std::string(name) + "'");
}

void TaskConfig::validate() const {
    if (!(p_flip >= 0.0 && p_flip <= 1.0)) throw InvalidArgument("p_flip must lie in [0,1]");
    if (!(p_e >= 0.0 && p_e <= 1.0)) throw InvalidArgument("p_e must lie in [0,1]");
    if (image_side < 4) throw InvalidArgument("image_side must be at least 4");
    if (watermark) {
        if (bank_size < 1) throw InvalidArgument("bank_size must be positive");
        if (watermark_bits < 1 || watermark_bits > 64)
            throw InvalidArgument("watermark_bits must lie in [1,64]");
        if (watermark_bits > image_side)
            throw InvalidArgument("watermark_bits exceeds the image column height");
        if (watermark_bits < 63 &&
            2.0 * bank_size > std::ldexp(1.0, watermark_bits))
            throw CapacityError("2*bank_size patterns do not fit in watermark_bits bits");
    }
}

bool TaskConfig::has_feature(Feature f) const {
    switch (f) {
        case Feature::kDigit: return !noise_digit;
        case Feature::kColor: return !digit_only;
        // The watermark only reveals the environment; it predicts the label
        // through the color mapping.
        case Feature::kWatermark: return watermark && !random_watermark && !digit_only;
    }
    return false;
}

namespace {

const char* source_name(DigitSourceKind k) {
    return k == DigitSourceKind::kIdxFiles ? "idx-files" : "synthetic-glyphs";
}

}  // namespace

void to_json(nlohmann::json& j, const TaskConfig& c) {
    j = nlohmann::json{{"p_flip", c.p_flip},
                       {"p_e", c.p_e},
                       {"bank_size", c.bank_size},
                       {"watermark_bits", c.watermark_bits},
                       {"image_side", c.image_side},
                       {"watermark", c.watermark},
                       {"digit_only", c.digit_only},
                       {"noise_digit", c.noise_digit},
                       {"random_watermark", c.random_watermark},
                       {"uninformative_majority", c.uninformative_majority},
                       {"source", source_name(c.source)},
                       {"bank_seed", c.bank_seed}};
}

void from_json(const nlohmann::json& j, TaskConfig& c) {
    TaskConfig d;
    c.p_flip = j.value("p_flip", d.p_flip);
    c.p_e = j.value("p_e", d.p_e);
    c.bank_size = j.value("bank_size", d.bank_size);
    c.watermark_bits = j.value("watermark_bits", d.watermark_bits);
    c.image_side = j.value("image_side", d.image_side);
    c.watermark = j.value("watermark", d.watermark);
    c.digit_only = j.value("digit_only", d.digit_only);
    c.noise_digit = j.value("noise_digit", d.noise_digit);
    c.random_watermark = j.value("random_watermark", d.random_watermark);
    c.uninformative_majority = j.value("uninformative_majority", d.uninformative_majority);
    const std::string src = j.value("source", std::string(source_name(d.source)));
    if (src == "synthetic-glyphs") {
        c.source = DigitSourceKind::kSyntheticGlyphs;
    } else if (src == "idx-files") {
        c.source = DigitSourceKind::kIdxFiles;
    } else {
        throw InvalidArgument("unknown digit source '" + src + "'");
    }
    c.bank_seed = j.value("bank_seed", d.bank_seed);
}

WatermarkBanks generate_banks(int bank_size, int watermark_bits, Rng& rng) {
    if (bank_size < 1) throw InvalidArgument("bank_size must be positive");
    if (watermark_bits < 1 || watermark_bits > 64)
        throw InvalidArgument("watermark_bits must lie in [1,64]");
    if (watermark_bits < 63 && 2.0 * bank_size > std::ldexp(1.0, watermark_bits))
        throw CapacityError("cannot draw " + std::to_string(2 * bank_size) +
                            " distinct patterns of " + std::to_string(watermark_bits) + " bits");
    const std::uint64_t mask =
        watermark_bits == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << watermark_bits) - 1;

    WatermarkBanks out;
    out.bits = watermark_bits;
    std::unordered_set<std::uint64_t> used;
    for (auto& b : out.bank) {
        b.reserve(static_cast<std::size_t>(bank_size));
        while (b.size() < static_cast<std::size_t>(bank_size)) {
            const std::uint64_t p = rng.bits() & mask;
            if (used.insert(p).second) b.push_back(p);
        }
    }
    return out;
}

WatermarkBanks task_banks(const TaskConfig& cfg) {
    if (!cfg.watermark) return WatermarkBanks{cfg.watermark_bits, {}};
    Rng rng(cfg.bank_seed, 0, "watermark-banks");
    return generate_banks(cfg.bank_size, cfg.watermark_bits, rng);
}

std::string DatasetRole::name() const {
    switch (kind) {
        case Kind::kOriginal: return "original";
        case Kind::kIsolated: return "isolated:" + std::string(to_string(feature));
        case Kind::kOod: return "ood:" + std::string(to_string(feature));
    }
    return "original";
}

DatasetRole DatasetRole::parse(std::string_view name) {
    if (name == "original") return {};
    const auto colon = name.find(':');
    if (colon == std::string_view::npos) throw InvalidArgument("bad dataset role");
    const auto kind = name.substr(0, colon);
    DatasetRole r;
    r.feature = parse_feature(name.substr(colon + 1));
    if (kind == "isolated") {
        r.kind = Kind::kIsolated;
    } else if (kind == "ood") {
        r.kind = Kind::kOod;
    } else {
        throw InvalidArgument("bad dataset role");
    }
    return r;
}

Dataset::Dataset(TaskConfig config, WatermarkBanks banks, std::uint64_t master_seed,
                 DatasetRole role, std::vector<Sample> samples)
    : config_(std::move(config)),
      banks_(std::move(banks)),
      master_seed_(master_seed),
      role_(role),
      samples_(std::move(samples)) {}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > samples_.size()) throw InvalidArgument("slice out of range");
    std::vector<Sample> s(samples_.begin() + static_cast<std::ptrdiff_t>(first),
                          samples_.begin() + static_cast<std::ptrdiff_t>(first + count));
    return Dataset(config_, banks_, master_seed_, role_, std::move(s));
}

Dataset Dataset::with_samples(std::vector<Sample> samples) const {
    return Dataset(config_, banks_, master_seed_, role_, std::move(samples));
}

namespace {

bool same_sample(const Sample& a, const Sample& b) {
    return a.digit_class == b.digit_class && a.label == b.label &&
           a.environment == b.environment && a.color == b.color &&
           a.watermark == b.watermark && a.noise_seed == b.noise_seed && a.glyph == b.glyph &&
           a.image == b.image;
}

}  // namespace

bool operator==(const Dataset& a, const Dataset& b) {
    if (!(a.config() == b.config()) || a.master_seed() != b.master_seed() ||
        !(a.role() == b.role()) || a.banks().bits != b.banks().bits ||
        a.banks().bank != b.banks().bank || a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!same_sample(a[i], b[i])) return false;
    }
    return true;
}

int digit_band(int digit_class) { return digit_class >= 5 ? 1 : 0; }

int assign_label(int digit_class, double p_flip, Rng& rng) {
    if (digit_class < 0 || digit_class > 9) throw InvalidArgument("digit class outside 0-9");
    return digit_band(digit_class) ^ (rng.bernoulli(p_flip) ? 1 : 0);
}

namespace {

Color mapped_color(int label, int environment) {
    // environment 0: y=0 green, y=1 red; environment 1 swaps the mapping
    return (label ^ environment) == 0 ? Color::kGreen : Color::kRed;
}

Color random_color(Rng& rng) { return rng.bernoulli(0.5) ? Color::kRed : Color::kGreen; }

WatermarkRef random_pattern(const WatermarkBanks& banks, Rng& rng) {
    WatermarkRef w;
    w.bank = static_cast<std::uint8_t>(rng.below(2));
    w.index = static_cast<std::uint32_t>(rng.below(banks.bank_size()));
    return w;
}

WatermarkRef pattern_of(int environment, const WatermarkBanks& banks, Rng& rng) {
    WatermarkRef w;
    w.bank = static_cast<std::uint8_t>(environment);
    w.index = static_cast<std::uint32_t>(rng.below(banks.bank_size()));
    return w;
}

}  // namespace

Color assign_color(int label, int environment, const TaskConfig& cfg, Rng& rng) {
    if (cfg.digit_only) return Color::kNone;
    if (cfg.uninformative_majority && environment == cfg.majority_environment())
        return random_color(rng);
    return mapped_color(label, environment);
}

Image render(const Sample& s, const TaskConfig& cfg, const WatermarkBanks& banks) {
    const int side = cfg.image_side;
    const auto npix = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
    if (s.glyph.size() != npix) throw ShapeMismatch("glyph does not match image_side");

    Image img(npix * 3, 0.0f);
    Rng noise(s.noise_seed);
    for (std::size_t p = 0; p < npix; ++p) {
        float g = s.glyph[p];
        if (cfg.noise_digit) {
            g = static_cast<float>(std::clamp(noise.normal(0.5, 0.25), 0.0, 1.0));
        }
        switch (s.color) {
            case Color::kNone:
                img[3 * p] = img[3 * p + 1] = img[3 * p + 2] = g;
                break;
            case Color::kRed: img[3 * p] = g; break;
            case Color::kGreen: img[3 * p + 1] = g; break;
        }
    }
    if (s.watermark) {
        const std::uint64_t pattern = banks.bank.at(s.watermark->bank).at(s.watermark->index);
        for (int r = 0; r < side; ++r) {
            const float v = (r < banks.bits && ((pattern >> r) & 1U)) ? 1.0f : 0.0f;
            const auto p = static_cast<std::size_t>(r) * side + (side - 1);
            img[3 * p] = img[3 * p + 1] = img[3 * p + 2] = v;
        }
    }
    return img;
}

Sample make_sample(const Glyph& base_glyph, int digit_class, const TaskConfig& cfg,
                   const WatermarkBanks& banks, Rng& rng) {
    Sample s;
    s.digit_class = digit_class;
    s.label = assign_label(digit_class, cfg.p_flip, rng);
    s.environment = rng.bernoulli(cfg.p_e) ? 1 : 0;
    s.color = assign_color(s.label, s.environment, cfg, rng);
    if (cfg.watermark) {
        s.watermark = cfg.random_watermark ? random_pattern(banks, rng)
                                           : pattern_of(s.environment, banks, rng);
    }
    s.noise_seed = rng.bits();
    s.glyph = base_glyph;
    s.image = render(s, cfg, banks);
    return s;
}

namespace {

// Latents of one sample drawn so that only `feature` carries the label.
void isolate(Sample& s, Feature feature, bool ood, const TaskConfig& cfg,
             const WatermarkBanks& banks, Rng& rng) {
    // Hidden digit that determines the label; the rendered glyph is independent of it
    // unless the digit is the isolated feature.
    const int label_digit =
        feature == Feature::kDigit ? s.digit_class : static_cast<int>(rng.below(10));
    s.label = assign_label(label_digit, cfg.p_flip, rng);

    switch (feature) {
        case Feature::kDigit:
            s.environment = rng.bernoulli(cfg.p_e) ? 1 : 0;
            s.color = cfg.digit_only ? Color::kNone : random_color(rng);
            break;
        case Feature::kColor:
            if (ood) {
                // Every sample follows the mapping of the environment where color
                // is informative, so color determines the label exactly.
                s.environment = cfg.uninformative_majority ? 1 - cfg.majority_environment()
                                                           : cfg.majority_environment();
            } else {
                s.environment = rng.bernoulli(cfg.p_e) ? 1 : 0;
            }
            s.color = assign_color(s.label, s.environment, cfg, rng);
            break;
        case Feature::kWatermark:
            s.environment = rng.bernoulli(ood ? 0.5 : cfg.p_e) ? 1 : 0;
            s.color = assign_color(s.label, s.environment, cfg, rng);
            break;
    }
    if (cfg.watermark) {
        s.watermark = (feature == Feature::kWatermark && !cfg.random_watermark)
                          ? pattern_of(s.environment, banks, rng)
                          : random_pattern(banks, rng);
    }
}

Dataset generate(const TaskConfig& cfg, DatasetRole role, std::size_t n,
                 std::uint64_t master_seed, const DigitSource& source, bool render_images) {
    cfg.validate();
    if (source.image_side() != cfg.image_side)
        throw ShapeMismatch("digit source side differs from image_side");
    if (role.kind != DatasetRole::Kind::kOriginal && !cfg.has_feature(role.feature))
        throw FeatureAbsent("feature '" + std::string(to_string(role.feature)) +
                            "' is not present under this task configuration");

    const WatermarkBanks banks = task_banks(cfg);
    const std::string tag = role.name();
    const auto slots = source.plan(derive_seed(master_seed, 0, tag + "/plan"), n);

    std::vector<Sample> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(master_seed, i, tag);
        GlyphDraw g = source.glyph(slots[i], rng);
        Sample& s = samples[i];
        if (role.kind == DatasetRole::Kind::kOriginal) {
            s = make_sample(g.glyph, g.digit_class, cfg, banks, rng);
            if (!render_images) s.image.clear();
            continue;
        }
        s.digit_class = g.digit_class;
        isolate(s, role.feature, role.kind == DatasetRole::Kind::kOod, cfg, banks, rng);
        s.noise_seed = rng.bits();
        s.glyph = std::move(g.glyph);
        if (render_images) s.image = render(s, cfg, banks);
    }
    return Dataset(cfg, banks, master_seed, role, std::move(samples));
}

}  // namespace

Dataset make_dataset(const TaskConfig& cfg, std::size_t n, std::uint64_t master_seed,
                     const DigitSource& source, bool render_images) {
    return generate(cfg, DatasetRole{}, n, master_seed, source, render_images);
}

Dataset make_feature_isolated_dataset(const TaskConfig& cfg, Feature feature, std::size_t n,
                                      std::uint64_t master_seed, const DigitSource& source,
                                      bool render_images) {
    return generate(cfg, DatasetRole{DatasetRole::Kind::kIsolated, feature}, n, master_seed,
                    source, render_images);
}

Dataset make_ood_testset(const TaskConfig& cfg, Feature feature, std::size_t n,
                         std::uint64_t master_seed, const DigitSource& source,
                         bool render_images) {
    return generate(cfg, DatasetRole{DatasetRole::Kind::kOod, feature}, n, master_seed, source,
                    render_images);
}

std::unique_ptr<DigitSource> default_source(const TaskConfig& cfg) {
    if (cfg.source == DigitSourceKind::kIdxFiles)
        throw InvalidArgument("idx-files source requires image and label paths");
    return std::make_unique<SyntheticDigits>(cfg.image_side);
}

}  // namespace mdlsel
