#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdlsel/rng.hpp"

namespace mdlsel {

enum class Color : std::uint8_t { kNone = 0, kRed = 1, kGreen = 2 };
enum class Feature : std::uint8_t { kDigit = 0, kColor = 1, kWatermark = 2 };
enum class DigitSourceKind : std::uint8_t { kSyntheticGlyphs = 0, kIdxFiles = 1 };

std::string_view to_string(Color c);
std::string_view to_string(Feature f);
Feature parse_feature(std::string_view name);
inline constexpr std::array<Feature, 3> kAllFeatures{Feature::kDigit, Feature::kColor,
                                                     Feature::kWatermark};

/// Knobs of the watermarked colored-digit task.
struct TaskConfig {
    double p_flip = 0.0;  ///< label noise
    double p_e = 0.5;     ///< P(environment = 1)
    int bank_size = 50;   ///< watermark patterns per environment
    int watermark_bits = 32;
    int image_side = 32;
    /// Embed a watermark column at all. Scenario A runs without one.
    bool watermark = true;
    bool digit_only = false;
    bool noise_digit = false;
    bool random_watermark = false;
    bool uninformative_majority = false;
    DigitSourceKind source = DigitSourceKind::kSyntheticGlyphs;
    /// Seed of the watermark banks; every dataset of one task shares them.
    std::uint64_t bank_seed = 0;

    /// Throws InvalidArgument / CapacityError when an invariant fails.
    void validate() const;
    bool has_feature(Feature f) const;
    /// Environment whose color mapping holds for most samples (0 when p_e <= 0.5).
    int majority_environment() const { return p_e <= 0.5 ? 0 : 1; }
    int input_dim() const { return image_side * image_side * 3; }

    friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

void to_json(nlohmann::json& j, const TaskConfig& c);
void from_json(const nlohmann::json& j, TaskConfig& c);

/// Two disjoint banks of distinct bit patterns; bit r of a pattern is image row r.
struct WatermarkBanks {
    int bits = 0;
    std::array<std::vector<std::uint64_t>, 2> bank;

    std::size_t bank_size() const { return bank[0].size(); }
};

/// Draws 2*bank_size pairwise-distinct patterns by rejection sampling.
WatermarkBanks generate_banks(int bank_size, int watermark_bits, Rng& rng);
/// Banks of a task, derived from cfg.bank_seed (empty banks when cfg.watermark is off).
WatermarkBanks task_banks(const TaskConfig& cfg);

struct WatermarkRef {
    std::uint8_t bank = 0;
    std::uint32_t index = 0;
    friend bool operator==(const WatermarkRef&, const WatermarkRef&) = default;
};

using Glyph = std::vector<float>;  ///< side*side grayscale, row-major
using Image = std::vector<float>;  ///< side*side*3, row-major, channel-last

struct Sample {
    int digit_class = 0;  ///< class of the rendered glyph
    int label = 0;
    int environment = 0;
    Color color = Color::kNone;
    std::optional<WatermarkRef> watermark;
    std::uint64_t noise_seed = 0;  ///< drives the pixel noise when noise_digit is set
    Glyph glyph;
    Image image;  ///< empty for latent-only datasets
};

/// Which distribution a dataset was drawn from.
struct DatasetRole {
    enum class Kind : std::uint8_t { kOriginal = 0, kIsolated = 1, kOod = 2 };
    Kind kind = Kind::kOriginal;
    Feature feature = Feature::kDigit;  ///< meaningful for kIsolated / kOod
    std::string name() const;
    static DatasetRole parse(std::string_view name);
    friend bool operator==(const DatasetRole&, const DatasetRole&) = default;
};

/// Immutable sequence of samples together with the task that produced them.
class Dataset {
public:
    Dataset() = default;
    Dataset(TaskConfig config, WatermarkBanks banks, std::uint64_t master_seed, DatasetRole role,
            std::vector<Sample> samples);

    const TaskConfig& config() const { return config_; }
    const WatermarkBanks& banks() const { return banks_; }
    std::uint64_t master_seed() const { return master_seed_; }
    const DatasetRole& role() const { return role_; }
    std::span<const Sample> samples() const { return samples_; }
    const Sample& operator[](std::size_t i) const { return samples_[i]; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    /// Copy of samples [first, first+count).
    Dataset slice(std::size_t first, std::size_t count) const;
    /// Same task and seed with the samples replaced (used by permutation importance).
    Dataset with_samples(std::vector<Sample> samples) const;

private:
    TaskConfig config_;
    WatermarkBanks banks_;
    std::uint64_t master_seed_ = 0;
    DatasetRole role_;
    std::vector<Sample> samples_;
};

bool operator==(const Dataset& a, const Dataset& b);

struct GlyphDraw {
    int digit_class = 0;
    Glyph glyph;
};

/// Supplies base digit glyphs at a fixed side length.
class DigitSource {
public:
    virtual ~DigitSource() = default;
    virtual int image_side() const = 0;
    /// Slots to use for a dataset of n samples; throws when the source is too small.
    virtual std::vector<std::size_t> plan(std::uint64_t seed, std::size_t n) const = 0;
    /// Glyph for a slot; `rng` is the sample's private stream.
    virtual GlyphDraw glyph(std::size_t slot, Rng& rng) const = 0;
};

/// Parameters of the procedural glyph renderer.
struct GlyphStyle {
    double max_rotation = 0.22;     ///< radians
    double scale_jitter = 0.12;     ///< relative
    double shear_jitter = 0.18;
    double shift_jitter = 0.08;     ///< fraction of the side
    double point_jitter = 0.045;    ///< per control point, unit square
    double stroke_width = 0.11;     ///< fraction of the side
    double width_jitter = 0.25;     ///< relative
    double pixel_noise = 0.05;
};

/// Ten stroke templates rasterized with per-sample affine jitter and pixel noise.
class SyntheticDigits final : public DigitSource {
public:
    explicit SyntheticDigits(int image_side, GlyphStyle style = {});
    int image_side() const override { return side_; }
    std::vector<std::size_t> plan(std::uint64_t seed, std::size_t n) const override;
    GlyphDraw glyph(std::size_t slot, Rng& rng) const override;
    /// Renders a specific class.
    Glyph render_class(int digit_class, Rng& rng) const;

private:
    int side_;
    GlyphStyle style_;
};

/// Glyphs held in memory (e.g. loaded from IDX files).
class StoredDigits final : public DigitSource {
public:
    StoredDigits(int image_side, std::vector<GlyphDraw> glyphs);
    int image_side() const override { return side_; }
    std::vector<std::size_t> plan(std::uint64_t seed, std::size_t n) const override;
    GlyphDraw glyph(std::size_t slot, Rng& rng) const override;
    std::size_t size() const { return glyphs_.size(); }

private:
    int side_;
    std::vector<GlyphDraw> glyphs_;
};

int digit_band(int digit_class);

/// y = 1[d >= 5] XOR Bernoulli(p_flip).
int assign_label(int digit_class, double p_flip, Rng& rng);
Color assign_color(int label, int environment, const TaskConfig& cfg, Rng& rng);

/// Draws latents for one original-distribution sample and renders it.
Sample make_sample(const Glyph& base_glyph, int digit_class, const TaskConfig& cfg,
                   const WatermarkBanks& banks, Rng& rng);

/// Deterministic image of a sample's latents on top of its base glyph.
Image render(const Sample& latents, const TaskConfig& cfg, const WatermarkBanks& banks);

Dataset make_dataset(const TaskConfig& cfg, std::size_t n, std::uint64_t master_seed,
                     const DigitSource& source, bool render_images = true);

/// Only `feature` carries label information; other latents are drawn label-independently.
/// The watermark feature keeps color tied to (label, environment), since the
/// watermark reveals only the environment.
Dataset make_feature_isolated_dataset(const TaskConfig& cfg, Feature feature, std::size_t n,
                                      std::uint64_t master_seed, const DigitSource& source,
                                      bool render_images = true);

/// Evaluation set where the label correlates with `feature` alone.
Dataset make_ood_testset(const TaskConfig& cfg, Feature feature, std::size_t n,
                         std::uint64_t master_seed, const DigitSource& source,
                         bool render_images = true);

/// Source matching cfg.source; idx sources must be supplied by the caller.
std::unique_ptr<DigitSource> default_source(const TaskConfig& cfg);

}  // namespace mdlsel
