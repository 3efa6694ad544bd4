#include <gtest/gtest.h>

#include <set>

#include "mdlsel/error.hpp"
#include "mdlsel/taskgen.hpp"
#include "test_util.hpp"

using namespace mdlsel;
using mdlsel::fixture::small_task;

TEST(Banks, DisjointAndUniqueForAllSmallWidths) {
    for (int bits = 2; bits <= 16; ++bits) {
        const int max_k = std::min(64, (1 << bits) / 2);
        for (int k : {1, 2, max_k}) {
            Rng rng(bits, k, "banks");
            const auto banks = generate_banks(k, bits, rng);
            std::set<std::uint64_t> all;
            for (const auto& b : banks.bank) {
                ASSERT_EQ(b.size(), static_cast<std::size_t>(k));
                for (auto p : b) {
                    EXPECT_LT(p, std::uint64_t{1} << bits);
                    all.insert(p);
                }
            }
            EXPECT_EQ(all.size(), static_cast<std::size_t>(2 * k)) << "bits=" << bits << " k=" << k;
        }
    }
}

TEST(Banks, ExactlyFullCapacity) {
    Rng rng(3);
    const auto banks = generate_banks(2, 2, rng);
    std::set<std::uint64_t> all(banks.bank[0].begin(), banks.bank[0].end());
    all.insert(banks.bank[1].begin(), banks.bank[1].end());
    EXPECT_EQ(all, (std::set<std::uint64_t>{0, 1, 2, 3}));
}

TEST(Banks, OverCapacityThrows) {
    Rng rng(1);
    EXPECT_THROW(generate_banks(3, 2, rng), CapacityError);
    TaskConfig c = small_task();
    c.watermark_bits = 3;
    c.bank_size = 5;
    EXPECT_THROW(c.validate(), CapacityError);
}

TEST(TaskConfig, RejectsBadValues) {
    TaskConfig c = small_task();
    c.p_e = 1.5;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = small_task();
    c.watermark_bits = c.image_side + 1;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(TaskConfig, JsonRoundTrip) {
    TaskConfig c = small_task();
    c.p_flip = 0.15;
    c.uninformative_majority = true;
    c.bank_seed = 99;
    nlohmann::json j = c;
    EXPECT_EQ(j.get<TaskConfig>(), c);
}

TEST(Labels, FlipRateAndBand) {
    Rng rng(5);
    int flips = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const int d = i % 10;
        const int y = assign_label(d, 0.15, rng);
        flips += y != digit_band(d);
    }
    EXPECT_NEAR(flips / double(n), 0.15, 0.01);
    Rng r2(6);
    for (int d = 0; d < 10; ++d) EXPECT_EQ(assign_label(d, 0.0, r2), d >= 5 ? 1 : 0);
}

TEST(Colors, MappingFollowsEnvironment) {
    const TaskConfig c = small_task();
    Rng rng(1);
    EXPECT_EQ(assign_color(0, 0, c, rng), Color::kGreen);
    EXPECT_EQ(assign_color(1, 0, c, rng), Color::kRed);
    EXPECT_EQ(assign_color(0, 1, c, rng), Color::kRed);
    EXPECT_EQ(assign_color(1, 1, c, rng), Color::kGreen);
    TaskConfig g = c;
    g.digit_only = true;
    EXPECT_EQ(assign_color(1, 1, g, rng), Color::kNone);
}

TEST(Dataset, EnvironmentProportion) {
    TaskConfig c = small_task();
    c.p_e = 0.25;
    const auto src = default_source(c);
    const Dataset ds = make_dataset(c, 8000, 11, *src, false);
    double e1 = 0;
    for (const auto& s : ds.samples()) e1 += s.environment;
    EXPECT_NEAR(e1 / ds.size(), 0.25, 0.015);
}

TEST(Dataset, Deterministic) {
    const TaskConfig c = small_task();
    const auto src = default_source(c);
    EXPECT_EQ(make_dataset(c, 50, 4, *src), make_dataset(c, 50, 4, *src));
    EXPECT_FALSE(make_dataset(c, 50, 4, *src) == make_dataset(c, 50, 5, *src));
}

TEST(Render, WatermarkColumnHoldsPattern) {
    const TaskConfig c = small_task();
    const auto src = default_source(c);
    const Dataset ds = make_dataset(c, 40, 2, *src);
    const int side = c.image_side;
    for (const auto& s : ds.samples()) {
        ASSERT_TRUE(s.watermark.has_value());
        EXPECT_EQ(s.watermark->bank, s.environment);
        const auto pattern = ds.banks().bank[s.watermark->bank][s.watermark->index];
        for (int r = 0; r < side; ++r) {
            const float bit = r < c.watermark_bits ? float((pattern >> r) & 1u) : 0.0f;
            for (int ch = 0; ch < 3; ++ch) {
                EXPECT_EQ(s.image[(static_cast<std::size_t>(r) * side + side - 1) * 3 + ch], bit);
            }
        }
    }
}

TEST(Render, TintSelectsChannel) {
    const TaskConfig c = small_task();
    const auto src = default_source(c);
    const Dataset ds = make_dataset(c, 60, 8, *src);
    const int side = c.image_side;
    for (const auto& s : ds.samples()) {
        for (int r = 0; r < side; ++r) {
            for (int col = 0; col + 1 < side; ++col) {
                const std::size_t px = static_cast<std::size_t>(r) * side + col;
                const float g = s.glyph[px];
                const float* rgb = &s.image[px * 3];
                EXPECT_EQ(rgb[2], 0.0f);
                EXPECT_EQ(rgb[0], s.color == Color::kRed ? g : 0.0f);
                EXPECT_EQ(rgb[1], s.color == Color::kGreen ? g : 0.0f);
            }
        }
    }
}

TEST(Render, NoiseDigitKeepsLabelFromDigit) {
    TaskConfig c = small_task();
    c.noise_digit = true;
    const auto src = default_source(c);
    const Dataset ds = make_dataset(c, 200, 1, *src);
    for (const auto& s : ds.samples()) EXPECT_EQ(s.label, digit_band(s.digit_class));
    // two samples with the same digit differ in their pixels
    EXPECT_NE(ds[0].image, ds[1].image);
}

TEST(Render, RandomWatermarkIgnoresEnvironment) {
    TaskConfig c = small_task();
    c.random_watermark = true;
    const auto src = default_source(c);
    const Dataset ds = make_dataset(c, 4000, 1, *src, false);
    int agree = 0;
    for (const auto& s : ds.samples()) agree += s.watermark->bank == s.environment;
    EXPECT_NEAR(agree / 4000.0, 0.5, 0.03);
}

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

struct Columns {
    std::vector<double> label, band, red, env;
};

Columns columns(const Dataset& ds) {
    Columns c;
    for (const auto& s : ds.samples()) {
        c.label.push_back(s.label);
        c.band.push_back(digit_band(s.digit_class));
        c.red.push_back(s.color == Color::kRed);
        c.env.push_back(s.watermark ? s.watermark->bank : 0);
    }
    return c;
}

}  // namespace

TEST(Isolation, ColorCarriesAllSignal) {
    TaskConfig c = small_task();
    c.p_e = 0.0;
    const auto src = default_source(c);
    const auto cols = columns(make_feature_isolated_dataset(c, Feature::kColor, 2000, 3, *src, false));
    EXPECT_NEAR(std::abs(correlation(cols.label, cols.red)), 1.0, 1e-12);
    EXPECT_LT(std::abs(correlation(cols.label, cols.band)), 0.07);
}

TEST(Isolation, DigitCarriesAllSignal) {
    const TaskConfig c = small_task();
    const auto src = default_source(c);
    const auto cols = columns(make_feature_isolated_dataset(c, Feature::kDigit, 2000, 3, *src, false));
    EXPECT_NEAR(correlation(cols.label, cols.band), 1.0, 1e-12);
    EXPECT_LT(std::abs(correlation(cols.label, cols.red)), 0.07);
    EXPECT_LT(std::abs(correlation(cols.label, cols.env)), 0.07);
}

TEST(Isolation, WatermarkRevealsEnvironmentOnly) {
    const TaskConfig c = small_task();
    const auto src = default_source(c);
    const Dataset ds = make_feature_isolated_dataset(c, Feature::kWatermark, 2000, 3, *src, false);
    const auto cols = columns(ds);
    EXPECT_LT(std::abs(correlation(cols.label, cols.band)), 0.07);
    for (const auto& s : ds.samples()) {
        EXPECT_EQ(s.watermark->bank, s.environment);
        Rng unused(0);
        EXPECT_EQ(s.color, assign_color(s.label, s.environment, c, unused));
    }
}

TEST(Isolation, AbsentFeatureThrows) {
    TaskConfig c = small_task();
    c.random_watermark = true;
    const auto src = default_source(c);
    EXPECT_THROW(make_feature_isolated_dataset(c, Feature::kWatermark, 10, 1, *src), FeatureAbsent);
    TaskConfig g = small_task();
    g.digit_only = true;
    EXPECT_THROW(make_ood_testset(g, Feature::kColor, 10, 1, *src), FeatureAbsent);
}

TEST(Ood, DigitSetAccuracyOfColorRuleIsChance) {
    TaskConfig c = small_task();
    c.p_e = 0.1;
    const auto src = default_source(c);
    const Dataset ds = make_ood_testset(c, Feature::kDigit, 4000, 9, *src, false);
    int hits = 0;
    for (const auto& s : ds.samples()) hits += (s.color == Color::kRed) == (s.label == 1);
    EXPECT_NEAR(hits / 4000.0, 0.5, 0.03);
}

TEST(Role, NamesRoundTrip) {
    for (auto kind : {DatasetRole::Kind::kOriginal, DatasetRole::Kind::kIsolated, DatasetRole::Kind::kOod}) {
        for (Feature f : kAllFeatures) {
            DatasetRole r{kind, kind == DatasetRole::Kind::kOriginal ? Feature::kDigit : f};
            EXPECT_EQ(DatasetRole::parse(r.name()), r);
        }
    }
    EXPECT_THROW(DatasetRole::parse("bogus"), InvalidArgument);
}

TEST(StoredDigits, PlanRejectsOversizedRequest) {
    std::vector<GlyphDraw> g(5, GlyphDraw{3, Glyph(64, 0.5f)});
    StoredDigits s(8, g);
    EXPECT_EQ(s.plan(1, 5).size(), 5u);
    EXPECT_THROW(s.plan(1, 6), InvalidArgument);
}
