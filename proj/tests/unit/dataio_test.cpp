#include <gtest/gtest.h>

#include "mdlsel/dataio.hpp"
#include "test_util.hpp"

using namespace mdlsel;

namespace {

IdxTensor random_tensor(Rng& rng) {
    IdxTensor t;
    const int rank = 1 + static_cast<int>(rng.below(3));
    std::size_t count = 1;
    for (int i = 0; i < rank; ++i) {
        t.dims.push_back(static_cast<std::uint32_t>(rng.below(7)));
        count *= t.dims.back();
    }
    t.payload.resize(count);
    for (auto& b : t.payload) b = static_cast<std::uint8_t>(rng.below(256));
    return t;
}

IdxErrorKind kind_of(const std::vector<std::uint8_t>& bytes) {
    try {
        parse_idx(bytes);
    } catch (const IdxError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected IdxError";
    return IdxErrorKind::kIo;
}

}  // namespace

TEST(Idx, RoundTripRandomTensors) {
    Rng rng(2024);
    for (int i = 0; i < 200; ++i) {
        const IdxTensor t = random_tensor(rng);
        const auto bytes = write_idx(t);
        EXPECT_EQ(parse_idx(bytes), t);
        EXPECT_EQ(write_idx(parse_idx(bytes)), bytes);
    }
}

TEST(Idx, KnownHeader) {
    const std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 2, 7, 9};
    const IdxTensor t = parse_idx(bytes);
    EXPECT_EQ(t.dims, std::vector<std::uint32_t>{2});
    EXPECT_EQ(t.payload, (std::vector<std::uint8_t>{7, 9}));
}

TEST(Idx, MalformedInputsYieldTypedErrors) {
    EXPECT_EQ(kind_of({}), IdxErrorKind::kTruncated);
    EXPECT_EQ(kind_of({1, 0, 8, 1, 0, 0, 0, 0}), IdxErrorKind::kMagic);
    EXPECT_EQ(kind_of({0, 0, 0x0D, 1, 0, 0, 0, 0}), IdxErrorKind::kUnsupportedDtype);
    EXPECT_EQ(kind_of({0, 0, 8, 2, 0, 0, 0, 1}), IdxErrorKind::kTruncated);
    EXPECT_EQ(kind_of({0, 0, 8, 1, 0, 0, 0, 3, 1, 2}), IdxErrorKind::kTruncated);
    EXPECT_EQ(kind_of({0, 0, 8, 1, 0, 0, 0, 1, 1, 2}), IdxErrorKind::kTrailingBytes);
    // dimensions whose product overflows 64 bits
    EXPECT_EQ(kind_of({0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255}),
              IdxErrorKind::kTruncated);
}

TEST(Idx, FuzzNeverCrashes) {
    Rng rng(77);
    for (int i = 0; i < 2000; ++i) {
        std::vector<std::uint8_t> bytes(rng.below(24));
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
        if (bytes.size() > 3 && rng.bernoulli(0.5)) {
            bytes[0] = bytes[1] = 0;
            bytes[2] = 8;
            bytes[3] = static_cast<std::uint8_t>(rng.below(4));
        }
        try {
            parse_idx(bytes);
        } catch (const IdxError&) {
        }
    }
}

TEST(Idx, DigitSourceChecksLabels) {
    IdxTensor images{kIdxUnsignedByte, {2, 4, 4}, std::vector<std::uint8_t>(32, 255)};
    IdxTensor labels{kIdxUnsignedByte, {2}, {3, 7}};
    const auto src = digit_source_from_idx(images, labels, 8);
    EXPECT_EQ(src.size(), 2u);
    labels.payload[1] = 12;
    try {
        digit_source_from_idx(images, labels, 8);
        FAIL();
    } catch (const IdxError& e) {
        EXPECT_EQ(e.kind(), IdxErrorKind::kBadLabel);
    }
    labels.dims = {3};
    labels.payload = {1, 2, 3};
    try {
        digit_source_from_idx(images, labels, 8);
        FAIL();
    } catch (const IdxError& e) {
        EXPECT_EQ(e.kind(), IdxErrorKind::kCountMismatch);
    }
}

TEST(Idx, FitGlyphCentersSmallerImages) {
    const std::vector<std::uint8_t> px{255, 255, 255, 255};
    const Glyph g = fit_glyph(px, 2, 4);
    EXPECT_EQ(g[1 * 4 + 1], 1.0f);
    EXPECT_EQ(g[2 * 4 + 2], 1.0f);
    EXPECT_EQ(g[0], 0.0f);
}

TEST(DatasetCodec, RoundTrip) {
    const TaskConfig c = fixture::small_task();
    const auto src = default_source(c);
    for (bool images : {true, false}) {
        const Dataset ds = make_feature_isolated_dataset(c, Feature::kWatermark, 30, 5, *src, images);
        EXPECT_EQ(decode_dataset(encode_dataset(ds)), ds);
    }
}

TEST(DatasetCodec, RejectsGarbage) {
    EXPECT_THROW(decode_dataset(std::vector<std::uint8_t>{'M', 'D', 'L'}), FormatError);
    const TaskConfig c = fixture::small_task();
    const auto src = default_source(c);
    auto bytes = encode_dataset(make_dataset(c, 3, 1, *src));
    bytes.pop_back();
    EXPECT_THROW(decode_dataset(bytes), FormatError);
}
