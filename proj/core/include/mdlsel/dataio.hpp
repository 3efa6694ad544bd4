#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mdlsel/error.hpp"
#include "mdlsel/taskgen.hpp"

namespace mdlsel {

/// Reason attached to an IdxError.
enum class IdxErrorKind { kMagic, kTruncated, kTrailingBytes, kUnsupportedDtype, kCountMismatch,
                          kBadLabel, kIo };

class IdxError : public FormatError {
public:
    IdxError(IdxErrorKind kind, const std::string& what) : FormatError(what), kind_(kind) {}
    IdxErrorKind kind() const { return kind_; }

private:
    IdxErrorKind kind_;
};

/// Tensor in the IDX layout: big-endian u32 dims, row-major payload.
struct IdxTensor {
    std::uint8_t dtype = 0x08;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    std::size_t element_count() const;
    friend bool operator==(const IdxTensor&, const IdxTensor&) = default;
};

inline constexpr std::uint8_t kIdxUnsignedByte = 0x08;

/// Parses an IDX byte string; only the unsigned-byte dtype is accepted.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_idx(const IdxTensor& t);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Places a side_in x side_in grayscale image on a side_out grid: centered zero
/// padding when it fits, nearest-neighbour resampling otherwise.
Glyph fit_glyph(std::span<const std::uint8_t> pixels, int side_in, int side_out);

/// Pairs an IDX image file with an IDX label file.
StoredDigits load_digit_source(const std::filesystem::path& images,
                               const std::filesystem::path& labels, int image_side);
StoredDigits digit_source_from_idx(const IdxTensor& images, const IdxTensor& labels,
                                   int image_side);

/// Binary dataset container: "MDLB", version, JSON header, then per-sample records.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace mdlsel
