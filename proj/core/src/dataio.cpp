#include "mdlsel/dataio.hpp"

#include <bit>
#include <concepts>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace mdlsel {

std::size_t IdxTensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

namespace {

std::uint32_t load_be32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
           (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

void store_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw IdxError(IdxErrorKind::kTruncated, "idx: header shorter than 4 bytes");
    if (bytes[0] != 0 || bytes[1] != 0) throw IdxError(IdxErrorKind::kMagic, "idx: magic bytes are not zero");
    if (bytes[2] != kIdxUnsignedByte)
        throw IdxError(IdxErrorKind::kUnsupportedDtype, "idx: unsupported dtype code");
    IdxTensor t;
    t.dtype = bytes[2];
    const std::size_t ndims = bytes[3];
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) throw IdxError(IdxErrorKind::kTruncated, "idx: truncated dimension list");
    t.dims.reserve(ndims);
    // element counts are bounded by the input length, so overflow cannot slip through
    unsigned __int128 count = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        t.dims.push_back(load_be32(bytes.data() + 4 + 4 * i));
        count *= t.dims.back();
        if (count > bytes.size()) count = static_cast<unsigned __int128>(bytes.size()) + 1;
    }
    const std::size_t available = bytes.size() - header;
    if (count > available) throw IdxError(IdxErrorKind::kTruncated, "idx: payload truncated");
    if (count < available) throw IdxError(IdxErrorKind::kTrailingBytes, "idx: trailing bytes after payload");
    t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return t;
}

std::vector<std::uint8_t> write_idx(const IdxTensor& t) {
    if (t.dtype != kIdxUnsignedByte) throw IdxError(IdxErrorKind::kUnsupportedDtype, "idx: unsupported dtype code");
    if (t.dims.size() > 255) throw InvalidArgument("idx: at most 255 dimensions");
    if (t.payload.size() != t.element_count()) throw InvalidArgument("idx: payload does not match dims");
    std::vector<std::uint8_t> out{0, 0, t.dtype, static_cast<std::uint8_t>(t.dims.size())};
    out.reserve(4 + 4 * t.dims.size() + t.payload.size());
    for (auto d : t.dims) store_be32(out, d);
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(IdxErrorKind::kIo, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Glyph fit_glyph(std::span<const std::uint8_t> pixels, int side_in, int side_out) {
    Glyph g(static_cast<std::size_t>(side_out) * side_out, 0.0f);
    if (side_in <= side_out) {
        const int off = (side_out - side_in) / 2;
        for (int r = 0; r < side_in; ++r) {
            for (int c = 0; c < side_in; ++c) {
                g[static_cast<std::size_t>(r + off) * side_out + (c + off)] =
                    pixels[static_cast<std::size_t>(r) * side_in + c] / 255.0f;
            }
        }
        return g;
    }
    for (int r = 0; r < side_out; ++r) {
        const int sr = (2 * r + 1) * side_in / (2 * side_out);
        for (int c = 0; c < side_out; ++c) {
            const int sc = (2 * c + 1) * side_in / (2 * side_out);
            g[static_cast<std::size_t>(r) * side_out + c] =
                pixels[static_cast<std::size_t>(sr) * side_in + sc] / 255.0f;
        }
    }
    return g;
}

StoredDigits digit_source_from_idx(const IdxTensor& images, const IdxTensor& labels,
                                   int image_side) {
    if (images.dims.size() != 3 || images.dims[1] != images.dims[2])
        throw IdxError(IdxErrorKind::kCountMismatch, "idx: images must be N x side x side");
    if (labels.dims.size() != 1)
        throw IdxError(IdxErrorKind::kCountMismatch, "idx: labels must be one-dimensional");
    if (images.dims[0] != labels.dims[0])
        throw IdxError(IdxErrorKind::kCountMismatch, "idx: image and label counts differ");
    const std::size_t n = images.dims[0];
    const int side_in = static_cast<int>(images.dims[1]);
    const std::size_t npix = static_cast<std::size_t>(side_in) * side_in;
    std::vector<GlyphDraw> glyphs;
    glyphs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels.payload[i];
        if (label > 9) throw IdxError(IdxErrorKind::kBadLabel, "idx: label outside 0-9");
        glyphs.push_back({label, fit_glyph(std::span(images.payload).subspan(i * npix, npix),
                                           side_in, image_side)});
    }
    return StoredDigits(image_side, std::move(glyphs));
}

StoredDigits load_digit_source(const std::filesystem::path& images,
                               const std::filesystem::path& labels, int image_side) {
    return digit_source_from_idx(parse_idx(read_file(images)), parse_idx(read_file(labels)),
                                 image_side);
}

namespace {

constexpr std::uint32_t kContainerVersion = 1;

class Writer {
public:
    template <std::unsigned_integral T>
    void put(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void put_floats(const std::vector<float>& v) {
        for (float f : v) put(std::bit_cast<std::uint32_t>(f));
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    template <std::unsigned_integral T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(T{bytes_[pos_ + i]} << (8 * i));
        }
        pos_ += sizeof(T);
        return v;
    }
    std::vector<float> get_floats(std::size_t n) {
        need(n * 4);
        std::vector<float> v(n);
        for (auto& f : v) f = std::bit_cast<float>(get<std::uint32_t>());
        return v;
    }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("dataset container truncated");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    Writer w;
    for (char c : std::string_view("MDLB")) w.put(static_cast<std::uint8_t>(c));
    w.put(kContainerVersion);
    const nlohmann::json header{{"config", ds.config()},
                                {"role", ds.role().name()},
                                {"count", ds.size()},
                                {"has_images", !ds.empty() && !ds[0].image.empty()}};
    const std::string text = header.dump();
    w.put(static_cast<std::uint32_t>(text.size()));
    for (char c : text) w.put(static_cast<std::uint8_t>(c));
    w.put(ds.master_seed());
    for (const Sample& s : ds.samples()) {
        w.put(static_cast<std::uint8_t>(s.digit_class));
        w.put(static_cast<std::uint8_t>(s.label));
        w.put(static_cast<std::uint8_t>(s.environment));
        w.put(static_cast<std::uint8_t>(s.color));
        w.put(static_cast<std::uint8_t>(s.watermark.has_value()));
        w.put(s.watermark ? s.watermark->bank : std::uint8_t{0});
        w.put(s.watermark ? s.watermark->index : std::uint32_t{0});
        w.put(s.noise_seed);
        w.put_floats(s.glyph);
        w.put_floats(s.image);
    }
    return std::move(w.out);
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.get_string(4) != "MDLB") throw FormatError("not a dataset container");
    if (r.get<std::uint32_t>() != kContainerVersion) throw FormatError("unsupported container version");
    const auto len = r.get<std::uint32_t>();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.get_string(len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset header: ") + e.what());
    }
    const auto cfg = header.at("config").get<TaskConfig>();
    cfg.validate();
    const auto role = DatasetRole::parse(header.at("role").get<std::string>());
    const auto count = header.at("count").get<std::size_t>();
    const bool has_images = header.at("has_images").get<bool>();
    const std::uint64_t seed = r.get<std::uint64_t>();
    const auto npix = static_cast<std::size_t>(cfg.image_side) * cfg.image_side;
    WatermarkBanks banks = task_banks(cfg);

    std::vector<Sample> samples;
    samples.reserve(std::min<std::size_t>(count, bytes.size()));
    for (std::size_t i = 0; i < count; ++i) {
        Sample s;
        s.digit_class = r.get<std::uint8_t>();
        s.label = r.get<std::uint8_t>();
        s.environment = r.get<std::uint8_t>();
        const auto color = r.get<std::uint8_t>();
        if (color > 2) throw FormatError("dataset container: bad color code");
        s.color = static_cast<Color>(color);
        const bool has_wm = r.get<std::uint8_t>() != 0;
        const auto bank = r.get<std::uint8_t>();
        const auto index = r.get<std::uint32_t>();
        if (has_wm) {
            if (bank > 1 || index >= banks.bank[bank].size())
                throw FormatError("dataset container: watermark reference out of range");
            s.watermark = WatermarkRef{bank, index};
        }
        s.noise_seed = r.get<std::uint64_t>();
        s.glyph = r.get_floats(npix);
        if (has_images) s.image = r.get_floats(npix * 3);
        samples.push_back(std::move(s));
    }
    if (!r.done()) throw FormatError("dataset container: trailing bytes");
    return Dataset(cfg, std::move(banks), seed, role, std::move(samples));
}

}  // namespace mdlsel
