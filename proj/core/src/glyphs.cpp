#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

#include "mdlsel/error.hpp"
#include "mdlsel/taskgen.hpp"

namespace mdlsel {

namespace {

struct Point {
    double x;
    double y;
};

using Stroke = std::vector<Point>;

Stroke ellipse(double cx, double cy, double rx, double ry, int n = 16) {
    Stroke s;
    for (int i = 0; i <= n; ++i) {
        const double t = 2.0 * std::numbers::pi * i / n;
        s.push_back({cx + rx * std::sin(t), cy - ry * std::cos(t)});
    }
    return s;
}

// Unit-square templates, x to the right and y downwards.
const std::vector<Stroke>& digit_template(int d) {
    static const std::array<std::vector<Stroke>, 10> kTemplates = {{
        {ellipse(0.5, 0.5, 0.26, 0.36)},
        {{{0.36, 0.28}, {0.52, 0.13}, {0.52, 0.87}}},
        {{{0.26, 0.30}, {0.36, 0.16}, {0.55, 0.13}, {0.72, 0.24}, {0.71, 0.40}, {0.26, 0.86},
          {0.78, 0.86}}},
        {{{0.26, 0.16}, {0.72, 0.15}, {0.46, 0.44}, {0.70, 0.56}, {0.72, 0.76}, {0.52, 0.88},
          {0.26, 0.82}}},
        {{{0.64, 0.87}, {0.64, 0.13}, {0.22, 0.62}, {0.80, 0.62}}},
        {{{0.74, 0.13}, {0.32, 0.13}, {0.29, 0.45}, {0.55, 0.41}, {0.72, 0.54}, {0.72, 0.75},
          {0.54, 0.88}, {0.26, 0.84}}},
        {{{0.70, 0.15}, {0.46, 0.20}, {0.31, 0.44}, {0.29, 0.70}, {0.40, 0.87}, {0.62, 0.86},
          {0.72, 0.70}, {0.60, 0.55}, {0.40, 0.55}, {0.30, 0.66}}},
        {{{0.24, 0.13}, {0.78, 0.13}, {0.44, 0.87}}},
        {ellipse(0.5, 0.30, 0.19, 0.17), ellipse(0.5, 0.68, 0.23, 0.20)},
        {ellipse(0.5, 0.33, 0.21, 0.19), {{0.71, 0.34}, {0.62, 0.87}}},
    }};
    return kTemplates.at(static_cast<std::size_t>(d));
}

double segment_distance(Point p, Point a, Point b) {
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = p.x - (a.x + t * vx);
    const double dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

SyntheticDigits::SyntheticDigits(int image_side, GlyphStyle style)
    : side_(image_side), style_(style) {
    if (image_side < 4) throw InvalidArgument("image_side must be at least 4");
}

std::vector<std::size_t> SyntheticDigits::plan(std::uint64_t, std::size_t n) const {
    std::vector<std::size_t> slots(n);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    return slots;
}

GlyphDraw SyntheticDigits::glyph(std::size_t, Rng& rng) const {
    GlyphDraw g;
    g.digit_class = static_cast<int>(rng.below(10));
    g.glyph = render_class(g.digit_class, rng);
    return g;
}

Glyph SyntheticDigits::render_class(int digit_class, Rng& rng) const {
    if (digit_class < 0 || digit_class > 9) throw InvalidArgument("digit class outside 0-9");
    const GlyphStyle& st = style_;
    const double rot = rng.uniform(-st.max_rotation, st.max_rotation);
    const double sx = 1.0 + rng.uniform(-st.scale_jitter, st.scale_jitter);
    const double sy = 1.0 + rng.uniform(-st.scale_jitter, st.scale_jitter);
    const double shear = rng.uniform(-st.shear_jitter, st.shear_jitter);
    const double tx = rng.uniform(-st.shift_jitter, st.shift_jitter);
    const double ty = rng.uniform(-st.shift_jitter, st.shift_jitter);
    const double half_width =
        0.5 * st.stroke_width * (1.0 + rng.uniform(-st.width_jitter, st.width_jitter));
    const double c = std::cos(rot);
    const double s = std::sin(rot);

    // Template points jittered, then sheared, scaled and rotated about the center.
    std::vector<Stroke> strokes = digit_template(digit_class);
    for (Stroke& stroke : strokes) {
        for (Point& p : stroke) {
            double x = p.x - 0.5 + rng.uniform(-st.point_jitter, st.point_jitter);
            double y = p.y - 0.5 + rng.uniform(-st.point_jitter, st.point_jitter);
            x += shear * y;
            x *= sx;
            y *= sy;
            p = {0.5 + c * x - s * y + tx, 0.5 + s * x + c * y + ty};
        }
    }

    const int side = side_;
    const double pixel = 1.0 / side;
    Glyph img(static_cast<std::size_t>(side) * side, 0.0f);
    for (int r = 0; r < side; ++r) {
        for (int col = 0; col < side; ++col) {
            const Point p{(col + 0.5) * pixel, (r + 0.5) * pixel};
            double d = 1e9;
            for (const Stroke& stroke : strokes) {
                for (std::size_t k = 0; k + 1 < stroke.size(); ++k) {
                    d = std::min(d, segment_distance(p, stroke[k], stroke[k + 1]));
                }
            }
            // one-pixel linear ramp at the stroke edge
            double v = std::clamp((half_width - d) / pixel + 0.5, 0.0, 1.0);
            v = std::clamp(v + rng.normal(0.0, st.pixel_noise), 0.0, 1.0);
            img[static_cast<std::size_t>(r) * side + col] = static_cast<float>(v);
        }
    }
    return img;
}

StoredDigits::StoredDigits(int image_side, std::vector<GlyphDraw> glyphs)
    : side_(image_side), glyphs_(std::move(glyphs)) {
    const auto npix = static_cast<std::size_t>(side_) * side_;
    for (const auto& g : glyphs_) {
        if (g.glyph.size() != npix) throw ShapeMismatch("stored glyph does not match side");
        if (g.digit_class < 0 || g.digit_class > 9)
            throw InvalidArgument("stored glyph label outside 0-9");
    }
}

std::vector<std::size_t> StoredDigits::plan(std::uint64_t seed, std::size_t n) const {
    if (n > glyphs_.size())
        throw InvalidArgument("digit source holds " + std::to_string(glyphs_.size()) +
                              " glyphs, " + std::to_string(n) + " requested");
    std::vector<std::size_t> order(glyphs_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    // Fisher-Yates
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    order.resize(n);
    return order;
}

GlyphDraw StoredDigits::glyph(std::size_t slot, Rng&) const { return glyphs_.at(slot); }

}  // namespace mdlsel
