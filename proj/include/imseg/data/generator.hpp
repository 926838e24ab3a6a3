#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "imseg/core/box.hpp"
#include "imseg/core/errors.hpp"
#include "imseg/core/rng.hpp"
#include "imseg/core/tensor.hpp"
#include "imseg/data/pnm.hpp"
#include "imseg/data/shapes.hpp"

namespace imseg {

/// Synthetic domain. A: ellipse unions, high contrast, additive Gaussian
/// noise (σ = 0.05). B: star-convex blobs, low contrast, multiplicative
/// speckle. With 4 classes, labels 2 and 3 are nested discs inside label 1.
struct DomainSpec {
    Domain domain = Domain::A;
    int n_classes = 2;
};

struct Sample {
    std::string id;
    Domain domain = Domain::A;
    int n_classes = 2;
    RgbImage image;
    GrayImage mask;
    BoundingBox bbox;
    ShapeSet shape;
};

inline constexpr double kMinForeground = 0.02;
inline constexpr double kMaxForeground = 0.40;
inline constexpr double kBboxJitter = 0.1;

/// Tight box around pixels labelled `label`, each side pushed out by
/// U[0, jitter] of the box extent along its axis, clamped to [0, 1].
inline BoundingBox derive_bbox(const GrayImage& mask, int label, double jitter, Rng& rng) {
    if (!(jitter >= 0.0 && jitter <= 0.1))
        throw ParameterError("bbox jitter must lie in [0, 0.1], got " + std::to_string(jitter));
    std::size_t r0 = mask.height, r1 = 0, c0 = mask.width, c1 = 0;
    bool found = false;
    for (std::size_t i = 0; i < mask.height; ++i)
        for (std::size_t j = 0; j < mask.width; ++j)
            if (mask.pixels[i * mask.width + j] == label) {
                found = true;
                r0 = std::min(r0, i);
                r1 = std::max(r1, i);
                c0 = std::min(c0, j);
                c1 = std::max(c1, j);
            }
    if (!found)
        throw PromptError("class " + std::to_string(label) + " is absent from the mask");
    const double w = static_cast<double>(mask.width), h = static_cast<double>(mask.height);
    BoundingBox b{static_cast<double>(c0) / w, static_cast<double>(r0) / h, static_cast<double>(c1 + 1) / w,
                  static_cast<double>(r1 + 1) / h};
    if (jitter > 0.0) {
        const double bw = b.width(), bh = b.height();
        b.x0 = std::max(0.0, b.x0 - rng.uniform(0.0, jitter) * bw);
        b.y0 = std::max(0.0, b.y0 - rng.uniform(0.0, jitter) * bh);
        b.x1 = std::min(1.0, b.x1 + rng.uniform(0.0, jitter) * bw);
        b.y1 = std::min(1.0, b.y1 + rng.uniform(0.0, jitter) * bh);
    }
    return b;
}

namespace detail {

inline ShapeSet draw_shape(const DomainSpec& spec, Rng& rng) {
    ShapeSet s;
    s.domain = spec.domain;
    s.n_classes = spec.n_classes;
    double cx = 0, cy = 0, inner = 0;
    if (spec.domain == Domain::A) {
        Ellipse main{rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45), rng.uniform(0.22, 0.5),
                     rng.uniform(0.22, 0.5), rng.uniform(0.0, std::numbers::pi)};
        s.primitives.push_back({1, main});
        const auto extra = rng.below(3);
        for (std::uint64_t k = 0; k < extra; ++k) {
            const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double off = rng.uniform(0.3, 0.7);
            Ellipse e{main.cx + off * main.a * std::cos(ang), main.cy + off * main.b * std::sin(ang),
                      main.a * rng.uniform(0.45, 0.8), main.b * rng.uniform(0.45, 0.8),
                      rng.uniform(0.0, std::numbers::pi)};
            s.primitives.push_back({1, e});
        }
        cx = main.cx;
        cy = main.cy;
        inner = std::min(main.a, main.b);
    } else {
        StarBlob st;
        st.cx = rng.uniform(-0.4, 0.4);
        st.cy = rng.uniform(-0.4, 0.4);
        st.r0 = rng.uniform(0.3, 0.55);
        for (int k = 0; k < 3; ++k) {
            st.amp.push_back(rng.uniform(0.0, 0.12));
            st.phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
        }
        s.primitives.push_back({1, st});
        cx = st.cx;
        cy = st.cy;
        inner = st.min_radius();
    }
    if (spec.n_classes == 4) {
        s.primitives.push_back({2, Ellipse{cx, cy, 0.6 * inner, 0.6 * inner, 0.0}});
        s.primitives.push_back({3, Ellipse{cx, cy, 0.3 * inner, 0.3 * inner, 0.0}});
    }
    return s;
}

// Checked on the reference grid only, so the accepted shape does not depend
// on the output resolution. The band is narrower than [2%, 40%] so that
// every supported resolution lands inside the contract.
inline bool shape_acceptable(const ShapeSet& s) {
    const auto ref = s.rasterize(64);
    std::size_t fg = 0;
    std::vector<std::size_t> per(static_cast<std::size_t>(s.n_classes), 0);
    for (auto l : ref) {
        fg += l != 0;
        ++per[l];
    }
    const double frac = static_cast<double>(fg) / static_cast<double>(ref.size());
    if (frac < 0.05 || frac > 0.33)
        return false;
    for (std::size_t res : {32u, 64u, 128u, 256u}) {
        const auto r = res == 64 ? ref : s.rasterize(res);
        std::vector<bool> seen(static_cast<std::size_t>(s.n_classes), false);
        for (auto l : r)
            seen[l] = true;
        for (std::size_t c = 1; c < seen.size(); ++c)
            if (!seen[c])
                return false;
        // Everything must stay off the image border so boxes are not clipped.
        for (std::size_t i = 0; i < res; ++i)
            if (r[i] || r[(res - 1) * res + i] || r[i * res] || r[i * res + res - 1])
                return false;
    }
    return true;
}

inline RgbImage render_image(const ShapeSet& s, const GrayImage& mask, Rng& rng) {
    const std::size_t w = mask.width, h = mask.height;
    RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
    const bool a = s.domain == Domain::A;
    const double bg = a ? rng.uniform(0.12, 0.25) : rng.uniform(0.42, 0.48);
    const double shade_x = rng.uniform(-0.05, 0.05), shade_y = rng.uniform(-0.05, 0.05);
    const double levels_a[4] = {0.0, 0.78, 0.92, 0.62};
    const double levels_b[4] = {0.0, 0.6, 0.68, 0.54};
    const double fg_jit = rng.uniform(-0.04, 0.04);
    const double tint_a[3] = {1.0, 0.82, 0.68};
    const double tint_b[3] = {0.92, 0.95, 1.0};
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double x = -1.0 + (2.0 * j + 1.0) / static_cast<double>(w);
            const double y = -1.0 + (2.0 * i + 1.0) / static_cast<double>(h);
            const int l = mask.pixels[i * w + j];
            double v = l == 0 ? bg + shade_x * x + shade_y * y : (a ? levels_a[l] : levels_b[l]) + fg_jit;
            if (a)
                v += 0.05 * rng.normal();
            else
                v *= 1.0 + 0.2 * rng.normal();
            for (std::size_t c = 0; c < 3; ++c) {
                const double t = std::clamp(v * (a ? tint_a[c] : tint_b[c]), 0.0, 1.0);
                img.rgb[(i * w + j) * 3 + c] = static_cast<std::uint8_t>(std::lround(t * 255.0));
            }
        }
    return img;
}

inline std::uint64_t sample_stream(const DomainSpec& spec, std::size_t index) {
    return Rng::mix((static_cast<std::uint64_t>(spec.domain == Domain::A ? 1 : 2) << 40) ^
                    (static_cast<std::uint64_t>(spec.n_classes) << 32) ^ index);
}

} // namespace detail

inline std::string sample_id(std::size_t index) {
    std::string s = std::to_string(index);
    return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

inline void validate_resolution(std::size_t res) {
    if (res < 32 || res > 256 || (res & (res - 1)) != 0)
        throw DataError("resolution must be a power of two in [32, 256], got " + std::to_string(res));
}

/// Shape parameters of sample `index`; identical for every resolution.
inline ShapeSet sample_shape(const DomainSpec& spec, std::size_t index, std::uint64_t seed) {
    if (spec.n_classes != 2 && spec.n_classes != 4)
        throw ParameterError("n_classes must be 2 or 4, got " + std::to_string(spec.n_classes));
    const Rng base(seed, detail::sample_stream(spec, index));
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        Rng r = base.fork(attempt);
        auto s = detail::draw_shape(spec, r);
        if (detail::shape_acceptable(s))
            return s;
    }
    throw DataError("no admissible shape after 100 draws for sample " + std::to_string(index));
}

/// Labels of `shape` at the cell centers of a res×res grid.
inline GrayImage rasterize_mask(const ShapeSet& shape, std::size_t res) {
    return GrayImage{res, res, shape.rasterize(res)};
}

inline Sample generate_sample(const DomainSpec& spec, std::size_t index, std::size_t res, std::uint64_t seed) {
    validate_resolution(res);
    Sample s;
    s.id = sample_id(index);
    s.domain = spec.domain;
    s.n_classes = spec.n_classes;
    s.shape = sample_shape(spec, index, seed);
    s.mask = rasterize_mask(s.shape, res);
    const Rng base(seed, detail::sample_stream(spec, index));
    Rng tex = base.fork(1000 + res);
    s.image = detail::render_image(s.shape, s.mask, tex);
    Rng jit = base.fork(2000 + res);
    s.bbox = derive_bbox(s.mask, 1, kBboxJitter, jit);
    return s;
}

inline std::vector<Sample> generate(const DomainSpec& spec, std::size_t n, std::size_t res, std::uint64_t seed) {
    if (n < 5)
        throw ArgumentError("dataset needs n >= 5, got " + std::to_string(n));
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(generate_sample(spec, i, res, seed));
    return out;
}

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Seeded 60:20:20 partition with sizes ⌊0.6n⌋, ⌊0.2n⌋ and the remainder.
inline SplitIndices split(std::size_t n, std::uint64_t seed) {
    if (n < 5)
        throw ArgumentError("split needs n >= 5, got " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    Rng rng(seed, 0x5b117);
    shuffle(idx, rng);
    const std::size_t n_train = n * 6 / 10, n_val = n * 2 / 10;
    SplitIndices s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    return s;
}

/// [H×W×3] tensor with values in [0, 1].
template <class T>
Tensor<T> image_tensor(const RgbImage& img) {
    std::vector<T> v(img.rgb.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<T>(img.rgb[i]) / T(255);
    return Tensor<T>({img.height, img.width, 3}, std::move(v));
}

} // namespace imseg
