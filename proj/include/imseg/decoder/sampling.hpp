#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/core/ops.hpp"
#include "imseg/decoder/positional.hpp"

namespace imseg {

/// Cell-center coordinates of an H×W grid in row-major order, [(H·W)×2]
/// with column 0 = x (column axis) and column 1 = y (row axis):
/// x_j = -1 + (2j+1)/W, y_i = -1 + (2i+1)/H.
template <class T>
Tensor<T> full_grid(std::size_t height, std::size_t width) {
    if (height == 0 || width == 0)
        throw ContractError("full_grid needs positive extents");
    std::vector<T> out(height * width * 2);
    for (std::size_t i = 0; i < height; ++i)
        for (std::size_t j = 0; j < width; ++j) {
            out[(i * width + j) * 2] = static_cast<T>(-1.0 + (2.0 * j + 1.0) / static_cast<double>(width));
            out[(i * width + j) * 2 + 1] = static_cast<T>(-1.0 + (2.0 * i + 1.0) / static_cast<double>(height));
        }
    return Tensor<T>({height * width, 2}, std::move(out));
}

namespace detail {

struct BilinearTap {
    std::size_t i0, i1, j0, j1;
    double ty, tx;
};

// Cell-center alignment: coordinate -1 + (2j+1)/w maps onto column j.
inline BilinearTap bilinear_tap(double x, double y, std::size_t h, std::size_t w) {
    auto axis = [](double p, std::size_t n, std::size_t& k0, std::size_t& k1, double& t) {
        double f = ((p + 1.0) * static_cast<double>(n) - 1.0) / 2.0;
        f = std::clamp(f, 0.0, static_cast<double>(n - 1));
        k0 = static_cast<std::size_t>(std::floor(f));
        k1 = std::min(k0 + 1, n - 1);
        t = f - static_cast<double>(k0);
    };
    BilinearTap tap{};
    axis(x, w, tap.j0, tap.j1, tap.tx);
    axis(y, h, tap.i0, tap.i1, tap.ty);
    return tap;
}

} // namespace detail

/// Samples an [h×w×C] map at [M×2] coordinates, [M×C]. Differentiable in
/// the map; coordinates are treated as constants. Borders clamp.
template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& fmap, const Tensor<T>& coords) {
    if (fmap.rank() != 3)
        throw DimensionError("bilinear_sample expects [h x w x C], got " + shape_str(fmap.shape()));
    if (coords.rank() != 2 || coords.dim(1) != 2)
        throw DimensionError("bilinear_sample expects [M x 2] coordinates, got " + shape_str(coords.shape()));
    const std::size_t h = fmap.dim(0), w = fmap.dim(1), c = fmap.dim(2), m = coords.dim(0);
    std::vector<detail::BilinearTap> taps(m);
    std::vector<T> out(m * c);
    const auto& f = fmap.values();
    for (std::size_t k = 0; k < m; ++k) {
        const auto t = detail::bilinear_tap(static_cast<double>(coords.at(k, 0)), static_cast<double>(coords.at(k, 1)), h, w);
        taps[k] = t;
        const T w00 = T((1 - t.ty) * (1 - t.tx)), w01 = T((1 - t.ty) * t.tx), w10 = T(t.ty * (1 - t.tx)),
                w11 = T(t.ty * t.tx);
        const T* a = f.data() + (t.i0 * w + t.j0) * c;
        const T* b = f.data() + (t.i0 * w + t.j1) * c;
        const T* d = f.data() + (t.i1 * w + t.j0) * c;
        const T* e = f.data() + (t.i1 * w + t.j1) * c;
        for (std::size_t ch = 0; ch < c; ++ch)
            out[k * c + ch] = w00 * a[ch] + w01 * b[ch] + w10 * d[ch] + w11 * e[ch];
    }
    return Tensor<T>::make({m, c}, std::move(out), {fmap}, [w, c, taps = std::move(taps)](TensorNode<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t k = 0; k < taps.size(); ++k) {
            const auto& t = taps[k];
            const T w00 = T((1 - t.ty) * (1 - t.tx)), w01 = T((1 - t.ty) * t.tx), w10 = T(t.ty * (1 - t.tx)),
                    w11 = T(t.ty * t.tx);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T d = self.grad[k * c + ch];
                g[(t.i0 * w + t.j0) * c + ch] += w00 * d;
                g[(t.i0 * w + t.j1) * c + ch] += w01 * d;
                g[(t.i1 * w + t.j0) * c + ch] += w10 * d;
                g[(t.i1 * w + t.j1) * c + ch] += w11 * d;
            }
        }
    });
}

/// Per-point decoder input: coordinates, their encoding, and the assembled
/// feature rows concat(γ(p), Interp(feature map, p), prompt).
template <class T>
struct PointBatch {
    Tensor<T> coords;   // [M×2]
    Tensor<T> encoded;  // [M×4L]
    Tensor<T> features; // [M×(4L + C + C_p)]

    std::size_t size() const { return coords.rows(); }
};

template <class T>
PointBatch<T> assemble(const Tensor<T>& coords, const Tensor<T>& feature_map, const Tensor<T>& prompt_embedding,
                       std::size_t levels) {
    PointBatch<T> batch;
    batch.coords = coords;
    batch.encoded = positional_encode(coords, levels);
    const std::size_t m = coords.dim(0);
    if (m == 0) {
        batch.features = Tensor<T>({0, 4 * levels + feature_map.dim(2) + prompt_embedding.size()}, {});
        return batch;
    }
    batch.features = concat_cols<T>(
        {batch.encoded, bilinear_sample(feature_map, coords), broadcast_rows(prompt_embedding, m)});
    return batch;
}

// ---------------------------------------------------------------------------
// Uncertainty guided selection

/// ⌈fraction·M⌉, at least one point when M > 0.
inline std::size_t selection_count(std::size_t m, double fraction) {
    if (m == 0)
        return 0;
    const double k = std::ceil(fraction * static_cast<double>(m) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, m);
}

/// Indices of the ⌈fraction·M⌉ largest scores; ties go to the lower index.
/// Returned in ascending index order.
inline std::vector<std::size_t> select_top_k(std::span<const double> scores, double fraction) {
    const std::size_t k = selection_count(scores.size(), fraction);
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// ⌈fraction·M⌉ distinct indices drawn uniformly, ascending.
inline std::vector<std::size_t> select_random(std::size_t m, double fraction, Rng& rng) {
    const std::size_t k = selection_count(m, fraction);
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i)
        idx[i] = i;
    for (std::size_t i = 0; i < k; ++i)
        std::swap(idx[i], idx[i + rng.below(m - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Per-point predictive mean and variance over T passes of [M×C] class
/// probabilities: μ_i = (1/T)Σ_t p_t,  u_i = mean over classes of
/// (1/T)Σ_t (p_t - μ_i)². Accumulation follows pass order.
struct UncertaintyEstimate {
    std::vector<double> u;    // [M]
    std::vector<double> mean; // [M×C]
    std::size_t classes = 0;
};

template <class T>
UncertaintyEstimate uncertainty_from_passes(const std::vector<Tensor<T>>& passes) {
    if (passes.size() < 2)
        throw ParameterError("uncertainty needs at least 2 passes, got " + std::to_string(passes.size()));
    const std::size_t m = passes[0].rows(), c = passes[0].cols();
    for (const auto& p : passes)
        if (p.rows() != m || p.cols() != c)
            throw DimensionError("uncertainty passes disagree in shape");
    const double inv_t = 1.0 / static_cast<double>(passes.size());
    UncertaintyEstimate est{std::vector<double>(m, 0.0), std::vector<double>(m * c, 0.0), c};
    for (const auto& p : passes)
        for (std::size_t i = 0; i < m * c; ++i)
            est.mean[i] += static_cast<double>(p[i]);
    for (auto& v : est.mean)
        v *= inv_t;
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            // Deviations are taken relative to the first pass, so agreeing
            // passes give exactly zero.
            const double anchor = static_cast<double>(passes[0][i * c + k]);
            double shift = 0.0;
            for (const auto& p : passes)
                shift += static_cast<double>(p[i * c + k]) - anchor;
            shift *= inv_t;
            double var = 0.0;
            for (const auto& p : passes) {
                const double d = static_cast<double>(p[i * c + k]) - anchor - shift;
                var += d * d;
            }
            acc += var * inv_t;
        }
        est.u[i] = acc / static_cast<double>(c);
    }
    return est;
}

/// Ô[i] = Ô^f row for i ∈ S, Ô^c[i] otherwise. No history is recorded.
template <class T>
Tensor<T> merge(const Tensor<T>& coarse, const Tensor<T>& fine, std::span<const std::size_t> selected) {
    if (fine.rows() != selected.size())
        throw ContractError("merge: " + std::to_string(fine.rows()) + " fine rows for " +
                            std::to_string(selected.size()) + " selected indices");
    const std::size_t m = coarse.rows(), c = coarse.cols();
    if (!selected.empty() && fine.cols() != c)
        throw DimensionError("merge: class counts differ");
    std::vector<T> out(coarse.data().begin(), coarse.data().end());
    for (std::size_t k = 0; k < selected.size(); ++k) {
        if (selected[k] >= m)
            throw ContractError("merge: index " + std::to_string(selected[k]) + " out of range " + std::to_string(m));
        std::copy_n(fine.data().data() + k * c, c, out.data() + selected[k] * c);
    }
    return Tensor<T>(coarse.shape(), std::move(out));
}

} // namespace imseg
