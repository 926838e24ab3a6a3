#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/core/tensor.hpp"

namespace imseg {

/// Which spectrum plane feeds the frequency adapters.
enum class FaMode { amplitude, phase, off };

inline const char* to_string(FaMode m) {
    switch (m) {
    case FaMode::amplitude: return "amplitude";
    case FaMode::phase: return "phase";
    case FaMode::off: return "off";
    }
    return "?";
}

inline FaMode fa_mode_from_string(const std::string& s) {
    if (s == "amplitude" || s == "amp")
        return FaMode::amplitude;
    if (s == "phase" || s == "pha")
        return FaMode::phase;
    if (s == "off")
        return FaMode::off;
    throw ArgumentError("unknown frequency-adapter mode '" + s + "' (amplitude|phase|off)");
}

/// 2-D DFT of one channel, row-major [H×W].
struct Spectrum {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> amplitude; // |F(u,v)| >= 0
    std::vector<double> phase;     // arg F(u,v) in (-pi, pi]
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT, forward sign e^{-j...}.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len)
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
    }
}

inline void dft_direct(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> s = 0.0;
        for (std::size_t t = 0; t < n; ++t)
            s += a[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) /
                                            static_cast<double>(n));
        out[k] = s;
    }
    a = std::move(out);
}

inline void dft1(std::vector<std::complex<double>>& a) {
    if (is_pow2(a.size()))
        fft_pow2(a);
    else
        dft_direct(a);
}

} // namespace detail

/// F(u,v) = sum_h sum_w f(h,w) e^{-j2pi(hu/H + wv/W)}, 0-indexed. Radix-2
/// along power-of-two axes, direct sums otherwise. Bins whose magnitude is
/// at round-off level relative to the signal are snapped to exactly zero
/// (amplitude and phase) so that analytically empty bins read as 0.
inline Spectrum dft2(std::span<const double> channel, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0 || channel.size() != height * width)
        throw DimensionError("dft2: " + std::to_string(channel.size()) + " values for " + std::to_string(height) +
                             "x" + std::to_string(width));
    double l1 = 0.0;
    for (std::size_t i = 0; i < channel.size(); ++i) {
        if (!std::isfinite(channel[i]))
            throw DataError("dft2: non-finite input at index " + std::to_string(i));
        l1 += std::abs(channel[i]);
    }
    std::vector<std::complex<double>> grid(channel.begin(), channel.end());
    std::vector<std::complex<double>> line(width);
    for (std::size_t h = 0; h < height; ++h) {
        std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(h * width), width, line.begin());
        detail::dft1(line);
        std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::ptrdiff_t>(h * width));
    }
    line.resize(height);
    for (std::size_t w = 0; w < width; ++w) {
        for (std::size_t h = 0; h < height; ++h)
            line[h] = grid[h * width + w];
        detail::dft1(line);
        for (std::size_t h = 0; h < height; ++h)
            grid[h * width + w] = line[h];
    }
    Spectrum s{height, width, std::vector<double>(grid.size()), std::vector<double>(grid.size())};
    const double snap = 1e-11 * l1;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double a = std::abs(grid[i]);
        if (a <= snap)
            continue;
        s.amplitude[i] = a;
        double ph = std::arg(grid[i]);
        if (ph <= -std::numbers::pi)
            ph = std::numbers::pi;
        s.phase[i] = ph;
    }
    return s;
}

template <class T>
Spectrum dft2(const Tensor<T>& channel) {
    if (channel.rank() != 2)
        throw DimensionError("dft2 expects [H x W], got " + shape_str(channel.shape()));
    std::vector<double> v(channel.data().begin(), channel.data().end());
    return dft2(v, channel.dim(0), channel.dim(1));
}

/// Frequency tokens for an [H×W×3] image: per channel take the chosen
/// spectrum plane (amplitude is log(1+|F|) compressed, phase stays raw),
/// move DC to (H/2, W/2), and cut into the image's patch grid. Token rows
/// follow patch raster order; within a token values are (dy, dx, channel).
/// Output is [N × patch·patch·3] and carries no history.
template <class T>
Tensor<T> spectral_tokens(const Tensor<T>& image, FaMode mode, std::size_t patch) {
    if (mode == FaMode::off)
        throw ContractError("spectral_tokens: frequency adapters are off; skip the adapter path instead");
    if (image.rank() != 3 || image.dim(2) != 3)
        throw DimensionError("spectral_tokens expects [H x W x 3], got " + shape_str(image.shape()));
    const std::size_t H = image.dim(0), W = image.dim(1);
    if (patch == 0 || H % patch != 0 || W % patch != 0)
        throw DimensionError("spectral_tokens: patch " + std::to_string(patch) + " does not tile " +
                             shape_str(image.shape()));
    const std::size_t gh = H / patch, gw = W / patch, tok = patch * patch * 3;
    std::vector<T> out(gh * gw * tok);
    std::vector<double> chan(H * W);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < H * W; ++i)
            chan[i] = static_cast<double>(image[i * 3 + c]);
        const Spectrum s = dft2(chan, H, W);
        for (std::size_t u = 0; u < H; ++u)
            for (std::size_t v = 0; v < W; ++v) {
                const double raw = mode == FaMode::amplitude ? std::log1p(s.amplitude[u * W + v]) : s.phase[u * W + v];
                const std::size_t r = (u + H / 2) % H, q = (v + W / 2) % W;
                const std::size_t token = (r / patch) * gw + q / patch;
                const std::size_t within = ((r % patch) * patch + q % patch) * 3 + c;
                out[token * tok + within] = static_cast<T>(raw);
            }
    }
    return Tensor<T>({gh * gw, tok}, std::move(out));
}

} // namespace imseg
