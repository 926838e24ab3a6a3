#pragma once

#include <cassert>
#include <cmath>
#include <numbers>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/core/tensor.hpp"

namespace imseg {

/// Frequency encoding of 2-D points, [M×2] -> [M×4L].
///
/// Column layout per row: the x component first, then y; for each
/// component k = 0..L-1 emits sin(2^k·pi·p), cos(2^k·pi·p).
/// Values outside [-1, 1] are encoded as-is (asserted in debug builds).
template <class T>
Tensor<T> positional_encode(const Tensor<T>& coords, std::size_t levels) {
    if (coords.rank() != 2 || coords.dim(1) != 2)
        throw DimensionError("positional_encode expects [M x 2], got " + shape_str(coords.shape()));
    const std::size_t m = coords.dim(0), width = 4 * levels;
    std::vector<T> out(m * width);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t d = 0; d < 2; ++d) {
            const double p = static_cast<double>(coords.at(i, d));
            assert(p >= -1.0 && p <= 1.0);
            double freq = std::numbers::pi;
            for (std::size_t k = 0; k < levels; ++k, freq *= 2.0) {
                out[i * width + d * 2 * levels + 2 * k] = static_cast<T>(std::sin(freq * p));
                out[i * width + d * 2 * levels + 2 * k + 1] = static_cast<T>(std::cos(freq * p));
            }
        }
    return Tensor<T>({m, width}, std::move(out));
}

} // namespace imseg
