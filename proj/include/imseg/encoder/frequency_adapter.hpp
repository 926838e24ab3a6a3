#pragma once

#include <cmath>

#include "imseg/core/ops.hpp"
#include "imseg/core/parameter.hpp"

namespace imseg {

/// Down-projection, GELU, up-projection over spectral tokens. The
/// up-projection starts at zero so a fresh adapter contributes nothing.
template <class T>
struct FrequencyAdapter {
    Tensor<T> down_w; // [hidden × in]
    Tensor<T> down_b; // [hidden]
    Tensor<T> up_w;   // [out × hidden]
    Tensor<T> up_b;   // [out]

    static FrequencyAdapter create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
        return {fan_in_weight<T>(hidden, in, rng, true), constant_tensor<T>({hidden}, T(0), true),
                constant_tensor<T>({out, hidden}, T(0), true), constant_tensor<T>({out}, T(0), true)};
    }

    Tensor<T> forward(const Tensor<T>& spec_tokens) const {
        return linear(gelu(linear(spec_tokens, down_w, down_b)), up_w, up_b);
    }
};

} // namespace imseg
