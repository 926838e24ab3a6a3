#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "imseg/core/rng.hpp"
#include "imseg/core/tensor.hpp"

namespace imseg {

/// Optimizer group a parameter belongs to. Frozen parameters never receive
/// gradients or updates.
enum class ParamGroup { frozen, adapter, decoder };

template <class T>
struct NamedParameter {
    std::string name;
    Tensor<T> tensor;
    ParamGroup group;
};

template <class T>
using ParameterList = std::vector<NamedParameter<T>>;

/// Uniform(-bound, bound) values, `requires_grad` set unless frozen.
template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng, bool trainable) {
    std::vector<T> v(shape_size(shape));
    for (auto& x : v)
        x = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>(std::move(shape), std::move(v), trainable);
}

template <class T>
Tensor<T> constant_tensor(Shape shape, T value, bool trainable) {
    const auto n = shape_size(shape);
    return Tensor<T>(std::move(shape), std::vector<T>(n, value), trainable);
}

/// Fan-in scaled init for a [out×in] weight.
template <class T>
Tensor<T> fan_in_weight(std::size_t out, std::size_t in, Rng& rng, bool trainable) {
    return uniform_tensor<T>({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng, trainable);
}

template <class T>
std::size_t count_parameters(const ParameterList<T>& params, bool trainable_only) {
    std::size_t n = 0;
    for (const auto& p : params)
        if (!trainable_only || p.group != ParamGroup::frozen)
            n += p.tensor.size();
    return n;
}

} // namespace imseg
