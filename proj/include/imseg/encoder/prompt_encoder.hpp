#pragma once

#include <cmath>
#include <string>

#include "imseg/core/box.hpp"
#include "imseg/core/errors.hpp"
#include "imseg/core/ops.hpp"
#include "imseg/core/parameter.hpp"
#include "imseg/decoder/positional.hpp"

namespace imseg {

inline void validate_box(const BoundingBox& b) {
    const bool in_range = b.x0 >= 0.0 && b.y0 >= 0.0 && b.x1 <= 1.0 && b.y1 <= 1.0;
    if (!in_range || !(b.x0 < b.x1) || !(b.y0 < b.y1))
        throw PromptError("degenerate or out-of-range box (" + std::to_string(b.x0) + ", " + std::to_string(b.y0) +
                          ", " + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ")");
}

/// Box prompt embedder: both corners are mapped to [-1,1], frequency
/// encoded, concatenated and passed through one trainable linear layer.
template <class T>
class PromptEncoder {
  public:
    PromptEncoder() = default;
    PromptEncoder(std::size_t levels, std::size_t dim, Rng rng) : levels_(levels) {
        weight_ = fan_in_weight<T>(dim, 8 * levels, rng, true);
        bias_ = constant_tensor<T>({dim}, T(0), true);
    }

    std::size_t dim() const { return weight_.dim(0); }

    /// Returns [C_p].
    Tensor<T> encode(const BoundingBox& box) const {
        validate_box(box);
        const Tensor<T> corners({2, 2}, {T(2 * box.x0 - 1), T(2 * box.y0 - 1), T(2 * box.x1 - 1), T(2 * box.y1 - 1)});
        const auto features = reshape(positional_encode(corners, levels_), {1, 8 * levels_});
        return reshape(linear(features, weight_, bias_), {dim()});
    }

    void collect(ParameterList<T>& out, const std::string& prefix = "prompt.") {
        out.push_back({prefix + "w", weight_, ParamGroup::decoder});
        out.push_back({prefix + "b", bias_, ParamGroup::decoder});
    }

  private:
    std::size_t levels_ = 4;
    Tensor<T> weight_, bias_;
};

} // namespace imseg
