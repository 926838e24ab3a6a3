#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/core/ops.hpp"

namespace imseg {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceSmoothing = 1.0;

template <class T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels, std::size_t classes) {
    std::vector<T> v(labels.size() * classes, T(0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes)
            throw DataError("label " + std::to_string(labels[i]) + " >= " + std::to_string(classes) + " classes");
        v[i * classes + labels[i]] = T(1);
    }
    return Tensor<T>({labels.size(), classes}, std::move(v));
}

namespace detail {
template <class T>
void check_pair(const Tensor<T>& target, const Tensor<T>& probs, const char* op) {
    if (target.shape() != probs.shape() || target.rank() != 2)
        throw DimensionError(std::string(op) + ": target " + shape_str(target.shape()) + " vs prediction " +
                             shape_str(probs.shape()));
}
} // namespace detail

/// -(1/M) Σ_i Σ_c o_ic · log(clamp(ô_ic, ε, 1-ε)).
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& target, const Tensor<T>& probs, double eps = kProbClamp) {
    detail::check_pair(target, probs, "cross_entropy");
    const auto logp = log(clamp(probs, T(eps), T(1.0 - eps)));
    return scale(sum(mul(target, logp)), T(-1) / static_cast<T>(std::max<std::size_t>(1, target.rows())));
}

/// 1 - mean over foreground classes c >= 1 of (2Σ o·ô + s) / (Σ o + Σ ô + s).
template <class T>
Tensor<T> soft_dice(const Tensor<T>& target, const Tensor<T>& probs, double smoothing = kDiceSmoothing) {
    detail::check_pair(target, probs, "soft_dice");
    const std::size_t c = target.cols();
    const auto inter = reshape(sum_rows(mul(target, probs)), {1, c});
    const auto total = reshape(add(sum_rows(target), sum_rows(probs)), {1, c});
    const auto s = Tensor<T>::scalar(T(smoothing));
    const auto ratio = div(add(scale(inter, T(2)), s), add(total, s));
    return sub(Tensor<T>::scalar(T(1)), mean(slice_cols(ratio, 1, c)));
}

/// 0.5 · cross entropy + 0.5 · soft Dice.
template <class T>
Tensor<T> seg_loss(const Tensor<T>& target, const Tensor<T>& probs) {
    return add(scale(cross_entropy(target, probs), T(0.5)), scale(soft_dice(target, probs), T(0.5)));
}

/// Coarse and fine supervision weights at a point of training.
struct SupervisionWeights {
    double coarse = 1.0;
    double fine = 0.5;
};

/// Linear interpolation from `start` (first epoch) to `end` (last epoch).
inline SupervisionWeights progressive_weights(std::size_t epoch, std::size_t epochs, SupervisionWeights start = {1.0, 0.5},
                                              SupervisionWeights end = {0.5, 1.0}) {
    const double t = epochs <= 1 ? 0.0 : static_cast<double>(std::min(epoch, epochs - 1)) / static_cast<double>(epochs - 1);
    return {start.coarse + t * (end.coarse - start.coarse), start.fine + t * (end.fine - start.fine)};
}

/// w_c · seg(o, Ô^c) + w_f · seg(o[S], Ô^f); the fine term vanishes when S is empty.
template <class T>
Tensor<T> progressive_loss(const Tensor<T>& target, const Tensor<T>& coarse_probs, const Tensor<T>& fine_target,
                           const Tensor<T>& fine_probs, SupervisionWeights w) {
    auto loss = scale(seg_loss(target, coarse_probs), T(w.coarse));
    if (fine_probs.rows() > 0)
        loss = add(loss, scale(seg_loss(fine_target, fine_probs), T(w.fine)));
    return loss;
}

} // namespace imseg
