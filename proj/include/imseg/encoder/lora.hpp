#pragma once

#include <cmath>
#include <string>

#include "imseg/core/errors.hpp"
#include "imseg/core/ops.hpp"
#include "imseg/core/parameter.hpp"

namespace imseg {

/// Low-rank update ΔW = B·A of a frozen [out×in] projection. A is [r×in]
/// with small uniform init, B is [out×r] and starts at zero, so the adapted
/// projection equals the frozen one until B moves.
template <class T>
struct LoraPair {
    Tensor<T> a;
    Tensor<T> b;

    static LoraPair create(std::size_t in, std::size_t out, std::size_t rank, Rng& rng) {
        return {uniform_tensor<T>({rank, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng, true),
                constant_tensor<T>({out, rank}, T(0), true)};
    }

    std::size_t rank() const { return a.dim(0); }

    void validate() const {
        if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(1))
            throw ConfigError("LoRA rank mismatch: A " + shape_str(a.shape()) + ", B " + shape_str(b.shape()));
    }

    /// x·(BA)ᵀ computed in factored form, [N×in] -> [N×out].
    Tensor<T> delta(const Tensor<T>& x) const { return matmul_nt(matmul_nt(x, a), b); }

    /// W + BA as an explicit matrix.
    Tensor<T> materialize(const Tensor<T>& w) const { return add(w, matmul(b, a)); }
};

/// Frozen attention projections, each [C×C] in y = x·Wᵀ form.
template <class T>
struct AttentionWeights {
    Tensor<T> wq, wk, wv, wo;
};

/// Multi-head scaled dot-product self-attention with optional LoRA on the
/// query and value projections:
///   Q = W_q F + B_q A_q F,  K = W_k F,  V = W_v F + B_v A_v F.
template <class T>
Tensor<T> lora_attention(const Tensor<T>& tokens, const AttentionWeights<T>& base, const LoraPair<T>* lora_q,
                         const LoraPair<T>* lora_v, std::size_t n_heads) {
    const Tensor<T> none;
    Tensor<T> q = linear(tokens, base.wq, none);
    Tensor<T> k = linear(tokens, base.wk, none);
    Tensor<T> v = linear(tokens, base.wv, none);
    if (lora_q) {
        lora_q->validate();
        q = add(q, lora_q->delta(tokens));
    }
    if (lora_v) {
        lora_v->validate();
        v = add(v, lora_v->delta(tokens));
    }
    const std::size_t c = q.cols();
    if (n_heads == 0 || c % n_heads != 0)
        throw ConfigError("attention: " + std::to_string(c) + " channels not divisible by " +
                          std::to_string(n_heads) + " heads");
    const std::size_t hd = c / n_heads;
    const T scale_factor = T(1) / std::sqrt(static_cast<T>(hd));
    std::vector<Tensor<T>> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const auto qh = slice_cols(q, h * hd, (h + 1) * hd);
        const auto kh = slice_cols(k, h * hd, (h + 1) * hd);
        const auto vh = slice_cols(v, h * hd, (h + 1) * hd);
        const auto weights = softmax(scale(matmul_nt(qh, kh), scale_factor), -1);
        heads.push_back(matmul(weights, vh));
    }
    const auto merged = n_heads == 1 ? heads[0] : concat_cols(heads);
    return linear(merged, base.wo, none);
}

} // namespace imseg
