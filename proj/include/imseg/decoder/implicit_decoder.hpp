#pragma once

#include <string>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/core/ops.hpp"
#include "imseg/core/parameter.hpp"
#include "imseg/decoder/sampling.hpp"

namespace imseg {

/// How refinement points are chosen.
enum class Sampling {
    top_k,  // highest MC-dropout variance
    random, // uniform draw of the same count
    off     // no fine stage, merged map = coarse map
};

inline const char* to_string(Sampling s) {
    switch (s) {
    case Sampling::top_k: return "topk";
    case Sampling::random: return "random";
    case Sampling::off: return "off";
    }
    return "?";
}

struct DecoderConfig {
    std::size_t levels = 10;
    std::vector<std::size_t> coarse_dims{256, 128};
    std::vector<std::size_t> fine_dims{128, 64, 64, 32};
    std::size_t n_classes = 2;
    double dropout_p = 0.5;
    std::size_t mc_passes = 8;
    double top_k = 0.125;
    Sampling sampling = Sampling::top_k;

    void validate() const {
        if (!(top_k > 0.0 && top_k <= 1.0))
            throw ParameterError("top_k must lie in (0, 1], got " + std::to_string(top_k));
        if (!(dropout_p >= 0.0 && dropout_p < 1.0))
            throw ParameterError("dropout_p must lie in [0, 1), got " + std::to_string(dropout_p));
        if (mc_passes < 2)
            throw ParameterError("mc_passes must be >= 2, got " + std::to_string(mc_passes));
        if (n_classes < 2)
            throw ConfigError("n_classes must be >= 2");
        if (coarse_dims.empty() || fine_dims.empty() || levels == 0)
            throw ConfigError("decoder needs at least one hidden layer and one frequency");
    }
};

/// GELU multilayer perceptron with a linear softmax head.
template <class T>
class FieldMlp {
  public:
    FieldMlp() = default;
    FieldMlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t classes, Rng& rng) {
        std::size_t prev = in;
        for (auto h : hidden) {
            weights_.push_back(fan_in_weight<T>(h, prev, rng, true));
            biases_.push_back(constant_tensor<T>({h}, T(0), true));
            prev = h;
        }
        head_w_ = fan_in_weight<T>(classes, prev, rng, true);
        head_b_ = constant_tensor<T>({classes}, T(0), true);
    }

    std::size_t input_dim() const { return weights_.front().dim(1); }
    std::size_t hidden_dim() const { return weights_.back().dim(0); }

    /// Final hidden activation; dropout after every hidden layer when `rng`
    /// is given.
    Tensor<T> hidden(const Tensor<T>& x, double dropout_p, Rng* rng) const {
        return hidden_from_first(first_activation(x), dropout_p, rng);
    }

    /// First hidden activation before dropout.
    Tensor<T> first_activation(const Tensor<T>& x) const { return gelu(linear(x, weights_[0], biases_[0])); }

    /// Continues `hidden` from `first_activation(x)`; draws the same masks.
    Tensor<T> hidden_from_first(const Tensor<T>& a0, double dropout_p, Rng* rng) const {
        Tensor<T> h = rng ? dropout(a0, dropout_p, *rng, true) : a0;
        for (std::size_t i = 1; i < weights_.size(); ++i) {
            h = gelu(linear(h, weights_[i], biases_[i]));
            if (rng)
                h = dropout(h, dropout_p, *rng, true);
        }
        return h;
    }

    Tensor<T> head(const Tensor<T>& h) const { return softmax(linear(h, head_w_, head_b_), -1); }

    void collect(ParameterList<T>& out, const std::string& prefix) {
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            out.push_back({prefix + "l" + std::to_string(i) + ".w", weights_[i], ParamGroup::decoder});
            out.push_back({prefix + "l" + std::to_string(i) + ".b", biases_[i], ParamGroup::decoder});
        }
        out.push_back({prefix + "head.w", head_w_, ParamGroup::decoder});
        out.push_back({prefix + "head.b", head_b_, ParamGroup::decoder});
    }

  private:
    std::vector<Tensor<T>> weights_, biases_;
    Tensor<T> head_w_, head_b_;
};

template <class T>
struct CoarseOutput {
    Tensor<T> probs;  // Ô^c [M×C]
    Tensor<T> hidden; // z^c [M×C_hidden]
};

/// Ô^c, z^c = Dec_c(Z^p).
template <class T>
CoarseOutput<T> decode_coarse(const FieldMlp<T>& net, const Tensor<T>& features, double dropout_p, Rng* rng) {
    CoarseOutput<T> out;
    out.hidden = net.hidden(features, dropout_p, rng);
    out.probs = net.head(out.hidden);
    return out;
}

/// Fine-field input: selected coarse hidden rows with their coordinate
/// encodings appended, [|S|×(C_hidden + 4L)].
template <class T>
Tensor<T> fine_input(const Tensor<T>& coarse_hidden, const Tensor<T>& encoded, std::span<const std::size_t> selected) {
    return concat_cols<T>({gather_rows(coarse_hidden, selected), gather_rows(encoded, selected)});
}

/// Ô^f = Dec_f(z^s). Empty selection yields an empty [0×C] result.
template <class T>
Tensor<T> decode_fine(const FieldMlp<T>& net, const Tensor<T>& fine_in, std::size_t classes) {
    if (fine_in.rows() == 0)
        return Tensor<T>({0, classes}, {});
    return net.head(net.hidden(fine_in, 0.0, nullptr));
}

template <class T>
struct UgsResult {
    std::vector<std::size_t> selected;
    std::vector<double> u;
    std::vector<double> mean;
    std::string warning;
};

/// MC-dropout uncertainty over T gradient-free coarse passes, then Top-K
/// selection. Pass t draws its masks from `rng.fork(t)`.
template <class T>
UgsResult<T> ugs(const FieldMlp<T>& coarse, const Tensor<T>& features, std::size_t passes, double top_k,
                 double dropout_p, const Rng& rng) {
    if (passes < 2)
        throw ParameterError("ugs needs T >= 2 passes");
    UgsResult<T> r;
    const std::size_t m = features.rows();
    if (m == 0)
        return r;
    if (dropout_p == 0.0)
        r.warning = "dropout rate is 0: every uncertainty is 0 and selection falls back to index order";
    NoGradGuard guard;
    const Tensor<T> a0 = coarse.first_activation(features.detach());
    std::vector<Tensor<T>> probs;
    probs.reserve(passes);
    for (std::size_t t = 0; t < passes; ++t) {
        Rng pass_rng = rng.fork(t);
        probs.push_back(coarse.head(coarse.hidden_from_first(a0, dropout_p, dropout_p > 0.0 ? &pass_rng : nullptr)));
    }
    auto est = uncertainty_from_passes(probs);
    r.selected = select_top_k(est.u, top_k);
    r.u = std::move(est.u);
    r.mean = std::move(est.mean);
    return r;
}

} // namespace imseg
