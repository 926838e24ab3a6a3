#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imseg/core/box.hpp"
#include "imseg/core/parameter.hpp"
#include "imseg/decoder/implicit_decoder.hpp"
#include "imseg/decoder/sampling.hpp"
#include "imseg/encoder/image_encoder.hpp"
#include "imseg/encoder/prompt_encoder.hpp"

namespace imseg {

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;

    void validate() const {
        encoder.validate();
        decoder.validate();
    }
};

/// Seed of the frozen base encoder. It stands in for pretrained weights, so
/// it does not depend on the training seed.
inline constexpr std::uint64_t kBaseEncoderSeed = 0x5eed0fba5eULL;

template <class T>
struct EncoderOutput {
    Tensor<T> feature_map;      // [h×w×C]
    Tensor<T> prompt_embedding; // [C_p]
};

template <class T>
struct SegmentationResult {
    std::size_t height = 0;
    std::size_t width = 0;
    Tensor<T> coarse;                  // Ô^c [M×C]
    std::vector<double> uncertainty;   // u [M], zeros unless top-k sampling ran
    std::vector<std::size_t> selected; // S, ascending
    Tensor<T> fine;                    // Ô^f [|S|×C]
    Tensor<T> merged;                  // Ô [M×C]
    std::string warning;

    /// Row-major arg-max labels of the merged map.
    std::vector<std::uint8_t> labels() const {
        const std::size_t c = merged.cols();
        std::vector<std::uint8_t> out(merged.rows());
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < c; ++k)
                if (merged.at(i, k) > merged.at(i, best))
                    best = k;
            out[i] = static_cast<std::uint8_t>(best);
        }
        return out;
    }
};

/// Promptable implicit segmenter: adapted image encoder and box embedder
/// feeding a coarse field, uncertainty guided point selection and a fine
/// field on the selected points.
template <class T>
class Segmenter {
  public:
    Segmenter(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        const Rng root(seed, 0);
        encoder_ = ImageEncoder<T>(cfg_.encoder, Rng(kBaseEncoderSeed, 1), root.fork(1));
        prompt_ = PromptEncoder<T>(cfg_.encoder.prompt_levels, cfg_.encoder.prompt_dim, root.fork(2));
        Rng dec_rng = root.fork(3);
        const std::size_t enc_dim = 4 * cfg_.decoder.levels;
        coarse_ = FieldMlp<T>(enc_dim + cfg_.encoder.embed_dim + cfg_.encoder.prompt_dim, cfg_.decoder.coarse_dims,
                              cfg_.decoder.n_classes, dec_rng);
        fine_ = FieldMlp<T>(coarse_.hidden_dim() + enc_dim, cfg_.decoder.fine_dims, cfg_.decoder.n_classes, dec_rng);
        encoder_.collect(params_);
        prompt_.collect(params_);
        coarse_.collect(params_, "coarse.");
        fine_.collect(params_, "fine.");
    }

    // Parameters are shared handles; a member-wise copy would alias them.
    Segmenter(const Segmenter&) = delete;
    Segmenter& operator=(const Segmenter&) = delete;
    Segmenter(Segmenter&&) noexcept = default;
    Segmenter& operator=(Segmenter&&) noexcept = default;

    const ModelConfig& config() const { return cfg_; }
    ParameterList<T>& parameters() { return params_; }
    const ParameterList<T>& parameters() const { return params_; }
    ImageEncoder<T>& image_encoder() { return encoder_; }
    const ImageEncoder<T>& image_encoder() const { return encoder_; }
    const PromptEncoder<T>& prompt_encoder() const { return prompt_; }
    const FieldMlp<T>& coarse_field() const { return coarse_; }
    const FieldMlp<T>& fine_field() const { return fine_; }

    std::vector<std::vector<T>> snapshot() const {
        std::vector<std::vector<T>> s;
        for (const auto& p : params_)
            s.push_back(p.tensor.values());
        return s;
    }
    void restore(const std::vector<std::vector<T>>& s) {
        if (s.size() != params_.size())
            throw ContractError("restore: snapshot has " + std::to_string(s.size()) + " tensors, model has " +
                                std::to_string(params_.size()));
        for (std::size_t i = 0; i < s.size(); ++i) {
            auto dst = params_[i].tensor.mutable_data();
            if (dst.size() != s[i].size())
                throw DimensionError("restore: size mismatch for " + params_[i].name);
            std::copy(s[i].begin(), s[i].end(), dst.begin());
        }
    }

    EncoderOutput<T> encode(const Tensor<T>& image, const BoundingBox& box) const {
        return {encoder_.encode(image), prompt_.encode(box)};
    }

    PointBatch<T> points(const Tensor<T>& coords, const EncoderOutput<T>& enc) const {
        return assemble(coords, enc.feature_map, enc.prompt_embedding, cfg_.decoder.levels);
    }

    CoarseOutput<T> coarse(const Tensor<T>& features, Rng* dropout_rng = nullptr) const {
        return decode_coarse(coarse_, features, cfg_.decoder.dropout_p, dropout_rng);
    }

    Tensor<T> fine(const Tensor<T>& coarse_hidden, const Tensor<T>& encoded,
                   std::span<const std::size_t> selected) const {
        if (selected.empty())
            return Tensor<T>({0, cfg_.decoder.n_classes}, {});
        return decode_fine(fine_, fine_input(coarse_hidden, encoded, selected), cfg_.decoder.n_classes);
    }

    /// Refinement set for `features` under the configured sampling mode.
    /// Fills `u` with the uncertainty when top-k sampling ran.
    std::vector<std::size_t> select(const Tensor<T>& features, const Rng& rng, std::vector<double>* u = nullptr,
                                    std::string* warning = nullptr) const {
        const auto& d = cfg_.decoder;
        switch (d.sampling) {
        case Sampling::off:
            return {};
        case Sampling::random: {
            Rng r = rng.fork(0x7a4d);
            return select_random(features.rows(), d.top_k, r);
        }
        case Sampling::top_k:
            break;
        }
        auto res = ugs(coarse_, features, d.mc_passes, d.top_k, d.dropout_p, rng);
        if (u)
            *u = std::move(res.u);
        if (warning)
            *warning = std::move(res.warning);
        return res.selected;
    }

    /// Full-grid inference at H×W with dropout-free final forwards.
    SegmentationResult<T> predict(const Tensor<T>& image, const BoundingBox& box, std::size_t height,
                                  std::size_t width, const Rng& rng) const {
        NoGradGuard guard;
        SegmentationResult<T> r;
        r.height = height;
        r.width = width;
        const auto enc = encode(image, box);
        const auto batch = points(full_grid<T>(height, width), enc);
        const auto c = coarse(batch.features);
        r.coarse = c.probs;
        r.uncertainty.assign(batch.size(), 0.0);
        r.selected = select(batch.features, rng, &r.uncertainty, &r.warning);
        if (r.uncertainty.size() != batch.size())
            r.uncertainty.assign(batch.size(), 0.0);
        r.fine = fine(c.hidden, batch.encoded, r.selected);
        r.merged = merge(r.coarse, r.fine, r.selected);
        return r;
    }

  private:
    ModelConfig cfg_;
    ImageEncoder<T> encoder_;
    PromptEncoder<T> prompt_;
    FieldMlp<T> coarse_, fine_;
    ParameterList<T> params_;
};

} // namespace imseg
