#pragma once

#include <string>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/core/ops.hpp"
#include "imseg/core/parameter.hpp"
#include "imseg/encoder/frequency_adapter.hpp"
#include "imseg/encoder/lora.hpp"
#include "imseg/encoder/spectrum.hpp"

namespace imseg {

struct EncoderConfig {
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t embed_dim = 64;
    std::size_t n_blocks = 4;
    std::size_t n_heads = 4;
    std::size_t lora_rank = 4;
    std::size_t fa_hidden = 8;
    FaMode fa_mode = FaMode::amplitude;
    std::size_t mlp_ratio = 2;
    std::size_t prompt_dim = 16;
    std::size_t prompt_levels = 4;

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t patch_dim() const { return patch_size * patch_size * 3; }

    void validate() const {
        if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
            throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                              std::to_string(patch_size));
        if (n_heads == 0 || embed_dim % n_heads != 0)
            throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by n_heads " +
                              std::to_string(n_heads));
        if (lora_rank == 0 || lora_rank >= embed_dim)
            throw ConfigError("lora_rank must be in [1, embed_dim), got " + std::to_string(lora_rank));
        if (n_blocks == 0 || fa_hidden == 0 || mlp_ratio == 0 || prompt_dim == 0 || prompt_levels == 0)
            throw ConfigError("encoder extents must be positive");
    }
};

template <class T>
struct EncoderBlock {
    Tensor<T> ln1_g, ln1_b;
    AttentionWeights<T> attn;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    LoraPair<T> lora_q, lora_v;
    FrequencyAdapter<T> fa;
};

/// Patch transformer with a frozen, seeded base and trainable LoRA and
/// frequency adapters. Each block:
///   x += Attn(LN1 x);  x += MLP(LN2 x);  x += FA_b(spectral tokens)
/// followed by a final layer norm and a reshape to [h×w×C].
template <class T>
class ImageEncoder {
  public:
    ImageEncoder() = default;

    ImageEncoder(const EncoderConfig& cfg, Rng base_rng, Rng adapter_rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t c = cfg_.embed_dim, hid = c * cfg_.mlp_ratio;
        patch_w_ = fan_in_weight<T>(c, cfg_.patch_dim(), base_rng, false);
        patch_b_ = constant_tensor<T>({c}, T(0), false);
        pos_ = uniform_tensor<T>({cfg_.tokens(), c}, 0.1, base_rng, false);
        for (std::size_t i = 0; i < cfg_.n_blocks; ++i) {
            EncoderBlock<T> b;
            b.ln1_g = constant_tensor<T>({c}, T(1), false);
            b.ln1_b = constant_tensor<T>({c}, T(0), false);
            b.attn = {fan_in_weight<T>(c, c, base_rng, false), fan_in_weight<T>(c, c, base_rng, false),
                      fan_in_weight<T>(c, c, base_rng, false), fan_in_weight<T>(c, c, base_rng, false)};
            b.ln2_g = constant_tensor<T>({c}, T(1), false);
            b.ln2_b = constant_tensor<T>({c}, T(0), false);
            b.mlp_w1 = fan_in_weight<T>(hid, c, base_rng, false);
            b.mlp_b1 = constant_tensor<T>({hid}, T(0), false);
            b.mlp_w2 = fan_in_weight<T>(c, hid, base_rng, false);
            b.mlp_b2 = constant_tensor<T>({c}, T(0), false);
            b.lora_q = LoraPair<T>::create(c, c, cfg_.lora_rank, adapter_rng);
            b.lora_v = LoraPair<T>::create(c, c, cfg_.lora_rank, adapter_rng);
            b.fa = FrequencyAdapter<T>::create(cfg_.patch_dim(), cfg_.fa_hidden, c, adapter_rng);
            if (cfg_.fa_mode == FaMode::off)
                for (auto* t : {&b.fa.down_w, &b.fa.down_b, &b.fa.up_w, &b.fa.up_b})
                    t->set_requires_grad(false);
            blocks_.push_back(std::move(b));
        }
        lnf_g_ = constant_tensor<T>({c}, T(1), false);
        lnf_b_ = constant_tensor<T>({c}, T(0), false);
    }

    const EncoderConfig& config() const { return cfg_; }
    std::vector<EncoderBlock<T>>& blocks() { return blocks_; }
    const std::vector<EncoderBlock<T>>& blocks() const { return blocks_; }

    /// [H×W×3] image in [0,1] -> [h×w×C] feature map.
    Tensor<T> encode(const Tensor<T>& image) const { return run(image, true); }

    /// Same network with every adapter path skipped.
    Tensor<T> encode_base(const Tensor<T>& image) const { return run(image, false); }

    /// Frequency-adapter output of one block for given spectral tokens.
    Tensor<T> frequency_adapter(const Tensor<T>& spec_tokens, std::size_t block_index) const {
        if (block_index >= blocks_.size())
            throw ContractError("frequency adapter index " + std::to_string(block_index) + " >= " +
                                std::to_string(blocks_.size()) + " blocks");
        return blocks_[block_index].fa.forward(spec_tokens);
    }

    /// Registers every tensor. LoRA always belongs to the adapter group; the
    /// frequency adapters only when they are in use.
    void collect(ParameterList<T>& out, const std::string& prefix = "encoder.") {
        auto frozen = [&](const std::string& n, Tensor<T>& t) { out.push_back({prefix + n, t, ParamGroup::frozen}); };
        const ParamGroup fa_group = cfg_.fa_mode == FaMode::off ? ParamGroup::frozen : ParamGroup::adapter;
        frozen("patch.w", patch_w_);
        frozen("patch.b", patch_b_);
        frozen("pos", pos_);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            auto& b = blocks_[i];
            const std::string p = "block" + std::to_string(i) + ".";
            frozen(p + "ln1.g", b.ln1_g);
            frozen(p + "ln1.b", b.ln1_b);
            frozen(p + "attn.wq", b.attn.wq);
            frozen(p + "attn.wk", b.attn.wk);
            frozen(p + "attn.wv", b.attn.wv);
            frozen(p + "attn.wo", b.attn.wo);
            frozen(p + "ln2.g", b.ln2_g);
            frozen(p + "ln2.b", b.ln2_b);
            frozen(p + "mlp.w1", b.mlp_w1);
            frozen(p + "mlp.b1", b.mlp_b1);
            frozen(p + "mlp.w2", b.mlp_w2);
            frozen(p + "mlp.b2", b.mlp_b2);
            out.push_back({prefix + p + "lora_q.a", b.lora_q.a, ParamGroup::adapter});
            out.push_back({prefix + p + "lora_q.b", b.lora_q.b, ParamGroup::adapter});
            out.push_back({prefix + p + "lora_v.a", b.lora_v.a, ParamGroup::adapter});
            out.push_back({prefix + p + "lora_v.b", b.lora_v.b, ParamGroup::adapter});
            out.push_back({prefix + p + "fa.down_w", b.fa.down_w, fa_group});
            out.push_back({prefix + p + "fa.down_b", b.fa.down_b, fa_group});
            out.push_back({prefix + p + "fa.up_w", b.fa.up_w, fa_group});
            out.push_back({prefix + p + "fa.up_b", b.fa.up_b, fa_group});
        }
        frozen("lnf.g", lnf_g_);
        frozen("lnf.b", lnf_b_);
    }

    /// [H×W×3] -> [N × patch·patch·3], raster patch order, (dy, dx, ch) inside.
    Tensor<T> patchify(const Tensor<T>& image) const {
        const std::size_t s = cfg_.image_size, p = cfg_.patch_size, g = cfg_.grid(), d = cfg_.patch_dim();
        std::vector<T> out(cfg_.tokens() * d);
        for (std::size_t pr = 0; pr < g; ++pr)
            for (std::size_t pc = 0; pc < g; ++pc)
                for (std::size_t dy = 0; dy < p; ++dy)
                    for (std::size_t dx = 0; dx < p; ++dx)
                        for (std::size_t ch = 0; ch < 3; ++ch)
                            out[(pr * g + pc) * d + (dy * p + dx) * 3 + ch] =
                                image[((pr * p + dy) * s + pc * p + dx) * 3 + ch] - T(0.5);
        return Tensor<T>({cfg_.tokens(), d}, std::move(out));
    }

  private:
    Tensor<T> run(const Tensor<T>& image, bool adapters) const {
        const std::size_t s = cfg_.image_size;
        if (image.rank() != 3 || image.dim(0) != s || image.dim(1) != s || image.dim(2) != 3)
            throw DimensionError("encoder expects a " + std::to_string(s) + "x" + std::to_string(s) +
                                 "x3 image, got " + shape_str(image.shape()));
        const bool use_fa = adapters && cfg_.fa_mode != FaMode::off;
        Tensor<T> spec;
        if (use_fa)
            spec = spectral_tokens(image, cfg_.fa_mode, cfg_.patch_size);
        Tensor<T> x = add(linear(patchify(image), patch_w_, patch_b_), pos_);
        for (const auto& b : blocks_) {
            const auto h1 = layernorm(x, b.ln1_g, b.ln1_b);
            x = add(x, lora_attention(h1, b.attn, adapters ? &b.lora_q : nullptr, adapters ? &b.lora_v : nullptr,
                                      cfg_.n_heads));
            const auto h2 = layernorm(x, b.ln2_g, b.ln2_b);
            x = add(x, linear(gelu(linear(h2, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2));
            if (use_fa)
                x = add(x, b.fa.forward(spec));
        }
        x = layernorm(x, lnf_g_, lnf_b_);
        return reshape(x, {cfg_.grid(), cfg_.grid(), cfg_.embed_dim});
    }

    EncoderConfig cfg_;
    Tensor<T> patch_w_, patch_b_, pos_;
    std::vector<EncoderBlock<T>> blocks_;
    Tensor<T> lnf_g_, lnf_b_;
};

} // namespace imseg
