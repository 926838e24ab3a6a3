#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include "imseg/core/gradcheck.hpp"
#include "imseg/encoder/frequency_adapter.hpp"
#include "imseg/encoder/image_encoder.hpp"
#include "imseg/encoder/lora.hpp"
#include "imseg/encoder/prompt_encoder.hpp"
#include "imseg/encoder/spectrum.hpp"
#include "imseg/training/adamw.hpp"

using namespace imseg;
using Td = Tensor<double>;

namespace {

// O(H²W²) direct evaluation of the 2-D DFT.
std::vector<std::complex<double>> direct_dft2(const std::vector<double>& f, std::size_t H, std::size_t W) {
    std::vector<std::complex<double>> out(H * W);
    for (std::size_t u = 0; u < H; ++u)
        for (std::size_t v = 0; v < W; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(h * u) / static_cast<double>(H) +
                                        static_cast<double>(w * v) / static_cast<double>(W));
                    acc += f[h * W + w] * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            out[u * W + v] = acc;
        }
    return out;
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v)
        x = rng.uniform();
    return v;
}

template <class T>
Tensor<T> random_image(std::size_t s, Rng& rng) {
    std::vector<T> v(s * s * 3);
    for (auto& x : v)
        x = static_cast<T>(rng.uniform());
    return Tensor<T>({s, s, 3}, std::move(v));
}

template <class T>
Tensor<T> shifted(const Tensor<T>& img, std::size_t dy, std::size_t dx) {
    const std::size_t H = img.dim(0), W = img.dim(1);
    std::vector<T> v(img.size());
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            for (std::size_t c = 0; c < 3; ++c)
                v[(((i + dy) % H) * W + (j + dx) % W) * 3 + c] = img[(i * W + j) * 3 + c];
    return Tensor<T>(img.shape(), std::move(v));
}

void randomize(Tensor<float>& t, Rng& rng, double scale) {
    for (auto& v : t.mutable_data())
        v = static_cast<float>(rng.uniform(-scale, scale));
}

} // namespace

TEST(Dft2, MatchesDirectSumOnAllSmallSizes) {
    Rng rng(17, 0);
    for (std::size_t H : {4u, 8u, 16u})
        for (std::size_t W : {4u, 8u, 16u}) {
            const auto f = random_values(H * W, rng);
            const auto s = dft2(f, H, W);
            const auto ref = direct_dft2(f, H, W);
            for (std::size_t i = 0; i < H * W; ++i) {
                ASSERT_NEAR(s.amplitude[i], std::abs(ref[i]), 1e-6) << H << "x" << W << " bin " << i;
                if (std::abs(ref[i]) > 1e-6) {
                    const auto z = std::polar(s.amplitude[i], s.phase[i]);
                    ASSERT_NEAR(std::abs(z - ref[i]), 0.0, 1e-6);
                }
            }
        }
}

TEST(Dft2, NonPowerOfTwoUsesDirectPath) {
    Rng rng(18, 0);
    const auto f = random_values(6 * 5, rng);
    const auto s = dft2(f, 6, 5);
    const auto ref = direct_dft2(f, 6, 5);
    for (std::size_t i = 0; i < ref.size(); ++i)
        EXPECT_NEAR(s.amplitude[i], std::abs(ref[i]), 1e-9);
}

TEST(Dft2, ConstantImageIsDcOnly) {
    const std::size_t H = 8, W = 16;
    const auto s = dft2(std::vector<double>(H * W, 0.3), H, W);
    EXPECT_NEAR(s.amplitude[0], 0.3 * H * W, 1e-12);
    for (std::size_t i = 1; i < H * W; ++i)
        EXPECT_EQ(s.amplitude[i], 0.0);
}

TEST(Dft2, SingleCosineConcentratesInTwoBins) {
    const std::size_t H = 8, W = 4;
    std::vector<double> f(H * W);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
            f[h * W + w] = std::cos(2.0 * std::numbers::pi * static_cast<double>(h) / H);
    const auto s = dft2(f, H, W);
    for (std::size_t u = 0; u < H; ++u)
        for (std::size_t v = 0; v < W; ++v) {
            const double a = s.amplitude[u * W + v];
            if ((u == 1 || u == H - 1) && v == 0)
                EXPECT_NEAR(a, H * W / 2.0, 1e-9);
            else
                EXPECT_EQ(a, 0.0) << u << "," << v;
        }
}

TEST(Dft2, AmplitudeNonNegativePhaseInRange) {
    Rng rng(19, 0);
    const auto s = dft2(random_values(16 * 16, rng), 16, 16);
    for (std::size_t i = 0; i < s.amplitude.size(); ++i) {
        EXPECT_GE(s.amplitude[i], 0.0);
        EXPECT_GT(s.phase[i], -std::numbers::pi);
        EXPECT_LE(s.phase[i], std::numbers::pi);
    }
}

TEST(Dft2, AmplitudeShiftInvariantPhaseNot) {
    Rng rng(20, 0);
    const auto f = random_values(16 * 16, rng);
    std::vector<double> g(f.size());
    for (std::size_t h = 0; h < 16; ++h)
        for (std::size_t w = 0; w < 16; ++w)
            g[((h + 3) % 16) * 16 + (w + 5) % 16] = f[h * 16 + w];
    const auto a = dft2(f, 16, 16), b = dft2(g, 16, 16);
    double phase_diff = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_NEAR(a.amplitude[i], b.amplitude[i], 1e-5 * std::max(1.0, a.amplitude[i]));
        phase_diff = std::max(phase_diff, std::abs(a.phase[i] - b.phase[i]));
    }
    EXPECT_GT(phase_diff, 0.1);
}

TEST(Dft2, RejectsNonFiniteInput) {
    std::vector<double> f(16, 0.0);
    f[3] = std::nan("");
    EXPECT_THROW((void)dft2(f, 4, 4), DataError);
    f[3] = INFINITY;
    EXPECT_THROW((void)dft2(f, 4, 4), DataError);
}

TEST(SpectralTokens, ConstantImageHasOneNonzeroPerChannel) {
    const auto img = Td::full({16, 16, 3}, 0.4);
    const auto tok = spectral_tokens(img, FaMode::amplitude, 4);
    ASSERT_EQ(tok.shape(), (Shape{16, 48}));
    std::vector<int> nonzero(3, 0);
    for (std::size_t t = 0; t < 16; ++t)
        for (std::size_t k = 0; k < 48; ++k)
            if (tok.at(t, k) != 0.0) {
                ++nonzero[k % 3];
                // DC sits at (8, 8): patch (2, 2), offset (0, 0).
                EXPECT_EQ(t, 2u * 4 + 2);
                EXPECT_EQ(k / 3, 0u);
                EXPECT_NEAR(tok.at(t, k), std::log1p(0.4 * 256), 1e-12);
            }
    EXPECT_EQ(nonzero, (std::vector<int>{1, 1, 1}));
}

TEST(SpectralTokens, AmplitudeTokensShiftInvariant) {
    Rng rng(21, 0);
    const auto img = random_image<double>(32, rng);
    const auto a = spectral_tokens(img, FaMode::amplitude, 8);
    const auto b = spectral_tokens(shifted(img, 5, 11), FaMode::amplitude, 8);
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(SpectralTokens, MatchesComposedOracle) {
    Rng rng(22, 0);
    const std::size_t S = 64, P = 8, G = S / P;
    const auto img = random_image<double>(S, rng);
    const auto tok = spectral_tokens(img, FaMode::amplitude, P);
    ASSERT_EQ(tok.shape(), (Shape{64, 192}));
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> ch(S * S);
        for (std::size_t i = 0; i < S * S; ++i)
            ch[i] = img[i * 3 + c];
        const auto ref = direct_dft2(ch, S, S);
        for (std::size_t u = 0; u < S; ++u)
            for (std::size_t v = 0; v < S; ++v) {
                const std::size_t r = (u + S / 2) % S, q = (v + S / 2) % S;
                const double got = tok.at((r / P) * G + q / P, ((r % P) * P + q % P) * 3 + c);
                ASSERT_NEAR(got, std::log1p(std::abs(ref[u * S + v])), 1e-6);
            }
    }
}

TEST(SpectralTokens, PhaseModeAndOffMode) {
    Rng rng(23, 0);
    const auto img = random_image<double>(16, rng);
    const auto tok = spectral_tokens(img, FaMode::phase, 4);
    for (double v : tok.values()) {
        EXPECT_GT(v, -std::numbers::pi);
        EXPECT_LE(v, std::numbers::pi);
    }
    EXPECT_THROW((void)spectral_tokens(img, FaMode::off, 4), ContractError);
    EXPECT_EQ(fa_mode_from_string("amp"), FaMode::amplitude);
    EXPECT_EQ(fa_mode_from_string("phase"), FaMode::phase);
    EXPECT_THROW((void)fa_mode_from_string("both"), ArgumentError);
}

TEST(FrequencyAdapter, ZeroUpProjectionIsTransparent) {
    Rng rng(24, 0);
    auto fa = FrequencyAdapter<double>::create(12, 5, 7, rng);
    Rng r2(24, 1);
    const auto x = Td({3, 12}, random_values(36, r2));
    for (double v : fa.forward(x).values())
        EXPECT_EQ(v, 0.0);
}

TEST(FrequencyAdapter, IdentityProjectionsGiveGelu) {
    const std::size_t n = 6;
    std::vector<double> eye(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        eye[i * n + i] = 1.0;
    FrequencyAdapter<double> fa{Td({n, n}, eye), Td::zeros({n}), Td({n, n}, eye), Td::zeros({n})};
    Rng rng(25, 0);
    const auto x = Td({4, n}, random_values(4 * n, rng));
    const auto y = fa.forward(x), g = gelu(x);
    for (std::size_t i = 0; i < y.size(); ++i)
        EXPECT_DOUBLE_EQ(y[i], g[i]);
}

TEST(FrequencyAdapter, GradientCheck) {
    Rng rng(26, 0);
    auto fa = FrequencyAdapter<double>::create(10, 4, 6, rng);
    for (auto* t : {&fa.up_w, &fa.up_b})
        for (auto& v : t->mutable_data())
            v = rng.uniform(-0.5, 0.5);
    const auto x = Td({5, 10}, random_values(50, rng));
    const auto w = Td({5, 6}, random_values(30, rng));
    const auto rep = gradient_check([&] { return sum(mul(fa.forward(x), w)); },
                                    {{"down_w", fa.down_w}, {"down_b", fa.down_b}, {"up_w", fa.up_w}, {"up_b", fa.up_b}},
                                    1e-4);
    EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST(Lora, ZeroBIsBitIdenticalToBase) {
    Rng rng(27, 0);
    const std::size_t c = 16;
    AttentionWeights<float> base{fan_in_weight<float>(c, c, rng, false), fan_in_weight<float>(c, c, rng, false),
                                 fan_in_weight<float>(c, c, rng, false), fan_in_weight<float>(c, c, rng, false)};
    const auto q = LoraPair<float>::create(c, c, 4, rng), v = LoraPair<float>::create(c, c, 4, rng);
    std::vector<float> xv(10 * c);
    for (auto& x : xv)
        x = static_cast<float>(rng.uniform(-1, 1));
    const Tensor<float> x({10, c}, xv);
    EXPECT_EQ(lora_attention(x, base, &q, &v, 4).values(), lora_attention<float>(x, base, nullptr, nullptr, 4).values());
}

TEST(Lora, MaterializedWeightMatchesFactoredPath) {
    Rng rng(28, 0);
    const std::size_t c = 16;
    AttentionWeights<float> base{fan_in_weight<float>(c, c, rng, false), fan_in_weight<float>(c, c, rng, false),
                                 fan_in_weight<float>(c, c, rng, false), fan_in_weight<float>(c, c, rng, false)};
    auto q = LoraPair<float>::create(c, c, 4, rng), v = LoraPair<float>::create(c, c, 4, rng);
    randomize(q.b, rng, 0.3);
    randomize(v.b, rng, 0.3);
    std::vector<float> xv(12 * c);
    for (auto& x : xv)
        x = static_cast<float>(rng.uniform(-1, 1));
    const Tensor<float> x({12, c}, xv);
    const auto factored = lora_attention(x, base, &q, &v, 2);
    AttentionWeights<float> merged{q.materialize(base.wq), base.wk, v.materialize(base.wv), base.wo};
    const auto direct = lora_attention<float>(x, merged, nullptr, nullptr, 2);
    for (std::size_t i = 0; i < direct.size(); ++i)
        EXPECT_NEAR(factored[i], direct[i], 1e-5);
}

TEST(Lora, SingleTokenAttentionReturnsValueRow) {
    const Td eye({2, 2}, {1, 0, 0, 1});
    const Td wv({2, 2}, {2, 1, 0, 3});
    AttentionWeights<double> base{Td({2, 2}, {0.3, -1, 2, 0.5}), Td({2, 2}, {1, 1, -1, 2}), wv, eye};
    const Td x({1, 2}, {0.7, -0.2});
    const auto out = lora_attention<double>(x, base, nullptr, nullptr, 1);
    EXPECT_NEAR(out[0], 2 * 0.7 + 1 * -0.2, 1e-15);
    EXPECT_NEAR(out[1], 3 * -0.2, 1e-15);
}

TEST(Lora, RankMismatchIsConfigError) {
    Rng rng(29, 0);
    LoraPair<double> bad{Td::zeros({4, 8}), Td::zeros({8, 3})};
    EXPECT_THROW(bad.validate(), ConfigError);
    AttentionWeights<double> base{Td::zeros({8, 8}), Td::zeros({8, 8}), Td::zeros({8, 8}), Td::zeros({8, 8})};
    EXPECT_THROW((void)lora_attention<double>(Td::zeros({2, 8}), base, &bad, nullptr, 2), ConfigError);
}

TEST(ImageEncoder, OutputShapeAndFiniteness) {
    EncoderConfig cfg;
    ImageEncoder<float> enc(cfg, Rng(1, 1), Rng(2, 2));
    Rng rng(30, 0);
    const auto out = enc.encode(random_image<float>(64, rng));
    EXPECT_EQ(out.shape(), (Shape{8, 8, 64}));
    for (float v : out.values())
        EXPECT_TRUE(std::isfinite(v));
}

TEST(ImageEncoder, WrongInputSizeIsDimensionError) {
    EncoderConfig cfg;
    ImageEncoder<float> enc(cfg, Rng(1, 1), Rng(2, 2));
    EXPECT_THROW((void)enc.encode(Tensor<float>::zeros({32, 32, 3})), DimensionError);
    EXPECT_THROW((void)enc.encode(Tensor<float>::zeros({64, 64, 1})), DimensionError);
}

TEST(ImageEncoder, ConfigValidation) {
    EncoderConfig c;
    c.image_size = 60;
    EXPECT_THROW(c.validate(), ConfigError);
    c = EncoderConfig{};
    c.n_heads = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = EncoderConfig{};
    c.lora_rank = 64;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ImageEncoder, AdaptersTransparentAtInit) {
    for (auto mode : {FaMode::amplitude, FaMode::phase, FaMode::off}) {
        EncoderConfig cfg;
        cfg.fa_mode = mode;
        ImageEncoder<float> enc(cfg, Rng(1, 1), Rng(3, 3));
        Rng rng(31, 0);
        const auto img = random_image<float>(64, rng);
        EXPECT_EQ(enc.encode(img).values(), enc.encode_base(img).values()) << to_string(mode);
    }
}

TEST(ImageEncoder, TrainableBudgetBelowTenPercent) {
    EncoderConfig cfg;
    ImageEncoder<float> enc(cfg, Rng(1, 1), Rng(2, 2));
    ParameterList<float> ps;
    enc.collect(ps);
    const double all = static_cast<double>(count_parameters(ps, false));
    const double trainable = static_cast<double>(count_parameters(ps, true));
    EXPECT_GT(trainable, 0.0);
    EXPECT_LT(trainable / all, 0.10);
}

TEST(ImageEncoder, GradientsReachOnlyAdapters) {
    EncoderConfig cfg;
    cfg.image_size = 16;
    cfg.patch_size = 4;
    cfg.embed_dim = 16;
    cfg.n_blocks = 2;
    cfg.n_heads = 2;
    cfg.lora_rank = 2;
    ImageEncoder<double> enc(cfg, Rng(1, 1), Rng(2, 2));
    ParameterList<double> ps;
    enc.collect(ps);
    // Move B and up-projections off zero so every adapter tensor receives gradient.
    Rng rng(32, 0);
    for (auto& p : ps)
        if (p.group == ParamGroup::adapter)
            for (auto& v : p.tensor.mutable_data())
                if (v == 0.0)
                    v = rng.uniform(-0.1, 0.1);
    const auto out = enc.encode(random_image<double>(16, rng));
    sum(mul(out, out)).backward();
    for (const auto& p : ps) {
        if (p.group == ParamGroup::frozen) {
            EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
            EXPECT_FALSE(p.tensor.has_grad()) << p.name;
        } else {
            EXPECT_TRUE(p.tensor.has_grad()) << p.name;
        }
    }
}

TEST(ImageEncoder, FaOffFreezesAdapterTensors) {
    EncoderConfig cfg;
    cfg.fa_mode = FaMode::off;
    ImageEncoder<float> enc(cfg, Rng(1, 1), Rng(2, 2));
    ParameterList<float> ps;
    enc.collect(ps);
    for (const auto& p : ps)
        if (p.name.find(".fa.") != std::string::npos) {
            EXPECT_EQ(p.group, ParamGroup::frozen);
            EXPECT_FALSE(p.tensor.requires_grad());
        }
}

TEST(ImageEncoder, OneOptimizerStepBreaksTransparency) {
    EncoderConfig cfg;
    ImageEncoder<float> enc(cfg, Rng(1, 1), Rng(2, 2));
    ParameterList<float> ps;
    enc.collect(ps);
    Rng rng(33, 0);
    const auto img = random_image<float>(64, rng);
    const auto base = enc.encode_base(img);
    const auto out = enc.encode(img);
    sum(mul(out, out)).backward();
    AdamW<float> opt(ps, {});
    opt.step();
    EXPECT_NE(enc.encode(img).values(), base.values());
    EXPECT_EQ(enc.encode_base(img).values(), base.values());
}

TEST(PromptEncoder, BoxesAndErrors) {
    PromptEncoder<double> pe(4, 16, Rng(5, 5));
    const auto full = pe.encode({0, 0, 1, 1});
    EXPECT_EQ(full.shape(), Shape{16});
    for (double v : full.values())
        EXPECT_TRUE(std::isfinite(v));
    EXPECT_THROW((void)pe.encode({0.5, 0.1, 0.4, 0.9}), PromptError);
    EXPECT_THROW((void)pe.encode({0.1, 0.3, 0.5, 0.3}), PromptError);
    EXPECT_THROW((void)pe.encode({-0.1, 0.0, 0.5, 0.5}), PromptError);
}

TEST(PromptEncoder, DistinctBoxesGiveDistinctEmbeddings) {
    PromptEncoder<double> pe(4, 16, Rng(5, 6));
    Rng rng(34, 0);
    std::vector<std::vector<double>> seen;
    for (int i = 0; i < 100; ++i) {
        const double x0 = rng.uniform(0, 0.5), y0 = rng.uniform(0, 0.5);
        const BoundingBox b{x0, y0, x0 + rng.uniform(0.05, 0.5), y0 + rng.uniform(0.05, 0.5)};
        seen.push_back(pe.encode(b).values());
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        for (std::size_t j = i + 1; j < seen.size(); ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < 16; ++k)
                d = std::max(d, std::abs(seen[i][k] - seen[j][k]));
            EXPECT_GT(d, 1e-9) << i << " vs " << j;
        }
}
