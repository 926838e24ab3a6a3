#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "imseg/core/gradcheck.hpp"
#include "imseg/decoder/implicit_decoder.hpp"
#include "imseg/decoder/positional.hpp"
#include "imseg/decoder/sampling.hpp"

using namespace imseg;
using Td = Tensor<double>;

namespace {

Td random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
    std::vector<double> v(shape_size(s));
    for (auto& x : v)
        x = rng.uniform(lo, hi);
    return Td(std::move(s), std::move(v), grad);
}

// Per-point 4-neighbour interpolation written from the cell-center convention:
// continuous index = (p + 1)/2·n − 0.5, clamped to [0, n − 1].
double bilinear_oracle(const Td& fmap, double x, double y, std::size_t ch) {
    const std::size_t h = fmap.dim(0), w = fmap.dim(1), c = fmap.dim(2);
    auto pos = [](double p, std::size_t n) {
        return std::clamp((p + 1.0) * 0.5 * static_cast<double>(n) - 0.5, 0.0, static_cast<double>(n - 1));
    };
    const double fx = pos(x, w), fy = pos(y, h);
    const auto x0 = static_cast<std::size_t>(std::floor(fx)), y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double tx = fx - static_cast<double>(x0), ty = fy - static_cast<double>(y0);
    auto at = [&](std::size_t r, std::size_t q) { return fmap[(r * w + q) * c + ch]; };
    return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) + ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
}

Td rows_summing_to_one(std::size_t m, std::size_t c, Rng& rng) {
    return softmax(random_tensor({m, c}, rng, -2, 2), -1);
}

} // namespace

TEST(PositionalEncode, ZeroInput) {
    const auto e = positional_encode(Td({1, 2}, {0.0, 0.0}), 10);
    ASSERT_EQ(e.shape(), (Shape{1, 40}));
    for (std::size_t k = 0; k < 40; ++k)
        EXPECT_EQ(e[k], k % 2 == 0 ? 0.0 : 1.0) << k;
}

TEST(PositionalEncode, UnitInput) {
    const auto e = positional_encode(Td({1, 2}, {1.0, 0.0}), 10);
    for (std::size_t k = 0; k < 10; ++k) {
        EXPECT_NEAR(e[2 * k], 0.0, 1e-9);
        EXPECT_NEAR(e[2 * k + 1], k == 0 ? -1.0 : 1.0, 1e-12);
    }
}

TEST(PositionalEncode, HandEvaluatedLevelsTwo) {
    const double pi = std::numbers::pi;
    const auto e = positional_encode(Td({1, 2}, {0.5, -0.25}), 2);
    const std::vector<double> expect{std::sin(pi * 0.5),   std::cos(pi * 0.5),   std::sin(2 * pi * 0.5),
                                     std::cos(2 * pi * 0.5), std::sin(-pi * 0.25), std::cos(-pi * 0.25),
                                     std::sin(-2 * pi * 0.25), std::cos(-2 * pi * 0.25)};
    for (std::size_t k = 0; k < 8; ++k)
        EXPECT_NEAR(e[k], expect[k], 1e-15);
    for (double v : e.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(PositionalEncode, InjectiveOnGrids) {
    for (std::size_t r : {1u, 2u, 3u, 32u, 64u, 128u, 256u}) {
        const auto e = positional_encode(full_grid<double>(r, r), 10);
        std::set<std::vector<double>> rows;
        for (std::size_t i = 0; i < e.rows(); ++i)
            rows.insert(std::vector<double>(e.values().begin() + static_cast<std::ptrdiff_t>(i * 40),
                                            e.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * 40)));
        EXPECT_EQ(rows.size(), r * r) << r;
    }
}

TEST(FullGrid, SmallCases) {
    EXPECT_EQ(full_grid<double>(1, 1).values(), (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(full_grid<double>(2, 2).values(), (std::vector<double>{-0.5, -0.5, 0.5, -0.5, -0.5, 0.5, 0.5, 0.5}));
    const auto g = full_grid<double>(3, 5);
    ASSERT_EQ(g.shape(), (Shape{15, 2}));
    for (std::size_t j = 0; j + 1 < 5; ++j)
        EXPECT_NEAR(g.at(j + 1, 0) - g.at(j, 0), 0.4, 1e-12);
    EXPECT_NEAR(g.at(5, 1) - g.at(0, 1), 2.0 / 3.0, 1e-12);
    for (std::size_t i = 0; i < 15; ++i) {
        EXPECT_NEAR(g.at(i, 0) + g.at(14 - i, 0), 0.0, 1e-12);
        EXPECT_NEAR(g.at(i, 1) + g.at(14 - i, 1), 0.0, 1e-12);
    }
}

TEST(Bilinear, CellCentersAndMidpoints) {
    Rng rng(40, 0);
    const auto fmap = random_tensor({4, 4, 3}, rng);
    const auto centers = full_grid<double>(4, 4);
    const auto s = bilinear_sample(fmap, centers);
    for (std::size_t i = 0; i < s.size(); ++i)
        EXPECT_NEAR(s[i], fmap[i], 1e-15);
    // Midpoint between cells (1, 1) and (1, 2): x = 0, y = -0.25.
    const auto mid = bilinear_sample(fmap, Td({1, 2}, {0.0, -0.25}));
    for (std::size_t c = 0; c < 3; ++c)
        EXPECT_NEAR(mid[c], 0.5 * (fmap[(1 * 4 + 1) * 3 + c] + fmap[(1 * 4 + 2) * 3 + c]), 1e-15);
}

TEST(Bilinear, MatchesFourNeighbourOracle) {
    Rng rng(41, 0);
    const auto fmap = random_tensor({8, 8, 4}, rng);
    const auto coords = random_tensor({1000, 2}, rng);
    const auto s = bilinear_sample(fmap, coords);
    for (std::size_t i = 0; i < 1000; ++i)
        for (std::size_t c = 0; c < 4; ++c)
            ASSERT_NEAR(s.at(i, c), bilinear_oracle(fmap, coords.at(i, 0), coords.at(i, 1), c), 1e-6);
}

TEST(Bilinear, ClampsAtBorderAndDifferentiates) {
    Rng rng(42, 0);
    auto fmap = random_tensor({3, 5, 2}, rng, -1, 1, true);
    const auto corner = bilinear_sample(fmap, Td({1, 2}, {-1.0, -1.0}));
    EXPECT_EQ(corner[0], fmap[0]);
    const auto coords = random_tensor({20, 2}, rng);
    const auto w = random_tensor({20, 2}, rng);
    const auto rep = gradient_check([&] { return sum(mul(bilinear_sample(fmap, coords), w)); }, {{"fmap", fmap}}, 1e-6);
    EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST(Assemble, LayoutAndEmptyBatch) {
    Rng rng(43, 0);
    const auto fmap = random_tensor({4, 4, 6}, rng);
    const auto prompt = random_tensor({5}, rng);
    const auto coords = random_tensor({7, 2}, rng);
    const auto b = assemble(coords, fmap, prompt, 3);
    ASSERT_EQ(b.features.shape(), (Shape{7, 12 + 6 + 5}));
    const auto enc = positional_encode(coords, 3);
    const auto feat = bilinear_sample(fmap, coords);
    for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t k = 0; k < 12; ++k)
            EXPECT_EQ(b.features.at(i, k), enc.at(i, k));
        for (std::size_t k = 0; k < 6; ++k)
            EXPECT_EQ(b.features.at(i, 12 + k), feat.at(i, k));
        for (std::size_t k = 0; k < 5; ++k)
            EXPECT_EQ(b.features.at(i, 18 + k), prompt[k]);
    }
    const auto empty = assemble(Td({0, 2}, {}), fmap, prompt, 3);
    EXPECT_EQ(empty.size(), 0u);
    EXPECT_EQ(empty.features.shape(), (Shape{0, 23}));
}

TEST(DecodeCoarse, RowsSumToOneAndDeterministic) {
    Rng rng(44, 0);
    FieldMlp<double> net(10, {16, 8}, 3, rng);
    const auto x = random_tensor({25, 10}, rng);
    const auto a = decode_coarse(net, x, 0.5, nullptr), b = decode_coarse(net, x, 0.5, nullptr);
    EXPECT_EQ(a.probs.values(), b.probs.values());
    EXPECT_EQ(a.hidden.shape(), (Shape{25, 8}));
    for (std::size_t i = 0; i < 25; ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 3; ++c)
            s += a.probs.at(i, c);
        EXPECT_NEAR(s, 1.0, 1e-5);
    }
}

TEST(DecodeCoarse, GradientCheckOnFourPoints) {
    Rng rng(45, 0);
    FieldMlp<double> net(6, {8, 5}, 2, rng);
    ParameterList<double> ps;
    net.collect(ps, "c.");
    auto x = random_tensor({4, 6}, rng, -1, 1, true);
    const auto target = Td({4, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
    std::vector<std::pair<std::string, Td>> inputs{{"x", x}};
    for (auto& p : ps)
        inputs.emplace_back(p.name, p.tensor);
    const auto rep = gradient_check([&] { return sum(mul(decode_coarse(net, x, 0.5, nullptr).probs, target)); }, inputs, 1e-4);
    EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST(DecodeFine, RowsSumGradientAndEmpty) {
    Rng rng(46, 0);
    FieldMlp<double> net(9, {8, 6, 6, 4}, 2, rng);
    ParameterList<double> ps;
    net.collect(ps, "f.");
    const auto x = random_tensor({2, 9}, rng);
    const auto out = decode_fine(net, x, 2);
    for (std::size_t i = 0; i < 2; ++i)
        EXPECT_NEAR(out.at(i, 0) + out.at(i, 1), 1.0, 1e-5);
    const auto w = random_tensor({2, 2}, rng);
    std::vector<std::pair<std::string, Td>> inputs;
    for (auto& p : ps)
        inputs.emplace_back(p.name, p.tensor);
    const auto rep = gradient_check([&] { return sum(mul(decode_fine(net, x, 2), w)); }, inputs, 1e-4);
    EXPECT_TRUE(rep.passed) << rep.max_rel_error();
    EXPECT_EQ(decode_fine(net, Td({0, 9}, {}), 2).shape(), (Shape{0, 2}));
}

TEST(FieldMlp, SplitForwardMatchesWholeForward) {
    Rng rng(47, 0);
    FieldMlp<float> net(12, {16, 8}, 2, rng);
    std::vector<float> xv(30 * 12);
    for (auto& v : xv)
        v = static_cast<float>(rng.uniform(-1, 1));
    const Tensor<float> x({30, 12}, xv);
    const Rng base(3, 4);
    Rng r1 = base, r2 = base;
    EXPECT_EQ(net.hidden(x, 0.5, &r1).values(), net.hidden_from_first(net.first_activation(x), 0.5, &r2).values());
}

TEST(Uncertainty, HandEvaluatedThreePasses) {
    // M = 4, C = 2; point 2 sees foreground probabilities 0.2, 0.5, 0.8.
    std::vector<Td> passes;
    for (double p : {0.2, 0.5, 0.8})
        passes.push_back(Td({4, 2}, {0.9, 0.1, 0.7, 0.3, 1 - p, p, 0.5, 0.5}));
    const auto est = uncertainty_from_passes(passes);
    EXPECT_DOUBLE_EQ(est.mean[2 * 2 + 1], 0.5);
    EXPECT_NEAR(est.u[2], 0.06, 1e-15);
    EXPECT_EQ(est.u[0], 0.0);
    EXPECT_EQ(est.u[1], 0.0);
    EXPECT_EQ(est.u[3], 0.0);
    EXPECT_THROW((void)uncertainty_from_passes(std::vector<Td>{passes[0]}), ParameterError);
}

TEST(Uncertainty, ZeroExactlyWhenPassesAgree) {
    Rng rng(48, 0);
    std::vector<Td> passes;
    const auto shared = rows_summing_to_one(10, 3, rng);
    for (int t = 0; t < 4; ++t) {
        auto v = shared.values();
        if (t == 2)
            for (std::size_t c = 0; c < 3; ++c)
                v[5 * 3 + c] = c == 0 ? 1.0 : 0.0;
        passes.push_back(Td({10, 3}, v));
    }
    const auto est = uncertainty_from_passes(passes);
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_GE(est.u[i], 0.0);
        if (i == 5)
            EXPECT_GT(est.u[i], 0.0);
        else
            EXPECT_EQ(est.u[i], 0.0);
    }
}

TEST(Selection, CeilingCounts) {
    EXPECT_EQ(selection_count(7, 0.125), 1u);
    EXPECT_EQ(selection_count(64, 0.125), 8u);
    EXPECT_EQ(selection_count(4096, 0.125), 512u);
    EXPECT_EQ(selection_count(3, 0.1), 1u);
    EXPECT_EQ(selection_count(10, 1.0), 10u);
    EXPECT_EQ(selection_count(0, 0.5), 0u);
}

TEST(Selection, TopKTieBreakAndSingleMax) {
    const std::vector<double> u{0.1, 0.3, 0.3, 0.0, 0.3, 0.2, 0.3, 0.1};
    EXPECT_EQ(select_top_k(u, 0.25), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(select_top_k(u, 0.5), (std::vector<std::size_t>{1, 2, 4, 6}));
    EXPECT_EQ(select_top_k(std::vector<double>{0.0, 0.5, 0.2}, 0.01), (std::vector<std::size_t>{1}));
    EXPECT_EQ(select_top_k(std::vector<double>(16, 0.0), 0.25), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Selection, RandomIsDistinctSortedAndSeeded) {
    Rng a(9, 9), b(9, 9);
    const auto s = select_random(100, 0.125, a);
    EXPECT_EQ(s, select_random(100, 0.125, b));
    EXPECT_EQ(s.size(), 13u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), s.size());
}

TEST(Ugs, ZeroDropoutDegeneratesWithWarning) {
    Rng rng(49, 0);
    FieldMlp<double> net(6, {8, 4}, 2, rng);
    const auto x = random_tensor({16, 6}, rng);
    const auto r = ugs(net, x, 4, 0.25, 0.0, Rng(1, 1));
    for (double u : r.u)
        EXPECT_EQ(u, 0.0);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_FALSE(r.warning.empty());
    EXPECT_THROW((void)ugs(net, x, 1, 0.25, 0.5, Rng(1, 1)), ParameterError);
}

TEST(Ugs, DeterministicPerSeedAndCountStable) {
    Rng rng(50, 0);
    FieldMlp<float> net(6, {32, 16}, 2, rng);
    std::vector<float> xv(64 * 6);
    for (auto& v : xv)
        v = static_cast<float>(rng.uniform(-1, 1));
    const Tensor<float> x({64, 6}, xv);
    const auto first = ugs(net, x, 8, 0.125, 0.5, Rng(7, 1));
    for (int rep = 0; rep < 10; ++rep) {
        const auto again = ugs(net, x, 8, 0.125, 0.5, Rng(7, 1));
        EXPECT_EQ(again.selected, first.selected);
        EXPECT_EQ(again.u, first.u);
    }
    const auto other = ugs(net, x, 8, 0.125, 0.5, Rng(7, 2));
    EXPECT_EQ(other.selected.size(), first.selected.size());
    EXPECT_NE(other.u, first.u);
    for (double u : first.u)
        EXPECT_GE(u, 0.0);
}

TEST(Ugs, ReportsHighestVariancePoints) {
    Rng rng(51, 0);
    FieldMlp<double> net(6, {32, 16}, 2, rng);
    const auto x = random_tensor({40, 6}, rng);
    const auto r = ugs(net, x, 6, 0.1, 0.5, Rng(3, 3));
    ASSERT_EQ(r.selected.size(), 4u);
    double min_sel = 1e9;
    for (auto i : r.selected)
        min_sel = std::min(min_sel, r.u[i]);
    for (std::size_t i = 0; i < 40; ++i)
        if (std::find(r.selected.begin(), r.selected.end(), i) == r.selected.end())
            EXPECT_LE(r.u[i], min_sel);
}

TEST(Merge, DegenerateAndErrorCases) {
    Rng rng(52, 0);
    const auto c = rows_summing_to_one(6, 2, rng);
    const auto f = rows_summing_to_one(6, 2, rng);
    EXPECT_EQ(merge(c, Td({0, 2}, {}), std::vector<std::size_t>{}).values(), c.values());
    EXPECT_EQ(merge(c, f, std::vector<std::size_t>{0, 1, 2, 3, 4, 5}).values(), f.values());
    EXPECT_THROW((void)merge(c, f, std::vector<std::size_t>{0, 1}), ContractError);
    EXPECT_THROW((void)merge(c, rows_summing_to_one(1, 2, rng), std::vector<std::size_t>{6}), ContractError);
}

TEST(Merge, RandomPartitionAudit) {
    Rng rng(53, 0);
    const auto c = rows_summing_to_one(16, 3, rng);
    auto sel = select_random(16, 0.4, rng);
    const auto f = rows_summing_to_one(sel.size(), 3, rng);
    const auto m = merge(c, f, sel);
    for (std::size_t i = 0; i < 16; ++i) {
        const auto it = std::find(sel.begin(), sel.end(), i);
        for (std::size_t k = 0; k < 3; ++k) {
            if (it != sel.end())
                EXPECT_EQ(m.at(i, k), f.at(static_cast<std::size_t>(it - sel.begin()), k));
            else
                EXPECT_EQ(m.at(i, k), c.at(i, k));
        }
    }
}

TEST(DecoderConfig, Validation) {
    DecoderConfig d;
    EXPECT_NO_THROW(d.validate());
    d.top_k = 0.0;
    EXPECT_THROW(d.validate(), ParameterError);
    d = DecoderConfig{};
    d.dropout_p = 1.0;
    EXPECT_THROW(d.validate(), ParameterError);
    d = DecoderConfig{};
    d.mc_passes = 1;
    EXPECT_THROW(d.validate(), ParameterError);
}
