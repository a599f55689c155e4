#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "block_oracles.hpp"
#include "pom/blocks.hpp"
#include "pom/gradcheck.hpp"
#include "pom/posenc.hpp"

using namespace pom;

namespace {

BlockConfig config(BlockVariant v, std::size_t d = 4, std::size_t degree = 2, std::size_t expand = 1,
                   std::size_t ffw = 2) {
    BlockConfig c;
    c.variant = v;
    c.dim = d;
    c.degree = degree;
    c.expand = expand;
    c.ffw_expand = ffw;
    return c;
}

// Every tensor, heads included, drawn from N(0, std^2).
BlockParams<double> random_params(const BlockConfig& c, std::uint64_t seed, double std = 0.4) {
    Rng rng(seed);
    auto p = init_block<double>(c, rng);
    p.visit([&](const std::string&, Tensor<double>& t) { t = rng.normal_tensor<double>(t.shape(), std); });
    return p;
}

BlockParams<double> zero_params(const BlockConfig& c) {
    Rng rng(1);
    auto p = init_block<double>(c, rng);
    p.visit([](const std::string&, Tensor<double>& t) { t = Tensor<double>::zeros(t.shape()); });
    return p;
}

std::vector<std::pair<std::string, Var<double>>> param_leaves(ParamScope<double>& scope,
                                                              const BlockParams<double>& p) {
    std::vector<std::pair<std::string, Var<double>>> leaves;
    p.visit([&](const std::string& name, const Tensor<double>& t) { leaves.emplace_back(name, scope.var(t)); });
    return leaves;
}

}  // namespace

TEST(Modulation, HandCases) {
    const Tensor<double> x = Tensor<double>::full({1, 2, 3}, 1.0);
    const auto zero = Tensor<double>::zeros({1, 3});
    EXPECT_TRUE(bitwise_equal(modulation(x, zero, zero), x));
    const auto out = modulation(x, Tensor<double>::full({1, 3}, 1.0), Tensor<double>::full({1, 3}, -1.0));
    for (double v : out.data()) EXPECT_EQ(v, 1.0);
    EXPECT_THROW(modulation(x, Tensor<double>::zeros({2, 3}), zero), ShapeError);
}

TEST(Modulation, MatchesScalarLoop) {
    Rng rng(2);
    const auto x = rng.normal_tensor<double>({2, 5, 6});
    const auto s = rng.normal_tensor<double>({2, 6});
    const auto b = rng.normal_tensor<double>({2, 6});
    oracle::PerSample ss(2), bb(2);
    for (std::size_t i = 0; i < 2; ++i) {
        ss[i].assign(s.raw() + i * 6, s.raw() + (i + 1) * 6);
        bb[i].assign(b.raw() + i * 6, b.raw() + (i + 1) * 6);
    }
    const auto expected = oracle::modulate(x, ss, bb);
    EXPECT_TRUE(bitwise_equal(modulation(x, s, b), expected));
    EXPECT_TRUE(bitwise_equal(modulation(x, Tensor<double>({2, 1, 6}, std::vector<double>(s.data().begin(), s.data().end())), Tensor<double>({2, 1, 6}, std::vector<double>(b.data().begin(), b.data().end()))),
                              expected));
    Tape<double> tape;
    const auto v = modulation(tape.leaf(x), tape.leaf(s), tape.leaf(b));
    EXPECT_TRUE(bitwise_equal(v.value(), expected));
}

TEST(GatedResidual, HandCasesAndScalarLoop) {
    Rng rng(3);
    const auto x = rng.normal_tensor<double>({2, 4, 3});
    const auto f = rng.normal_tensor<double>({2, 4, 3});
    EXPECT_TRUE(bitwise_equal(gated_residual(x, f, Tensor<double>::full({2, 3}, -1.0)), x));
    EXPECT_TRUE(bitwise_equal(gated_residual(x, Tensor<double>::zeros(x.shape()), Tensor<double>::zeros({2, 3})), x));
    const auto g = rng.normal_tensor<double>({2, 3});
    oracle::PerSample gg(2);
    for (std::size_t i = 0; i < 2; ++i) gg[i].assign(g.raw() + i * 3, g.raw() + (i + 1) * 3);
    const auto expected = oracle::gated_add(x, f, gg);
    EXPECT_TRUE(bitwise_equal(gated_residual(x, f, g), expected));
    Tape<double> tape;
    EXPECT_LE(max_abs_diff(gated_residual(tape.leaf(x), tape.leaf(f), tape.leaf(g)).value(), expected), 1e-15);
    EXPECT_THROW(gated_residual(x, Tensor<double>::zeros({2, 4, 2}), g), ShapeError);
}

TEST(Polymorpher, ZeroWeightsGiveIdentity) {
    const auto p = zero_params(config(BlockVariant::polymorpher));
    Rng rng(4);
    const auto x = rng.normal_tensor<double>({2, 5, 4});
    EXPECT_TRUE(bitwise_equal(polymorpher_block(x, p), x));
}

TEST(Polymorpher, ShapeAndComposition) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 10);
        const std::size_t d = 2 + 2 * rng.below(3), n = 1 + rng.below(7), b = 1 + rng.below(3);
        const auto p = random_params(config(BlockVariant::polymorpher, d), seed);
        const auto x = rng.normal_tensor<double>({b, n, d});
        const auto out = polymorpher_block(x, p);
        EXPECT_EQ(out.shape(), x.shape());
        // X + PoM(X) + FF(X + PoM(X)) written out directly.
        const auto y = add(x, oracle::pom(x, x, p.pom, MaskSpec::none()));
        EXPECT_LE(max_abs_diff(out, add(y, oracle::ffw(y, p))), 1e-12);
    }
}

TEST(Polymorpher, PermutationEquivariant) {
    const auto p = random_params(config(BlockVariant::polymorpher, 6), 5);
    Rng rng(6);
    const std::size_t n = 9;
    const auto x = rng.normal_tensor<double>({1, n, 6});
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.begin() + 5);
    std::rotate(perm.begin(), perm.begin() + 3, perm.end());
    auto permute = [&](const Tensor<double>& t) {
        Tensor<double> r(t.shape());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 6; ++c) r.at(0, i, c) = t.at(0, perm[i], c);
        return r;
    };
    EXPECT_LE(max_abs_diff(polymorpher_block(permute(x), p), permute(polymorpher_block(x, p))), 1e-9);
}

TEST(ImageBlock, ZeroWeightsGiveIdentity) {
    const auto p = zero_params(config(BlockVariant::image_dip));
    Rng rng(7);
    const auto x = rng.normal_tensor<double>({2, 5, 4});
    const auto c = rng.normal_tensor<double>({2, 4});
    EXPECT_TRUE(bitwise_equal(image_dip_block(x, c, p), x));
}

TEST(ImageBlock, InitHasZeroHeads) {
    Rng rng(8);
    const auto p = init_block<double>(config(BlockVariant::image_dip, 8), rng);
    EXPECT_EQ(p.cond_w.shape(), (Shape{32, 8}));
    EXPECT_EQ(p.gate_w.shape(), (Shape{16, 8}));
    for (const auto* t : {&p.cond_w, &p.cond_b, &p.gate_w, &p.gate_b})
        for (double v : t->data()) EXPECT_EQ(v, 0.0);
    for (double v : p.ffw_b1.data()) EXPECT_EQ(v, 0.0);
}

TEST(ImageBlock, MatchesTranscriptionOracle) {
    for (std::size_t degree : {2u, 3u}) {
        const auto p = random_params(config(BlockVariant::image_dip, 6, degree, 2, 3), 9 + degree);
        Rng rng(10);
        const auto x = rng.normal_tensor<double>({3, 7, 6});
        const auto c = rng.normal_tensor<double>({3, 6});
        EXPECT_LE(max_abs_diff(image_dip_block(x, c, p), oracle::image_block(x, c, p)), 1e-10) << degree;
    }
}

TEST(ImageBlock, ConditionChangesOutput) {
    const auto p = random_params(config(BlockVariant::image_dip, 6), 11);
    Rng rng(12);
    const auto x1 = rng.normal_tensor<double>({1, 5, 6});
    Tensor<double> x({2, 5, 6});
    std::copy(x1.data().begin(), x1.data().end(), x.raw());
    std::copy(x1.data().begin(), x1.data().end(), x.raw() + 30);
    const auto c = rng.normal_tensor<double>({2, 6});
    const auto out = image_dip_block(x, c, p);
    double gap = 0.0;
    for (std::size_t i = 0; i < 30; ++i) gap = std::max(gap, std::abs(out[i] - out[30 + i]));
    EXPECT_GT(gap, 1e-6);
}

TEST(ImageBlock, GradientsMatchFiniteDifferences) {
    const auto p = random_params(config(BlockVariant::image_dip, 4), 13);
    Tape<double> tape;
    ParamScope<double> scope(tape);
    Rng rng(14);
    Var<double> x = tape.leaf(rng.uniform_tensor<double>({2, 3, 4}, -2, 2));
    Var<double> c = tape.leaf(rng.normal_tensor<double>({2, 4}));
    Var<double> loss = oracle::probe_loss(image_dip_block(scope, x, c, p));
    auto leaves = param_leaves(scope, p);
    leaves.emplace_back("x", x);
    leaves.emplace_back("c", c);
    const auto report = gradcheck(tape, loss, leaves);
    EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_name;
}

TEST(ImageBlock, OutputsFiniteForLargeInputs) {
    Rng rng(15);
    auto p = init_block<double>(config(BlockVariant::image_dip, 8, 3, 2, 4), rng, 1.0);
    p.visit([&](const std::string&, Tensor<double>& t) { t = rng.normal_tensor<double>(t.shape()); });
    const auto x = rng.uniform_tensor<double>({2, 16, 8}, -10, 10);
    const auto c = rng.uniform_tensor<double>({2, 8}, -10, 10);
    EXPECT_TRUE(all_finite(image_dip_block(x, c, p)));
}

TEST(VideoBlock, MatchesTranscriptionOracle) {
    const auto p = random_params(config(BlockVariant::video_dip, 6), 16);
    Rng rng(17);
    const auto x = rng.normal_tensor<double>({2, 8, 6});
    const auto t = rng.normal_tensor<double>({2, 6});
    const auto c = rng.normal_tensor<double>({2, 5, 6});
    const auto text_mask = MaskSpec::padding(2, 5, {1, 1, 1, 0, 0, 1, 0, 1, 1, 1});
    for (const auto& temporal : {MaskSpec::none(), MaskSpec::block_causal(4)}) {
        for (const auto& tm : {MaskSpec::none(), text_mask}) {
            EXPECT_LE(max_abs_diff(video_dip_block(x, t, c, p, tm, temporal), oracle::video_block(x, t, c, p, tm, temporal)),
                      1e-10)
                << temporal.describe() << " / " << tm.describe();
        }
    }
}

TEST(VideoBlock, ZeroTextReducesToImagePath) {
    auto vp = random_params(config(BlockVariant::video_dip, 4), 18);
    vp.cross_pom.w_out = Tensor<double>::zeros(vp.cross_pom.w_out.shape());
    vp.cross_pom.b_out = Tensor<double>::zeros(vp.cross_pom.b_out.shape());
    // Image block that uses the video block's self-mixing coefficients.
    auto ip = random_params(config(BlockVariant::image_dip, 4), 19);
    ip.pom = vp.pom;
    ip.ffw_w1 = vp.ffw_w1;
    ip.ffw_b1 = vp.ffw_b1;
    ip.ffw_w2 = vp.ffw_w2;
    ip.ffw_b2 = vp.ffw_b2;
    const std::size_t d = 4;
    std::copy(vp.cond_w.raw() + 4 * d * d, vp.cond_w.raw() + 8 * d * d, ip.cond_w.raw());
    std::copy(vp.cond_b.raw() + 4 * d, vp.cond_b.raw() + 8 * d, ip.cond_b.raw());
    std::copy(vp.gate_w.raw() + d * d, vp.gate_w.raw() + 3 * d * d, ip.gate_w.raw());
    std::copy(vp.gate_b.raw() + d, vp.gate_b.raw() + 3 * d, ip.gate_b.raw());

    Rng rng(20);
    const auto x = rng.normal_tensor<double>({2, 6, 4});
    const auto t = rng.normal_tensor<double>({2, 4});
    const auto text = Tensor<double>::zeros({2, 3, 4});
    EXPECT_LE(max_abs_diff(video_dip_block(x, t, text, vp), image_dip_block(x, t, ip)), 1e-12);
}

TEST(VideoBlock, BlockCausalHasNoFutureInfluence) {
    const auto p = random_params(config(BlockVariant::video_dip, 4), 21);
    Rng rng(22);
    const std::size_t K = 3, blocks = 4, n = K * blocks;
    const auto x = rng.normal_tensor<double>({1, n, 4});
    const auto t = rng.normal_tensor<double>({1, 4});
    const auto c = rng.normal_tensor<double>({1, 2, 4});
    const auto mask = MaskSpec::block_causal(K);
    const auto base = video_dip_block(x, t, c, p, MaskSpec::none(), mask);
    for (std::size_t b = 0; b + 1 < blocks; ++b) {
        auto xp = x;
        for (std::size_t i = (b + 1) * K; i < n; ++i)
            for (std::size_t j = 0; j < 4; ++j) xp.at(0, i, j) += 3.0 * rng.normal();
        const auto out = video_dip_block(xp, t, c, p, MaskSpec::none(), mask);
        for (std::size_t i = 0; i < (b + 1) * K; ++i)
            for (std::size_t j = 0; j < 4; ++j) EXPECT_LE(std::abs(out.at(0, i, j) - base.at(0, i, j)), 1e-10);
    }
}

TEST(VideoBlock, GradientsMatchFiniteDifferences) {
    const auto p = random_params(config(BlockVariant::video_dip, 4), 23);
    Tape<double> tape;
    ParamScope<double> scope(tape);
    Rng rng(24);
    Var<double> x = tape.leaf(rng.uniform_tensor<double>({1, 4, 4}, -2, 2));
    Var<double> t = tape.leaf(rng.normal_tensor<double>({1, 4}));
    Var<double> c = tape.leaf(rng.normal_tensor<double>({1, 3, 4}));
    Var<double> loss = oracle::probe_loss(
        video_dip_block(scope, x, t, c, p, MaskSpec::padding(1, 3, {1, 0, 1}), MaskSpec::block_causal(2)));
    auto leaves = param_leaves(scope, p);
    leaves.emplace_back("x", x);
    leaves.emplace_back("t", t);
    leaves.emplace_back("c", c);
    const auto report = gradcheck(tape, loss, leaves);
    EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_name;
}

TEST(Blocks, WrongVariantAndShapesRejected) {
    const auto p = random_params(config(BlockVariant::image_dip), 25);
    const auto x = Tensor<double>::zeros({1, 2, 4});
    EXPECT_THROW(polymorpher_block(x, p), std::invalid_argument);
    EXPECT_THROW(image_dip_block(x, Tensor<double>::zeros({2, 4}), p), ShapeError);
    EXPECT_THROW(image_dip_block(Tensor<double>::zeros({1, 2, 5}), Tensor<double>::zeros({1, 4}), p), ShapeError);
}

TEST(PositionalEncoding, OriginAndDistinctness) {
    const auto pe = sinusoidal_pe<double>({{0.0}}, 8);
    for (std::size_t f = 0; f < 4; ++f) {
        EXPECT_EQ(pe[f], 0.0);
        EXPECT_EQ(pe[4 + f], 1.0);
    }
    std::vector<std::vector<double>> pos;
    for (int i = 0; i < 2000; ++i) pos.push_back({static_cast<double>(i)});
    const auto all = sinusoidal_pe<double>(pos, 16);
    for (std::size_t i = 0; i + 1 < pos.size(); ++i) {
        double gap = 0.0;
        for (std::size_t j = 0; j < 16; ++j) gap = std::max(gap, std::abs(all[i * 16 + j] - all[(i + 1) * 16 + j]));
        EXPECT_GT(gap, 1e-6) << i;
    }
    EXPECT_THROW(sinusoidal_pe<double>({{0.0, 1.0}}, 6), std::invalid_argument);
}

TEST(PositionalEncoding, GridIsConcatenationOfAxes) {
    const std::size_t h = 3, w = 5, d = 12;
    const auto grid = grid_pe_2d<double>(h, w, d);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const auto row = sinusoidal_pe<double>({{static_cast<double>(i)}}, d / 2);
            const auto col = sinusoidal_pe<double>({{static_cast<double>(j)}}, d / 2);
            for (std::size_t c = 0; c < d / 2; ++c) {
                EXPECT_EQ(grid.at(i * w + j, c), row[c]);
                EXPECT_EQ(grid.at(i * w + j, d / 2 + c), col[c]);
            }
        }
    }
    const auto g3 = grid_pe_3d<double>(2, 2, 2, 12);
    const auto frame = sinusoidal_pe<double>({{1.0}}, 4);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(g3.at(7, c), frame[c]);
}
