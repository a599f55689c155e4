#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "pom/diagnostics.hpp"
#include "pom/distinctness.hpp"
#include "pom/gradcheck.hpp"
#include "pom/mixer.hpp"

using namespace pom;

namespace {

PoMParams<double> random_params(std::size_t d, std::size_t k, std::size_t e, std::uint64_t seed, double std = 0.5,
                                bool bias = true) {
    Rng rng(seed);
    PoMConfig cfg;
    cfg.dim = d;
    cfg.degree = k;
    cfg.expand = e;
    cfg.bias = bias;
    auto p = init_pom<double>(cfg, rng, std);
    if (bias) {
        p.b_poly = rng.normal_tensor<double>(p.b_poly.shape(), 0.1);
        p.b_sel = rng.normal_tensor<double>(p.b_sel.shape(), 0.1);
        p.b_out = rng.normal_tensor<double>(p.b_out.shape(), 0.1);
    }
    return p;
}

Tensor<double> permute_tokens(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
    const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2);
    Tensor<double> y(x.shape());
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(x.raw() + (b * n + perm[i]) * d, d, y.raw() + (b * n + i) * d);
        }
    }
    return y;
}

const Tensor<double>* none() { return nullptr; }

}  // namespace

TEST(PolynomialExpand, ZeroWeightsGiveZeroFeatures) {
    PoMConfig cfg{.dim = 3, .degree = 3, .expand = 2};
    Rng rng(0);
    auto p = init_pom<double>(cfg, rng);
    p.w_poly = Tensor<double>::zeros(p.w_poly.shape());
    const auto f = polynomial_expand(rng.normal_tensor<double>({2, 4, 3}), p);
    EXPECT_EQ(f.shape(), (Shape{2, 4, 18}));
    for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(PolynomialExpand, HandComputedDegreeTwo) {
    PoMConfig cfg{.dim = 1, .degree = 2, .expand = 1, .bias = false, .activation = Activation::identity};
    Rng rng(0);
    auto p = init_pom<double>(cfg, rng);
    p.w_poly = Tensor<double>({2, 1}, {1, 1});
    const auto f = polynomial_expand(Tensor<double>({1, 1, 1}, {2}), p);
    EXPECT_EQ(f[0], 2.0);
    EXPECT_EQ(f[1], 4.0);
}

TEST(PolynomialExpand, SpecializedPathsMatchGeneralBitwise) {
    Rng rng(11);
    for (std::size_t k : {2, 3, 4}) {
        for (Activation a : {Activation::gelu, Activation::identity}) {
            const auto x = rng.normal_tensor<double>({3, 7, 6 * k});
            const auto general = expand_features(x, k, a, ExpandPath::general);
            const auto special = expand_features(x, k, a, ExpandPath::specialized);
            EXPECT_TRUE(bitwise_equal(general, special)) << "k=" << k;
            const auto xf = x.cast<float>();
            EXPECT_TRUE(bitwise_equal(expand_features(xf, k, a, ExpandPath::general),
                                      expand_features(xf, k, a, ExpandPath::specialized)));
        }
    }
    EXPECT_THROW(expand_features(rng.normal_tensor<double>({1, 2, 10}), 5, Activation::gelu, ExpandPath::specialized),
                 std::invalid_argument);
}

TEST(PolynomialExpand, RejectsDimMismatch) {
    const auto p = random_params(4, 2, 2, 1);
    EXPECT_THROW(polynomial_expand(Tensor<double>({1, 3, 5}), p), ShapeError);
}

TEST(Mix, MeanAndSum) {
    const Tensor<double> f({1, 2, 1}, {1, 3});
    EXPECT_EQ(mix(f, MaskSpec::none(), true).item(), 2.0);
    EXPECT_EQ(mix(f, MaskSpec::none(), false).item(), 4.0);
}

TEST(Mix, BlockCausalPattern) {
    const auto m = MaskSpec::block_causal(2);
    const std::vector<std::vector<int>> expected = {{1, 1, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 1}, {1, 1, 1, 1}};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.visible(0, i, j, 4), expected[i][j] == 1) << i << "," << j;
    }
    // One-hot features expose the normalized mask rows directly.
    Tensor<double> f({1, 4, 4});
    for (std::size_t j = 0; j < 4; ++j) f.at(0, j, j) = 1.0;
    const auto h = mix(f, m, true);
    for (std::size_t i = 0; i < 4; ++i) {
        const double cnt = i < 2 ? 2.0 : 4.0;
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_DOUBLE_EQ(h.at(0, i, j), expected[i][j] / (1e-7 + cnt));
        }
    }
}

TEST(Mix, AllZeroRowWarnsInsteadOfNaN) {
    diag::reset_warnings();
    const Tensor<double> f({2, 3, 2}, std::vector<double>(12, 1.0));
    const auto pad = MaskSpec::padding(2, 3, {1, 0, 1, 0, 0, 0});
    const auto h = mix(f, pad);
    EXPECT_TRUE(all_finite(h));
    EXPECT_EQ(h.at(1, 0, 0), 0.0);
    EXPECT_EQ(h.at(0, 0, 0), 1.0);
    EXPECT_EQ(diag::empty_row_warnings(), 1u);

    diag::reset_warnings();
    const auto full = MaskSpec::full(1, 2, 3, {1, 1, 0, 0, 0, 0});
    const auto hf = mix(Tensor<double>({1, 3, 2}, std::vector<double>(6, 1.0)), full);
    EXPECT_TRUE(all_finite(hf));
    EXPECT_EQ(hf.at(0, 1, 0), 0.0);
    EXPECT_EQ(diag::empty_row_warnings(), 1u);
}

TEST(Mix, CausalEqualsBlockCausalOneAndFullPattern) {
    Rng rng(5);
    const auto f = rng.normal_tensor<double>({2, 9, 5});
    const auto causal = mix(f, MaskSpec::causal());
    EXPECT_TRUE(bitwise_equal(causal, mix(f, MaskSpec::block_causal(1))));
    std::vector<int> bits;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 9; ++j) bits.push_back(j <= i ? 1 : 0);
    EXPECT_LE(max_abs_diff(causal, mix(f, MaskSpec::full(2, 9, 9, bits))), 1e-12);
}

TEST(Select, HandCases) {
    auto p = random_params(3, 2, 1, 2);
    p.w_sel = Tensor<double>::zeros(p.w_sel.shape());
    p.b_sel = Tensor<double>::zeros(p.b_sel.shape());
    Rng rng(9);
    const auto xq = rng.normal_tensor<double>({1, 2, 3});
    const auto state = rng.normal_tensor<double>({1, 1, 6});
    const auto expected = linear(scale(state, 0.5), p.w_out, &p.b_out);
    const auto out = select(xq, p, state);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out.at(0, i, c), expected.at(0, 0, c));

    const auto zero_out = select(xq, p, Tensor<double>::zeros({1, 1, 6}));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(zero_out.at(0, i, c), p.b_out[c]);

    EXPECT_THROW(select(xq, p, Tensor<double>::zeros({1, 3, 6})), ShapeError);
}

TEST(Select, MatchesScalarLoops) {
    const auto p = random_params(5, 3, 2, 3);
    Rng rng(10);
    const auto xq = rng.normal_tensor<double>({2, 4, 5});
    for (std::size_t rows : {1, 4}) {
        const auto state = rng.normal_tensor<double>({2, rows, 30});
        EXPECT_LE(max_abs_diff(select(xq, p, state), oracle::select(xq, p, state)), 1e-12);
    }
}

TEST(PoMForward, MatchesScalarOracleForEveryMaskKind) {
    const auto p = random_params(4, 3, 2, 4);
    Rng rng(12);
    const auto x = rng.normal_tensor<double>({2, 7, 4});
    const auto xc = rng.normal_tensor<double>({2, 5, 4});
    EXPECT_LE(max_abs_diff(pom_forward(x, none(), p), oracle::pom(x, x, p, MaskSpec::none())), 1e-12);
    for (const auto& m : {MaskSpec::causal(), MaskSpec::block_causal(3)}) {
        EXPECT_LE(max_abs_diff(pom_forward(x, none(), p, m), oracle::pom(x, x, p, m)), 1e-12) << m.describe();
    }
    const auto pad = MaskSpec::padding(2, 5, {1, 1, 0, 1, 0, 0, 1, 1, 1, 1});
    EXPECT_LE(max_abs_diff(pom_forward(x, &xc, p, pad), oracle::pom(x, xc, p, pad)), 1e-12);
    std::vector<int> bits(2 * 7 * 5);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = rng.uniform() < 0.6 ? 1 : 0;
    const auto full = MaskSpec::full(2, 7, 5, bits);
    EXPECT_LE(max_abs_diff(pom_forward(x, &xc, p, full), oracle::pom(x, xc, p, full)), 1e-12);
}

TEST(PoMForward, SingleTokenSelfMixing) {
    const auto p = random_params(3, 2, 2, 6);
    Rng rng(1);
    const auto x = rng.normal_tensor<double>({1, 1, 3});
    EXPECT_TRUE(bitwise_equal(pom_forward(x, none(), p), select(x, p, polynomial_expand(x, p))));
}

TEST(PoMForward, PermutationEquivariance) {
    Rng rng(21);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t d = 1 + rng.below(32), n = 1 + rng.below(64), k = 1 + rng.below(4);
        const auto p = random_params(d, k, 1 + rng.below(2), rng.next());
        const auto x = rng.normal_tensor<double>({2, n, d});
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        const auto lhs = pom_forward(permute_tokens(x, perm), none(), p);
        const auto rhs = permute_tokens(pom_forward(x, none(), p), perm);
        EXPECT_LE(max_abs_diff(lhs, rhs), 1e-9);
    }
}

TEST(PoMForward, PaddingEqualsDeletion) {
    const auto p = random_params(6, 2, 2, 8);
    Rng rng(13);
    const auto xq = rng.normal_tensor<double>({1, 4, 6});
    const auto xc = rng.normal_tensor<double>({1, 5, 6});
    for (std::size_t del = 0; del < 5; ++del) {
        std::vector<int> valid(5, 1);
        valid[del] = 0;
        std::vector<double> kept;
        for (std::size_t j = 0; j < 5; ++j)
            if (j != del) kept.insert(kept.end(), xc.raw() + j * 6, xc.raw() + (j + 1) * 6);
        const Tensor<double> shorter({1, 4, 6}, kept);
        EXPECT_LE(max_abs_diff(pom_forward(xq, &xc, p, MaskSpec::padding(1, 5, valid)), pom_forward(xq, &shorter, p)),
                  1e-9);
    }
}

TEST(PoMForward, GradientsMatchFiniteDifferences) {
    for (const auto& mask : {MaskSpec::none(), MaskSpec::causal(), MaskSpec::block_causal(2)}) {
        const auto p = random_params(4, 3, 2, 17);
        Tape<double> tape;
        ParamScope<double> scope(tape);
        Rng rng(3);
        Var<double> x = tape.leaf(rng.uniform_tensor<double>({2, 5, 4}, -2, 2));
        Var<double> loss = oracle::probe_loss(pom_forward<double>(scope, x, std::nullopt, p, mask));
        std::vector<std::pair<std::string, Var<double>>> leaves{{"x", x}};
        p.visit([&](const char* name, const Tensor<double>& t) { leaves.emplace_back(name, scope.var(t)); });
        const auto report = gradcheck(tape, loss, leaves);
        EXPECT_LE(report.max_rel_error, 1e-4) << mask.describe() << " worst " << report.worst_name;
    }
}

TEST(PoMForward, TapeAndPureForwardAgree) {
    const auto p = random_params(5, 4, 1, 23);
    Rng rng(4);
    const auto xq = rng.normal_tensor<double>({2, 6, 5});
    const auto xc = rng.normal_tensor<double>({2, 3, 5});
    Tape<double> tape;
    ParamScope<double> scope(tape, false);
    Var<double> out = pom_forward(scope, tape.constant(xq), std::optional<Var<double>>(tape.constant(xc)), p);
    EXPECT_TRUE(bitwise_equal(out.value(), pom_forward(xq, &xc, p)));
}

TEST(PoMForward, SignFlipBreaksEquivariance) {
    const auto p = random_params(4, 2, 2, 1);
    Rng rng(2);
    const auto x = rng.normal_tensor<double>({1, 5, 4});
    const std::vector<std::size_t> perm{4, 3, 2, 1, 0};
    diag::inject_fault(diag::Fault::select_sign_flip);
    const double dev = max_abs_diff(pom_forward(permute_tokens(x, perm), none(), p),
                                    permute_tokens(pom_forward(x, none(), p), perm));
    diag::inject_fault(diag::Fault::none);
    EXPECT_GT(dev, 1e-6);
}

TEST(PoMParams, CountsAndValidation) {
    const auto p = random_params(4, 3, 2, 1);
    EXPECT_EQ(p.parameter_count(), 24u * 4 + 24 + 24 * 4 + 24 + 4 * 24 + 4);
    auto broken = p;
    broken.w_sel = Tensor<double>({3, 4});
    EXPECT_THROW(broken.validate(), ShapeError);
    EXPECT_THROW((PoMConfig{.dim = 4, .degree = 0}.validate()), std::invalid_argument);
}

TEST(Distinctness, TrivialCases) {
    const auto p = random_params(4, 3, 2, 31, 0.5);
    Rng rng(8);
    const auto x = rng.normal_tensor<double>({4, 6});
    EXPECT_FALSE(contextual_distinctness_check(p, x, x, 1e-8));
    auto dup = x;
    for (std::size_t r = 0; r < 4; ++r) dup[r * 6 + 1] = dup[r * 6 + 0];
    auto other = rng.normal_tensor<double>({4, 6});
    const auto res = distinctness_details(p, dup, other, 1e-8);
    EXPECT_FALSE(res.within_distinct);
}

TEST(Distinctness, MostRandomTrialsPass) {
    const auto summary = run_distinctness_trials(200, 4, 6, 3, 1234);
    EXPECT_GE(summary.fraction(), 0.99);
}
