#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pom/attention.hpp"
#include "pom/diagnostics.hpp"
#include "pom/gradcheck.hpp"

using namespace pom;

namespace {

MHAParams<double> params(std::size_t d, std::size_t heads, std::uint64_t seed, double std = 0.4) {
    Rng rng(seed);
    return init_mha<double>(d, heads, rng, std);
}

const Tensor<double>* self() { return nullptr; }

}  // namespace

TEST(Attention, SingleTokenIsProjectedValue) {
    const auto p = params(4, 2, 1);
    Rng rng(2);
    const auto x = rng.normal_tensor<double>({1, 1, 4});
    const auto expected = linear(linear(x, p.w_v), p.w_o);
    EXPECT_LE(max_abs_diff(mha_forward(x, self(), p), expected), 1e-14);
}

TEST(Attention, UniformKeysGiveUniformWeights) {
    Rng rng(3);
    const auto q = rng.normal_tensor<double>({1, 3, 4});
    const Tensor<double> k = Tensor<double>::full({1, 5, 4}, 0.7);
    const auto w = attention_weights(q, k, 2, 0, 1);
    for (double v : w.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Attention, RowsAreStochastic) {
    Rng rng(4);
    const auto q = rng.normal_tensor<double>({2, 6, 8}, 2.0);
    const auto k = rng.normal_tensor<double>({2, 9, 8}, 2.0);
    for (const auto& mask : {MaskSpec::none(), MaskSpec::padding(2, 9, std::vector<int>(18, 1))}) {
        const auto w = attention_weights(q, k, 4, 1, 3, mask);
        for (std::size_t i = 0; i < 6; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 9; ++j) s += w.at(i, j);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Attention, MatchesPerHeadOracle) {
    const auto p = params(6, 2, 5);
    Rng rng(6);
    const auto xq = rng.normal_tensor<double>({2, 5, 6});
    const auto xc = rng.normal_tensor<double>({2, 7, 6});
    EXPECT_LE(max_abs_diff(mha_forward(xq, &xc, p), oracle::mha(xq, xc, p, MaskSpec::none())), 1e-12);
    EXPECT_LE(max_abs_diff(mha_forward(xq, self(), p, MaskSpec::causal()), oracle::mha(xq, xq, p, MaskSpec::causal())),
              1e-12);
    const auto pad = MaskSpec::padding(2, 7, {1, 0, 1, 1, 0, 1, 1, 0, 0, 1, 1, 1, 1, 1});
    EXPECT_LE(max_abs_diff(mha_forward(xq, &xc, p, pad), oracle::mha(xq, xc, p, pad)), 1e-12);
}

TEST(Attention, LongSequencesCrossChunkBoundaries) {
    const auto p = params(8, 2, 7, 0.3);
    Rng rng(7);
    const auto x = rng.normal_tensor<double>({1, 300, 8});
    EXPECT_LE(max_abs_diff(mha_forward(x, self(), p, MaskSpec::block_causal(16)),
                           oracle::mha(x, x, p, MaskSpec::block_causal(16))),
              1e-12);
}

TEST(Attention, CausalOutputIgnoresFutureTokens) {
    const auto p = params(4, 2, 8);
    Rng rng(8);
    const auto x = rng.normal_tensor<double>({1, 10, 4});
    const auto base = mha_forward(x, self(), p, MaskSpec::causal());
    for (std::size_t i = 0; i < 9; ++i) {
        auto xp = x;
        for (std::size_t j = i + 1; j < 10; ++j)
            for (std::size_t c = 0; c < 4; ++c) xp.at(0, j, c) += 5.0 * rng.normal();
        const auto out = mha_forward(xp, self(), p, MaskSpec::causal());
        for (std::size_t r = 0; r <= i; ++r)
            for (std::size_t c = 0; c < 4; ++c) EXPECT_LE(std::abs(out.at(0, r, c) - base.at(0, r, c)), 1e-12);
    }
}

TEST(Attention, FullyMaskedRowIsZero) {
    diag::reset_warnings();
    const auto p = params(4, 1, 9);
    Rng rng(9);
    const auto xq = rng.normal_tensor<double>({1, 2, 4});
    const auto xc = rng.normal_tensor<double>({1, 3, 4});
    const auto out = mha_forward(xq, &xc, p, MaskSpec::full(1, 2, 3, {0, 0, 0, 1, 0, 1}));
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.at(0, 0, c), 0.0);
    EXPECT_EQ(diag::empty_row_warnings(), 1u);
}

TEST(Attention, IndivisibleHeadsRejected) {
    Rng rng(1);
    EXPECT_THROW(init_mha<double>(6, 4, rng), std::invalid_argument);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
    for (const auto& mask : {MaskSpec::none(), MaskSpec::causal()}) {
        const auto p = params(4, 2, 10);
        Tape<double> tape;
        ParamScope<double> scope(tape);
        Rng rng(11);
        Var<double> x = tape.leaf(rng.uniform_tensor<double>({2, 5, 4}, -2, 2));
        Var<double> loss = oracle::probe_loss(mha_forward<double>(scope, x, std::nullopt, p, mask));
        std::vector<std::pair<std::string, Var<double>>> leaves{{"x", x}};
        for (const auto* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) leaves.emplace_back("w", scope.var(*w));
        const auto report = gradcheck(tape, loss, leaves);
        EXPECT_LE(report.max_rel_error, 1e-4) << mask.describe();
    }
}
