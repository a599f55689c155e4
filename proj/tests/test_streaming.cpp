#include <gtest/gtest.h>

#include "pom/diagnostics.hpp"
#include "pom/streaming.hpp"

using namespace pom;

namespace {

PoMParams<double> params(std::size_t d, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    PoMConfig cfg{.dim = d, .degree = k, .expand = 2};
    auto p = init_pom<double>(cfg, rng, 0.4);
    p.b_poly = rng.normal_tensor<double>(p.b_poly.shape(), 0.1);
    p.b_sel = rng.normal_tensor<double>(p.b_sel.shape(), 0.1);
    p.b_out = rng.normal_tensor<double>(p.b_out.shape(), 0.1);
    return p;
}

const Tensor<double>* self() { return nullptr; }

}  // namespace

TEST(Streaming, InitAndSingleUpdate) {
    const auto p = params(3, 2, 1);
    auto s = state_init(p);
    EXPECT_EQ(s.count, 0u);
    for (double v : s.sum) EXPECT_EQ(v, 0.0);
    const std::vector<double> f{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    s = state_update(std::move(s), std::span<const double>(f));
    EXPECT_EQ(s.count, 1u);
    const auto h = state_value(s);
    for (std::size_t c = 0; c < f.size(); ++c) EXPECT_DOUBLE_EQ(h[c], f[c] / (1 + 1e-7));
    EXPECT_THROW(state_update(s, std::span<const double>(f.data(), 5)), ShapeError);
}

TEST(Streaming, EmptyQueryWarns) {
    const auto p = params(3, 2, 1);
    diag::reset_warnings();
    const auto y = state_query(Tensor<double>({1, 3}, {1, 2, 3}), p, state_init(p));
    EXPECT_TRUE(all_finite(y));
    EXPECT_EQ(diag::empty_row_warnings(), 1u);
}

TEST(Streaming, TokenStreamEqualsCausalForward) {
    for (std::size_t n : {1, 8, 13, 33}) {
        const auto p = params(5, 3, n);
        Rng rng(n + 100);
        const auto x = rng.normal_tensor<double>({2, n, 5});
        EXPECT_LE(max_abs_diff(stream_tokens(x, p), pom_forward(x, self(), p, MaskSpec::causal())), 1e-10);
    }
}

TEST(Streaming, BlockStreamEqualsBlockCausalForward) {
    for (std::size_t k : {1, 2, 4, 7}) {
        for (std::size_t n : {8, 12, 15, 29}) {
            const auto p = params(4, 2, 7 * k + n);
            Rng rng(k * 1000 + n);
            const auto x = rng.normal_tensor<double>({1, n, 4});
            EXPECT_LE(max_abs_diff(stream_blocks(x, p, k), pom_forward(x, self(), p, MaskSpec::block_causal(k))),
                      1e-10)
                << "K=" << k << " n=" << n;
        }
    }
    const auto p = params(4, 3, 9);
    Rng rng(3);
    const auto x = rng.normal_tensor<double>({1, 12, 4});
    EXPECT_LE(max_abs_diff(stream_blocks(x, p, 3), pom_forward(x, self(), p, MaskSpec::block_causal(3))), 1e-10);
}

TEST(Streaming, UnnormalizedStateIsRawSum) {
    auto p = params(3, 2, 5);
    p.config.normalize = false;
    Rng rng(5);
    const auto x = rng.normal_tensor<double>({1, 6, 3});
    EXPECT_LE(max_abs_diff(stream_tokens(x, p), pom_forward(x, self(), p, MaskSpec::causal())), 1e-10);
}
