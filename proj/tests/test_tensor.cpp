#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pom/random.hpp"
#include "pom/tensor.hpp"

using namespace pom;

TEST(Tensor, ShapeAndDataMustAgree) {
    EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
    EXPECT_THROW(Tensor<double>({2, 0}), ShapeError);
    Tensor<float> t({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.dtype(), DType::f32);
    t.at(1, 2, 3) = 5.0f;
    EXPECT_EQ(t[23], 5.0f);
    EXPECT_THROW(t.at(2, 0, 0), ShapeError);
}

TEST(Tensor, MatmulSmallCases) {
    const Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    const Tensor<double> a({2, 2}, {1, 2, 3, 4});
    EXPECT_TRUE(bitwise_equal(matmul(eye, a), a));
    const Tensor<double> row({1, 2}, {1, 2});
    const Tensor<double> col({2, 1}, {3, 4});
    EXPECT_EQ(matmul(row, col).item(), 11.0);
}

TEST(Tensor, MatmulMatchesTripleLoop) {
    Rng rng(1);
    const auto a = rng.normal_tensor<double>({5, 7});
    const auto b = rng.normal_tensor<double>({7, 3});
    EXPECT_LE(max_abs_diff(matmul(a, b), oracle::matmul(a, b)), 1e-12);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
        const auto x = rng.normal_tensor<double>({m, k});
        const auto y = rng.normal_tensor<double>({k, n});
        EXPECT_LE(max_abs_diff(matmul(x, y), oracle::matmul(x, y)), 1e-12);
    }
}

TEST(Tensor, MatmulShapeErrorNamesBothShapes) {
    const Tensor<double> a({2, 3}), b({4, 2});
    try {
        (void)matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
    }
}

TEST(Tensor, Elementwise) {
    const auto z = Tensor<double>::zeros({1});
    EXPECT_EQ(sigmoid(z).item(), 0.5);
    EXPECT_EQ(gelu(z).item(), 0.0);
    const auto one = Tensor<double>::full({1}, 1.0);
    EXPECT_NEAR(gelu(one).item(), static_cast<double>(oracle::gelu(1.0L)), 1e-7);
    EXPECT_NEAR(gelu(one).item(), static_cast<double>(oracle::gelu(1.0L)), 1e-15);
    EXPECT_THROW(add(Tensor<double>({2}), Tensor<double>({3})), ShapeError);
}

TEST(Tensor, ReduceChunkConcat) {
    const Tensor<double> x({2}, {1, 3});
    EXPECT_EQ(reduce_mean(x, 0).item(), 2.0);
    const Tensor<double> v({4}, {1, 2, 3, 4});
    const auto parts = chunk(v, 2, 0);
    ASSERT_EQ(parts.size(), 2u);
    EXPECT_TRUE(bitwise_equal(parts[0], Tensor<double>({2}, {1, 2})));
    EXPECT_TRUE(bitwise_equal(parts[1], Tensor<double>({2}, {3, 4})));
    EXPECT_THROW(chunk(v, 3, 0), ShapeError);

    Rng rng(3);
    const auto r = rng.normal_tensor<double>({2, 5, 6});
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const std::size_t k = axis == 2 ? 3 : (axis == 1 ? 5 : 2);
        const auto pieces = chunk(r, k, axis);
        EXPECT_TRUE(bitwise_equal(concat<double>(pieces, axis), r)) << "axis " << axis;
    }
}

TEST(Tensor, LayerNormHasZeroMeanUnitVariance) {
    Rng rng(4);
    const auto x = rng.normal_tensor<double>({3, 16}, 2.0, 1.5);
    const auto y = layer_norm(x, 1e-6);
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0, var = 0;
        for (std::size_t c = 0; c < 16; ++c) mean += y[r * 16 + c];
        mean /= 16;
        for (std::size_t c = 0; c < 16; ++c) var += (y[r * 16 + c] - mean) * (y[r * 16 + c] - mean);
        var /= 16;
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(var, 1.0, 1e-5);
    }
}

TEST(Tensor, NonFiniteIsAnError) {
    Tensor<double> x({2});
    x[1] = std::nan("");
    EXPECT_FALSE(all_finite(x));
    EXPECT_THROW(require_finite(x, "test"), NumericError);
}
