#pragma once

#include <cstdint>
#include <random>

#include "pom/tensor.hpp"

namespace pom {

/// Seeded random source. Same seed, same sequence on a given standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
    std::uint64_t next() { return engine_(); }

    template <typename T>
    Tensor<T> normal_tensor(Shape shape, double stddev = 1.0, double mean = 0.0) {
        Tensor<T> t(std::move(shape));
        for (T& v : t.data()) v = static_cast<T>(mean + stddev * normal());
        return t;
    }

    template <typename T>
    Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
        Tensor<T> t(std::move(shape));
        for (T& v : t.data()) v = static_cast<T>(uniform(lo, hi));
        return t;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace pom
