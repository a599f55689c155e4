#include "pom/distinctness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pom {

namespace {

// d x n columns -> [1 x n x d] token rows.
template <typename T>
Tensor<T> columns_to_tokens(const Tensor<T>& x) {
    return transpose(x).reshaped({1, x.dim(1), x.dim(0)});
}

template <typename T>
double row_gap(const Tensor<T>& a, std::size_t i, const Tensor<T>& b, std::size_t j, std::size_t d) {
    double gap = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        gap = std::max(gap, std::abs(static_cast<double>(a[i * d + c]) - static_cast<double>(b[j * d + c])));
    }
    return gap;
}

}  // namespace

template <typename T>
DistinctnessResult distinctness_details(const PoMParams<T>& params, const Tensor<T>& x, const Tensor<T>& x_prime,
                                        double tol) {
    const std::size_t d = params.config.dim;
    if (x.rank() != 2 || x.dim(0) != d || x_prime.rank() != 2 || x_prime.dim(0) != d) {
        throw ShapeError("distinctness: expected d x n inputs with d = " + std::to_string(d) + ", got " +
                         to_string(x.shape()) + " and " + to_string(x_prime.shape()));
    }
    const Tensor<T> y = pom_forward(columns_to_tokens(x), static_cast<const Tensor<T>*>(nullptr), params);
    const Tensor<T> yp = pom_forward(columns_to_tokens(x_prime), static_cast<const Tensor<T>*>(nullptr), params);
    const std::size_t n = x.dim(1), np = x_prime.dim(1);

    DistinctnessResult r;
    r.min_within_gap = std::numeric_limits<double>::infinity();
    r.min_across_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) r.min_within_gap = std::min(r.min_within_gap, row_gap(y, i, y, j, d));
        for (std::size_t j = 0; j < np; ++j) r.min_across_gap = std::min(r.min_across_gap, row_gap(y, i, yp, j, d));
    }
    r.within_distinct = r.min_within_gap > tol;
    r.across_distinct = r.min_across_gap > tol;
    return r;
}

DistinctnessTrials run_distinctness_trials(std::size_t trials, std::size_t d, std::size_t n, std::size_t degree,
                                           std::uint64_t seed, double tol) {
    Rng rng(seed);
    PoMConfig config;
    config.dim = d;
    config.degree = degree;
    const double std = 1.0 / std::sqrt(static_cast<double>(d));
    DistinctnessTrials out;
    for (std::size_t t = 0; t < trials; ++t) {
        const PoMParams<double> params = init_pom<double>(config, rng, std);
        const Tensor<double> x = rng.normal_tensor<double>({d, n}, 1.0);
        Tensor<double> xp = x;
        const std::size_t col = rng.below(n);
        for (std::size_t r = 0; r < d; ++r) xp[r * n + col] = rng.normal();
        ++out.trials;
        if (contextual_distinctness_check(params, x, xp, tol)) ++out.passed;
    }
    return out;
}

template DistinctnessResult distinctness_details(const PoMParams<float>&, const Tensor<float>&, const Tensor<float>&,
                                                 double);
template DistinctnessResult distinctness_details(const PoMParams<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, double);

}  // namespace pom
