#pragma once

#include <cstddef>
#include <cstdint>

#include "pom/mixer.hpp"

// Empirical check that the mixer is a contextual mapping: outputs of one
// sequence are pairwise distinct, and no output of X coincides with any
// output of a different sequence X'. Columns compare by max-abs difference.
namespace pom {

struct DistinctnessResult {
    bool within_distinct = false;  // columns of PoM(X) pairwise distinct
    bool across_distinct = false;  // no column of PoM(X) equals a column of PoM(X')
    double min_within_gap = 0.0;
    double min_across_gap = 0.0;

    bool passed() const { return within_distinct && across_distinct; }
};

/// X and X' are d x n, one token per column.
template <typename T>
DistinctnessResult distinctness_details(const PoMParams<T>& params, const Tensor<T>& x, const Tensor<T>& x_prime,
                                        double tol);

template <typename T>
bool contextual_distinctness_check(const PoMParams<T>& params, const Tensor<T>& x, const Tensor<T>& x_prime,
                                   double tol) {
    return distinctness_details(params, x, x_prime, tol).passed();
}

struct DistinctnessTrials {
    std::size_t trials = 0;
    std::size_t passed = 0;
    double fraction() const { return trials == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(trials); }
};

/// Each trial draws fresh weights (std 1/sqrt(d)), a Gaussian X, and X' equal
/// to X with one random column redrawn.
DistinctnessTrials run_distinctness_trials(std::size_t trials, std::size_t d, std::size_t n, std::size_t degree,
                                           std::uint64_t seed, double tol = 1e-8);

}  // namespace pom
