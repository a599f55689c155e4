#pragma once

#include <cstddef>
#include <vector>

#include "pom/tensor.hpp"

// Sample-quality metric for the toy experiments. The energy distance between
// point sets A and B is reported as
//   sqrt(max(0, 2 E|a - b| - E|a - a'| - E|b - b'|)),
// with the within-set expectations over distinct pairs. The square root keeps
// the value in the units of the data (two point masses at distance r give r).
namespace pom {

inline constexpr std::size_t kMinEvalSamples = 256;

/// Unbiased estimate of 2 E|a - b| - E|a - a'| - E|b - b'|. It can dip below
/// zero when the two distributions agree to within sampling noise.
double energy_statistic(const Tensor<double>& a, const Tensor<double>& b, std::size_t min_samples = kMinEvalSamples);

/// a [n x D], b [m x D]. Throws if either side has fewer than `min_samples` rows.
double energy_distance(const Tensor<double>& a, const Tensor<double>& b, std::size_t min_samples = kMinEvalSamples);

struct SampleEvaluation {
    double energy_distance = 0.0;
    double energy_statistic = 0.0;
    /// Per class (empty for unconditional evaluation); NaN where a class has
    /// fewer than two points on either side.
    std::vector<double> class_energy_distance;
    /// Per class: L2 distance between the class means of samples and reference.
    std::vector<double> class_mean_error;
};

SampleEvaluation evaluate_samples(const Tensor<double>& samples, const Tensor<double>& reference);

/// Class-conditional evaluation: labels in [0, classes).
SampleEvaluation evaluate_samples(const Tensor<double>& samples, const std::vector<int>& sample_labels,
                                  const Tensor<double>& reference, const std::vector<int>& reference_labels,
                                  std::size_t classes);

}  // namespace pom
