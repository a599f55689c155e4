#include "pom/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pom {

namespace {

double dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
}

double mean_cross(const Tensor<double>& a, const Tensor<double>& b) {
    const std::size_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) s += dist(a.raw() + i * d, b.raw() + j * d, d);
    return s / static_cast<double>(n * m);
}

double mean_within(const Tensor<double>& a) {
    const std::size_t n = a.dim(0), d = a.dim(1);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) s += dist(a.raw() + i * d, a.raw() + j * d, d);
    return 2.0 * s / static_cast<double>(n * (n - 1));
}

Tensor<double> rows_with_label(const Tensor<double>& x, const std::vector<int>& labels, int c) {
    const std::size_t d = x.dim(1);
    std::vector<double> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == c) out.insert(out.end(), x.raw() + i * d, x.raw() + (i + 1) * d);
    const std::size_t rows = out.size() / d;
    if (rows == 0) return Tensor<double>();
    return Tensor<double>({rows, d}, std::move(out));
}

double mean_error(const Tensor<double>& a, const Tensor<double>& b) {
    const std::size_t d = a.dim(1);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double ma = 0.0, mb = 0.0;
        for (std::size_t i = 0; i < a.dim(0); ++i) ma += a[i * d + j];
        for (std::size_t i = 0; i < b.dim(0); ++i) mb += b[i * d + j];
        ma /= static_cast<double>(a.dim(0));
        mb /= static_cast<double>(b.dim(0));
        s += (ma - mb) * (ma - mb);
    }
    return std::sqrt(s);
}

}  // namespace

double energy_statistic(const Tensor<double>& a, const Tensor<double>& b, std::size_t min_samples) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw ShapeError("energy distance: incompatible sets " + to_string(a.shape()) + " and " + to_string(b.shape()));
    }
    min_samples = std::max<std::size_t>(min_samples, 2);
    if (a.dim(0) < min_samples || b.dim(0) < min_samples) {
        throw std::invalid_argument("energy distance: need at least " + std::to_string(min_samples) +
                                    " samples per set, got " + std::to_string(a.dim(0)) + " and " +
                                    std::to_string(b.dim(0)));
    }
    return 2.0 * mean_cross(a, b) - mean_within(a) - mean_within(b);
}

double energy_distance(const Tensor<double>& a, const Tensor<double>& b, std::size_t min_samples) {
    return std::sqrt(std::max(0.0, energy_statistic(a, b, min_samples)));
}

SampleEvaluation evaluate_samples(const Tensor<double>& samples, const Tensor<double>& reference) {
    SampleEvaluation ev;
    ev.energy_statistic = energy_statistic(samples, reference);
    ev.energy_distance = std::sqrt(std::max(0.0, ev.energy_statistic));
    return ev;
}

SampleEvaluation evaluate_samples(const Tensor<double>& samples, const std::vector<int>& sample_labels,
                                  const Tensor<double>& reference, const std::vector<int>& reference_labels,
                                  std::size_t classes) {
    if (sample_labels.size() != samples.dim(0) || reference_labels.size() != reference.dim(0)) {
        throw std::invalid_argument("evaluate_samples: one label per row is required");
    }
    SampleEvaluation ev = evaluate_samples(samples, reference);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t c = 0; c < classes; ++c) {
        const auto a = rows_with_label(samples, sample_labels, static_cast<int>(c));
        const auto b = rows_with_label(reference, reference_labels, static_cast<int>(c));
        const bool enough = a.rank() == 2 && b.rank() == 2 && a.dim(0) >= 2 && b.dim(0) >= 2;
        ev.class_energy_distance.push_back(enough ? energy_distance(a, b, 2) : nan);
        ev.class_mean_error.push_back(enough ? mean_error(a, b) : nan);
    }
    return ev;
}

}  // namespace pom
