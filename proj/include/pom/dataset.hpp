#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pom/random.hpp"
#include "pom/tensor.hpp"

// Synthetic class-conditional datasets for the toy diffusion experiments.
// Samples are flat vectors laid out as a single-channel h x w image, so the
// same patchifying denoiser handles both: the 2D mixture is a 1 x 2 image.
namespace pom {

enum class DatasetKind : std::uint8_t { mixture2d, patterns };

const char* to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& s);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::mixture2d;
    std::size_t classes = 4;      // mixture components or pattern classes
    double mixture_radius = 2.0;  // component means on a circle
    double mixture_std = 0.25;
    double pattern_noise = 0.05;

    std::size_t height() const { return kind == DatasetKind::mixture2d ? 1 : 8; }
    std::size_t width() const { return kind == DatasetKind::mixture2d ? 2 : 8; }
    std::size_t dim() const { return height() * width(); }
    void validate() const;
};

struct Batch {
    Tensor<double> x;         // [B x dim]
    std::vector<int> labels;  // class per sample
};

/// Draws a batch; classes are uniform. Deterministic given the rng state.
Batch sample_dataset(const DatasetSpec& spec, std::size_t batch, Rng& rng);

/// Draws a batch whose samples all belong to `label`.
Batch sample_class(const DatasetSpec& spec, int label, std::size_t batch, Rng& rng);

/// Mean of the mixture component for `label` (mixture2d only).
std::vector<double> mixture_mean(const DatasetSpec& spec, int label);

}  // namespace pom
