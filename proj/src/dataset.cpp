#include "pom/dataset.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pom {

const char* to_string(DatasetKind k) { return k == DatasetKind::mixture2d ? "mixture2d" : "patterns"; }

DatasetKind parse_dataset_kind(const std::string& s) {
    if (s == "mixture2d") return DatasetKind::mixture2d;
    if (s == "patterns") return DatasetKind::patterns;
    throw std::invalid_argument("unknown dataset '" + s + "' (expected mixture2d or patterns)");
}

void DatasetSpec::validate() const {
    if (kind == DatasetKind::mixture2d) {
        if (classes < 1) throw std::invalid_argument("mixture2d needs at least one component");
        if (!(mixture_std > 0.0)) throw std::invalid_argument("mixture2d: std must be positive");
    } else if (classes < 4 || classes > 6) {
        throw std::invalid_argument("patterns: 4 to 6 classes supported");
    }
}

std::vector<double> mixture_mean(const DatasetSpec& spec, int label) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(spec.classes);
    return {spec.mixture_radius * std::cos(angle), spec.mixture_radius * std::sin(angle)};
}

namespace {

// One 8x8 pattern of class `c` with random phase, amplitude and pixel noise.
void draw_pattern(const DatasetSpec& spec, int c, Rng& rng, double* out) {
    const double amp = 0.7 + 0.3 * rng.uniform();
    const int phase = static_cast<int>(rng.below(2));
    const int ci = static_cast<int>(rng.below(4)) + 2, cj = static_cast<int>(rng.below(4)) + 2;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            double v = 0.0;
            switch (c) {
                case 0: v = ((i + phase) % 2 == 0) ? 1.0 : -1.0; break;        // horizontal stripes
                case 1: v = ((j + phase) % 2 == 0) ? 1.0 : -1.0; break;        // vertical stripes
                case 2: v = ((i + j + phase) % 2 == 0) ? 1.0 : -1.0; break;    // checkerboard
                case 3: v = (std::abs(i - j) <= 1) ? 1.0 : -1.0; break;        // diagonal band
                case 4: v = (std::abs(i - ci) + std::abs(j - cj) <= 2) ? 1.0 : -1.0; break;  // blob
                default: v = (i == ci || j == cj) ? 1.0 : -1.0; break;         // cross
            }
            out[i * 8 + j] = amp * v + spec.pattern_noise * rng.normal();
        }
    }
}

void draw(const DatasetSpec& spec, int label, Rng& rng, double* out) {
    if (spec.kind == DatasetKind::mixture2d) {
        const auto mu = mixture_mean(spec, label);
        out[0] = mu[0] + spec.mixture_std * rng.normal();
        out[1] = mu[1] + spec.mixture_std * rng.normal();
    } else {
        draw_pattern(spec, label, rng, out);
    }
}

}  // namespace

Batch sample_dataset(const DatasetSpec& spec, std::size_t batch, Rng& rng) {
    spec.validate();
    Batch b{Tensor<double>({batch, spec.dim()}), std::vector<int>(batch)};
    for (std::size_t i = 0; i < batch; ++i) {
        b.labels[i] = static_cast<int>(rng.below(spec.classes));
        draw(spec, b.labels[i], rng, b.x.raw() + i * spec.dim());
    }
    return b;
}

Batch sample_class(const DatasetSpec& spec, int label, std::size_t batch, Rng& rng) {
    spec.validate();
    if (label < 0 || static_cast<std::size_t>(label) >= spec.classes) {
        throw std::out_of_range("sample_class: label " + std::to_string(label) + " out of range");
    }
    Batch b{Tensor<double>({batch, spec.dim()}), std::vector<int>(batch, label)};
    for (std::size_t i = 0; i < batch; ++i) draw(spec, label, rng, b.x.raw() + i * spec.dim());
    return b;
}

}  // namespace pom
