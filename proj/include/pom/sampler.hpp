#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pom/flow.hpp"
#include "pom/tensor.hpp"

// Samplers integrate from noise at t = 1 to data at t = 0. Euler and Heun
// follow a velocity field (flow-matching models); DDIM is the deterministic
// update for noise-predicting models on the same linear path, started at
// t_max < 1 where (1 - t) is still invertible.
namespace pom {

enum class SamplerKind : std::uint8_t { euler, heun, ddim };

const char* to_string(SamplerKind k);
SamplerKind parse_sampler_kind(const std::string& s);

/// Model prediction (velocity or noise) for a batch at a single time t.
using PredictFn = std::function<Tensor<double>(const Tensor<double>& x, const std::vector<int>& labels, double t)>;

struct SampleOptions {
    SamplerKind method = SamplerKind::heun;
    std::size_t steps = 50;
    /// Guidance weight ω: output = uncond + ω (cond - uncond). ω = 0 evaluates
    /// only the unconditional branch, ω = 1 only the conditional one.
    double cfg_weight = 1.0;
    double ddim_t_max = 0.999;
};

/// uncond + ω (cond - uncond), elementwise.
Tensor<double> cfg_combine(const Tensor<double>& uncond, const Tensor<double>& cond, double weight);

/// Guided prediction. `null_label` selects the unconditional branch.
Tensor<double> guided_predict(const PredictFn& predict, const Tensor<double>& x, const std::vector<int>& labels,
                              int null_label, double t, double weight);

/// Integrates `noise` [B x D] to samples. Throws std::invalid_argument when the
/// method does not match the loss family the model was trained with.
Tensor<double> sample(const PredictFn& predict, const Tensor<double>& noise, const std::vector<int>& labels,
                      int null_label, const SampleOptions& options, LossKind trained_with);

}  // namespace pom
