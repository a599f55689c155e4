#pragma once

#include <cstddef>
#include <vector>

#include "pom/tensor.hpp"

namespace pom {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // <= 0 disables clipping
};

/// Scales `grads` in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::vector<Tensor<double>>& grads, double max_norm);

/// Adam with decoupled weight decay. Decay applies to tensors flagged in `decay`.
class AdamW {
public:
    explicit AdamW(AdamWConfig config = {}) : config_(config) {}

    void step(const std::vector<Tensor<double>*>& params, const std::vector<Tensor<double>>& grads,
              const std::vector<bool>& decay, double lr);

    std::size_t steps_taken() const { return t_; }
    const AdamWConfig& config() const { return config_; }

private:
    AdamWConfig config_;
    std::size_t t_ = 0;
    std::vector<Tensor<double>> m_, v_;
};

/// Constant `base` for the first (1 - cooldown) of `total` steps, then
/// base · (1 - sqrt(progress)) over the cooldown, progress in [0, 1).
double learning_rate(std::size_t step, std::size_t total, double base, double cooldown);

}  // namespace pom
