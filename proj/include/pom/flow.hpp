#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pom/random.hpp"
#include "pom/tape.hpp"

// Training objectives on the linear path x_t = (1 - t) x0 + t ε (data at
// t = 0, noise at t = 1). Losses are the batch mean of the squared L2 error
// over data dimensions, so a zero model under the noise objective scores
// about data_dim.
namespace pom {

enum class LossKind : std::uint8_t { diffusion, flow_matching };

const char* to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

inline double path_alpha(double t) { return 1.0 - t; }
inline double path_gamma(double t) { return t; }

/// x_t per sample: x0, eps [B x D], t [B].
Tensor<double> forward_process(const Tensor<double>& x0, const Tensor<double>& eps, const std::vector<double>& t);

/// Model under training: (x_t, labels, t) -> prediction [B x D] on the caller's tape.
using ModelFn = std::function<Var<double>(Var<double> x_t, const std::vector<int>& labels, const std::vector<double>& t)>;

struct LossDraw {
    std::vector<double> t;
    Tensor<double> eps;
};

/// t ~ U[0, 1] and ε ~ N(0, I) for a batch of `batch` samples of width `dim`.
LossDraw draw_loss_noise(std::size_t batch, std::size_t dim, Rng& rng);

/// mean_b ‖a_b - target_b‖².
Var<double> batch_squared_error(Var<double> prediction, Var<double> target);

/// ‖ε - f(x_t, c, t)‖².
Var<double> diffusion_loss(Tape<double>& tape, const ModelFn& model, const Tensor<double>& x0,
                           const std::vector<int>& labels, Rng& rng);

/// ‖(ε - x0) - f(x_t, c, t)‖².
Var<double> flow_matching_loss(Tape<double>& tape, const ModelFn& model, const Tensor<double>& x0,
                               const std::vector<int>& labels, Rng& rng);

Var<double> training_loss(LossKind kind, Tape<double>& tape, const ModelFn& model, const Tensor<double>& x0,
                          const std::vector<int>& labels, Rng& rng);

}  // namespace pom
