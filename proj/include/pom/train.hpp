#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pom/checkpoint.hpp"
#include "pom/dataset.hpp"
#include "pom/denoiser.hpp"
#include "pom/energy.hpp"
#include "pom/flow.hpp"
#include "pom/optimizer.hpp"
#include "pom/sampler.hpp"

namespace pom {

struct TrainConfig {
    DatasetSpec data;
    DenoiserConfig model;  // image size and class count follow `data`
    LossKind loss = LossKind::flow_matching;
    double lr = 1e-3;
    std::size_t steps = 2000;
    double cooldown = 0.1;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    double cond_dropout = 0.1;
    AdamWConfig optimizer;
    SampleOptions sampling;
    std::size_t eval_samples = 512;

    /// Model config with the data-dependent fields filled in.
    DenoiserConfig resolved_model() const;
    void validate() const;
};

struct MetricRow {
    std::size_t step = 0;  // 1-based
    double loss = 0.0;
    double lr = 0.0;
    double wall_ms = 0.0;  // since training started
};

inline constexpr const char* kMetricsHeader = "step,loss,lr,wall_ms";

/// Raised when the loss exceeds kDivergenceLoss or stops being finite.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t step, double loss, double lr, double grad_norm);
    std::size_t step;
    double loss;
};

inline constexpr double kDivergenceLoss = 1e6;

struct TrainResult {
    DenoiserParams params;
    std::vector<MetricRow> metrics;
};

/// Trains from a fresh initialization. `on_step`, when set, sees every row.
TrainResult train(const TrainConfig& config, const std::function<void(const MetricRow&)>& on_step = {});

/// One optimizer step on `params`; returns the loss before the update.
double train_step(DenoiserParams& params, AdamW& optimizer, const TrainConfig& config, std::size_t step, Rng& rng,
                  double* grad_norm = nullptr);

/// Mean logged loss over the `window` steps ending at `step` (clipped at step 1).
double windowed_loss(const std::vector<MetricRow>& metrics, std::size_t step, std::size_t window = 10);

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& metrics);

// --- sampling and evaluation ------------------------------------------------

PredictFn make_predictor(const DenoiserParams& params);

/// Samples `labels.size()` points from seeded noise with the configured sampler.
Tensor<double> generate(const DenoiserParams& params, const TrainConfig& config, const std::vector<int>& labels,
                        std::uint64_t noise_seed);

/// Class-balanced labels 0, 1, ..., classes-1, 0, 1, ...
std::vector<int> balanced_labels(std::size_t count, std::size_t classes);

/// Energy distance of generated samples to held-out data drawn with `seed`,
/// per class and overall.
SampleEvaluation evaluate_model(const DenoiserParams& params, const TrainConfig& config, std::uint64_t seed);

// --- checkpoints -------------------------------------------------------------

Checkpoint make_checkpoint(const DenoiserParams& params, const TrainConfig& config, std::uint64_t step);
/// Rebuilds the model described by the checkpoint's config echo. Throws on a
/// missing or misshapen tensor.
DenoiserParams restore_model(const Checkpoint& ckpt, TrainConfig* config = nullptr);

}  // namespace pom
