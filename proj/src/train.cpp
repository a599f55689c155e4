#include "pom/train.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "pom/config.hpp"

namespace pom {

DenoiserConfig TrainConfig::resolved_model() const {
    DenoiserConfig m = model;
    m.image_h = data.height();
    m.image_w = data.width();
    m.classes = data.classes;
    return m;
}

void TrainConfig::validate() const {
    data.validate();
    resolved_model().validate();
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be positive");
    if (!(cooldown >= 0.0 && cooldown < 1.0)) throw std::invalid_argument("train: cooldown must lie in [0, 1)");
    if (steps == 0) throw std::invalid_argument("train: steps must be positive");
    if (batch == 0) throw std::invalid_argument("train: batch must be positive");
    if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) {
        throw std::invalid_argument("train: cond_dropout must lie in [0, 1]");
    }
    if (sampling.steps == 0) throw std::invalid_argument("train: sample_steps must be positive");
    if (eval_samples < kMinEvalSamples) {
        throw std::invalid_argument("train: eval_samples must be at least " + std::to_string(kMinEvalSamples));
    }
}

namespace {

std::string divergence_message(std::size_t step, double loss, double lr, double grad_norm) {
    std::ostringstream os;
    os << "training diverged at step " << step << ": loss " << loss << ", lr " << lr << ", gradient norm "
       << grad_norm;
    return os.str();
}

bool decays(const Tensor<double>& t) { return t.rank() >= 2; }

}  // namespace

TrainingDiverged::TrainingDiverged(std::size_t step_, double loss_, double lr, double grad_norm)
    : std::runtime_error(divergence_message(step_, loss_, lr, grad_norm)), step(step_), loss(loss_) {}

double train_step(DenoiserParams& params, AdamW& optimizer, const TrainConfig& config, std::size_t step, Rng& rng,
                  double* grad_norm) {
    const double lr = learning_rate(step - 1, config.steps, config.lr, config.cooldown);
    Batch batch = sample_dataset(config.data, config.batch, rng);
    for (int& label : batch.labels) {
        if (rng.uniform() < config.cond_dropout) label = params.config.null_class();
    }

    Tape<double> tape;
    ParamScope<double> scope(tape);
    const ModelFn model = [&](Var<double> xt, const std::vector<int>& labels, const std::vector<double>& t) {
        return denoiser_forward(scope, xt, labels, t, params);
    };
    double loss_value = std::numeric_limits<double>::quiet_NaN();
    double norm = std::numeric_limits<double>::quiet_NaN();
    try {
        const Var<double> loss = training_loss(config.loss, tape, model, batch.x, batch.labels, rng);
        loss_value = loss.value()[0];
        if (!std::isfinite(loss_value) || loss_value > kDivergenceLoss) throw NumericError("loss out of range");
        tape.backward(loss);
    } catch (const NumericError&) {
        throw TrainingDiverged(step, loss_value, lr, norm);
    }

    std::vector<Tensor<double>*> ptrs;
    std::vector<Tensor<double>> grads;
    std::vector<bool> decay;
    params.visit([&](const std::string&, Tensor<double>& t) {
        ptrs.push_back(&t);
        grads.push_back(scope.grad(t));
        decay.push_back(decays(t));
    });
    norm = clip_global_norm(grads, config.optimizer.clip_norm);
    if (!std::isfinite(norm)) throw TrainingDiverged(step, loss_value, lr, norm);
    optimizer.step(ptrs, grads, decay, lr);
    if (grad_norm) *grad_norm = norm;
    return loss_value;
}

TrainResult train(const TrainConfig& config, const std::function<void(const MetricRow&)>& on_step) {
    config.validate();
    Rng rng(config.seed);
    TrainResult result{init_denoiser(config.resolved_model(), rng), {}};
    AdamW optimizer(config.optimizer);
    result.metrics.reserve(config.steps);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t step = 1; step <= config.steps; ++step) {
        MetricRow row;
        row.step = step;
        row.lr = learning_rate(step - 1, config.steps, config.lr, config.cooldown);
        row.loss = train_step(result.params, optimizer, config, step, rng);
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.metrics.push_back(row);
        if (on_step) on_step(row);
    }
    return result;
}

double windowed_loss(const std::vector<MetricRow>& metrics, std::size_t step, std::size_t window) {
    if (step == 0 || step > metrics.size() || window == 0) {
        throw std::out_of_range("windowed_loss: step " + std::to_string(step) + " not in the log");
    }
    const std::size_t first = step > window ? step - window + 1 : 1;
    double s = 0.0;
    for (std::size_t i = first; i <= step; ++i) s += metrics[i - 1].loss;
    return s / static_cast<double>(step - first + 1);
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& metrics) {
    os << kMetricsHeader << '\n';
    os << std::setprecision(17);
    for (const auto& r : metrics) os << r.step << ',' << r.loss << ',' << r.lr << ',' << r.wall_ms << '\n';
}

PredictFn make_predictor(const DenoiserParams& params) {
    return [&params](const Tensor<double>& x, const std::vector<int>& labels, double t) {
        return denoiser_predict(x, labels, std::vector<double>(labels.size(), t), params);
    };
}

Tensor<double> generate(const DenoiserParams& params, const TrainConfig& config, const std::vector<int>& labels,
                        std::uint64_t noise_seed) {
    Rng rng(noise_seed);
    const Tensor<double> noise = rng.normal_tensor<double>({labels.size(), params.config.data_dim()});
    return sample(make_predictor(params), noise, labels, params.config.null_class(), config.sampling, config.loss);
}

std::vector<int> balanced_labels(std::size_t count, std::size_t classes) {
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % classes);
    return labels;
}

SampleEvaluation evaluate_model(const DenoiserParams& params, const TrainConfig& config, std::uint64_t seed) {
    // Both sets draw their labels independently and uniformly: the pairwise
    // statistic assumes i.i.d. draws from the mixture, and class-balanced sets
    // would bias it downwards.
    Rng rng(seed);
    const Batch reference = sample_dataset(config.data, config.eval_samples, rng);
    std::vector<int> labels(config.eval_samples);
    for (int& l : labels) l = static_cast<int>(rng.below(config.data.classes));
    const Tensor<double> samples = generate(params, config, labels, rng.next());
    return evaluate_samples(samples, labels, reference.x, reference.labels, config.data.classes);
}

Checkpoint make_checkpoint(const DenoiserParams& params, const TrainConfig& config, std::uint64_t step) {
    Checkpoint ckpt;
    ckpt.step = step;
    ckpt.config = to_config_text(config);
    params.visit([&](const std::string& name, const Tensor<double>& t) { ckpt.tensors.push_back({name, t}); });
    return ckpt;
}

DenoiserParams restore_model(const Checkpoint& ckpt, TrainConfig* config) {
    const TrainConfig cfg = parse_config(ckpt.config).train;
    Rng rng(0);
    DenoiserParams params = init_denoiser(cfg.resolved_model(), rng);
    params.visit([&](const std::string& name, Tensor<double>& t) {
        const Tensor<double>& stored = ckpt.get(name);
        if (stored.shape() != t.shape()) {
            throw ShapeError("checkpoint tensor " + name + " has shape " + to_string(stored.shape()) + ", expected " +
                             to_string(t.shape()));
        }
        t = stored;
    });
    std::size_t expected = 0;
    params.visit([&](const std::string&, const Tensor<double>&) { ++expected; });
    if (expected != ckpt.tensors.size()) {
        throw std::runtime_error("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                                 " tensors, the model has " + std::to_string(expected));
    }
    if (config) *config = cfg;
    return params;
}

}  // namespace pom
