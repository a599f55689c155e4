#include "pom/sampler.hpp"

#include <stdexcept>

namespace pom {

const char* to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::euler: return "euler";
        case SamplerKind::heun: return "heun";
        case SamplerKind::ddim: return "ddim";
    }
    return "?";
}

SamplerKind parse_sampler_kind(const std::string& s) {
    if (s == "euler") return SamplerKind::euler;
    if (s == "heun") return SamplerKind::heun;
    if (s == "ddim") return SamplerKind::ddim;
    throw std::invalid_argument("unknown sampler '" + s + "' (expected euler, heun or ddim)");
}

Tensor<double> cfg_combine(const Tensor<double>& uncond, const Tensor<double>& cond, double weight) {
    if (uncond.shape() != cond.shape()) {
        throw ShapeError("cfg: unconditional " + to_string(uncond.shape()) + " vs conditional " +
                         to_string(cond.shape()));
    }
    Tensor<double> out(uncond.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = uncond[i] + weight * (cond[i] - uncond[i]);
    return out;
}

Tensor<double> guided_predict(const PredictFn& predict, const Tensor<double>& x, const std::vector<int>& labels,
                              int null_label, double t, double weight) {
    if (weight == 1.0) return predict(x, labels, t);
    const std::vector<int> nulls(labels.size(), null_label);
    Tensor<double> uncond = predict(x, nulls, t);
    if (weight == 0.0) return uncond;
    return cfg_combine(uncond, predict(x, labels, t), weight);
}

namespace {

// x - h v, elementwise.
Tensor<double> step_back(const Tensor<double>& x, const Tensor<double>& v, double h) {
    Tensor<double> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - h * v[i];
    return out;
}

void check_prediction(const Tensor<double>& p, const Tensor<double>& x, double t) {
    if (p.shape() != x.shape()) throw ShapeError("sampler: prediction shape " + to_string(p.shape()));
    if (!all_finite(p)) throw NumericError("sampler: non-finite prediction at t=" + std::to_string(t));
}

}  // namespace

Tensor<double> sample(const PredictFn& predict, const Tensor<double>& noise, const std::vector<int>& labels,
                      int null_label, const SampleOptions& options, LossKind trained_with) {
    if (options.steps == 0) throw std::invalid_argument("sampler: steps must be positive");
    if (noise.rank() != 2 || labels.size() != noise.dim(0)) {
        throw ShapeError("sampler: noise " + to_string(noise.shape()) + " with " + std::to_string(labels.size()) +
                         " labels");
    }
    const bool velocity = options.method != SamplerKind::ddim;
    if (velocity != (trained_with == LossKind::flow_matching)) {
        throw std::invalid_argument(std::string("sampler: ") + to_string(options.method) +
                                    " does not apply to a model trained with the " + to_string(trained_with) +
                                    " loss");
    }
    const auto eval = [&](const Tensor<double>& x, double t) {
        Tensor<double> p = guided_predict(predict, x, labels, null_label, t, options.cfg_weight);
        check_prediction(p, x, t);
        return p;
    };
    const std::size_t n = options.steps;
    Tensor<double> x = noise;

    if (velocity) {
        const double h = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = 1.0 - static_cast<double>(i) * h;
            const Tensor<double> v = eval(x, t);
            if (options.method == SamplerKind::euler) {
                x = step_back(x, v, h);
                continue;
            }
            const Tensor<double> x_pred = step_back(x, v, h);
            const Tensor<double> v2 = eval(x_pred, t - h);
            Tensor<double> avg(v.shape());
            for (std::size_t j = 0; j < v.size(); ++j) avg[j] = 0.5 * (v[j] + v2[j]);
            x = step_back(x, avg, h);
        }
        return x;
    }

    const double t_max = options.ddim_t_max;
    if (!(t_max > 0.0 && t_max < 1.0)) throw std::invalid_argument("ddim: t_max must lie in (0, 1)");
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t_max * (1.0 - static_cast<double>(i) / static_cast<double>(n));
        const double s = t_max * (1.0 - static_cast<double>(i + 1) / static_cast<double>(n));
        const Tensor<double> eps = eval(x, t);
        const double a_t = path_alpha(t), g_t = path_gamma(t), a_s = path_alpha(s), g_s = path_gamma(s);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double x0 = (x[j] - g_t * eps[j]) / a_t;
            x[j] = a_s * x0 + g_s * eps[j];
        }
    }
    return x;
}

}  // namespace pom
