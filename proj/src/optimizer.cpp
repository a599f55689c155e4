#include "pom/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace pom {

double clip_global_norm(std::vector<Tensor<double>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.data()) v *= f;
    }
    return norm;
}

void AdamW::step(const std::vector<Tensor<double>*>& params, const std::vector<Tensor<double>>& grads,
                 const std::vector<bool>& decay, double lr) {
    if (params.size() != grads.size() || params.size() != decay.size()) {
        throw std::invalid_argument("adamw: parameter, gradient and decay lists differ in length");
    }
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.push_back(Tensor<double>::zeros(p->shape()));
            v_.push_back(Tensor<double>::zeros(p->shape()));
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("adamw: parameter list changed between steps");
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<double>& p = *params[i];
        const Tensor<double>& g = grads[i];
        if (g.shape() != p.shape()) throw ShapeError("adamw: gradient shape " + to_string(g.shape()));
        Tensor<double>& m = m_[i];
        Tensor<double>& v = v_[i];
        const double wd = decay[i] ? config_.weight_decay : 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = m[j] / c1, vhat = v[j] / c2;
            p[j] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + wd * p[j]);
        }
    }
}

double learning_rate(std::size_t step, std::size_t total, double base, double cooldown) {
    if (!(cooldown >= 0.0 && cooldown < 1.0)) throw std::invalid_argument("cooldown fraction must lie in [0, 1)");
    const auto cool = static_cast<std::size_t>(std::llround(cooldown * static_cast<double>(total)));
    const std::size_t start = total - cool;
    if (step < start || cool == 0) return base;
    const double progress = static_cast<double>(step - start) / static_cast<double>(cool);
    return base * (1.0 - std::sqrt(progress));
}

}  // namespace pom
