#include "tlbench/optim.hpp"

#include <cmath>
#include <string>

#include "tlbench/errors.hpp"

namespace tlbench {

namespace {
void validate(const AdamHyper& h) {
    if (!(h.lr > 0.0)) throw ConfigError("adam: learning rate must be positive, got " + std::to_string(h.lr));
    if (!(h.beta1 >= 0.0 && h.beta1 < 1.0) || !(h.beta2 >= 0.0 && h.beta2 < 1.0)) {
        throw ConfigError("adam: betas must lie in [0, 1)");
    }
    if (!(h.eps > 0.0)) throw ConfigError("adam: eps must be positive");
}
} // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper) {
    validate(hyper);
    if (params.size() != grads.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters vs " +
                             std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    } else if (state.m.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state does not match parameter block");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

Adam::Adam(std::vector<Tensor> params, AdamHyper hyper)
    : params_(std::move(params)), states_(params_.size()), hyper_(hyper) {
    validate(hyper_);
}

void Adam::step() {
    std::vector<double> zeros;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (p.has_grad()) {
            adam_step(p.mutable_data(), p.grad(), states_[i], hyper_);
        } else {
            zeros.assign(p.numel(), 0.0);
            adam_step(p.mutable_data(), zeros, states_[i], hyper_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace tlbench
