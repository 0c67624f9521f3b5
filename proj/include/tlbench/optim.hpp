#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tlbench/tensor.hpp"

namespace tlbench {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates for one parameter block plus the shared step
/// counter.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

/// One bias-corrected Adam update applied in place. Lazily sizes the moment
/// buffers on the first call.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper);

/// Adam over a fixed list of parameter tensors.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamHyper hyper);

    /// Applies one update using the current grads; parameters without a grad
    /// are treated as having zero gradient.
    void step();
    void zero_grad();
    std::size_t steps() const { return states_.empty() ? 0 : states_.front().step; }
    const AdamHyper& hyper() const { return hyper_; }

private:
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
    AdamHyper hyper_;
};

} // namespace tlbench
