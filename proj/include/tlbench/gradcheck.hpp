#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tlbench/models.hpp"
#include "tlbench/tensor.hpp"

namespace tlbench {

struct GradCheckResult {
    std::string name;
    std::size_t entries = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckOptions {
    double step = 1e-4;
    /// Denominator floor for the relative error, guarding entries whose true
    /// gradient is (numerically) zero.
    double floor = 1e-6;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Compares reverse-mode gradients with central differences for every entry of
/// every named parameter. `loss_fn` must rebuild the graph from the current
/// parameter values on each call and be deterministic.
std::vector<GradCheckResult> check_gradients(const std::function<Tensor()>& loss_fn,
                                             const std::vector<std::pair<std::string, Tensor>>& params,
                                             const GradCheckOptions& options = {});

double worst_relative_error(const std::vector<GradCheckResult>& results);

/// Toy model for end-to-end checks: d_model 8, one encoder and one decoder
/// layer, L = 16, H = 4, three input channels, dropout off.
ModelConfig toy_config(Architecture arch);

struct ModelGradCheck {
    ModelConfig config;
    std::vector<GradCheckResult> results;
    std::size_t entries = 0;
    double worst = 0.0;
    std::string worst_parameter;
};

/// MSE loss of a toy model on a fixed random batch, differentiated with
/// respect to every parameter.
ModelGradCheck check_model_gradients(Architecture arch, const GradCheckOptions& options = {}, std::uint64_t seed = 7);

} // namespace tlbench
