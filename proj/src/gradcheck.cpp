#include "tlbench/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tlbench/rng.hpp"

namespace tlbench {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

std::vector<GradCheckResult> check_gradients(const std::function<Tensor()>& loss_fn,
                                             const std::vector<std::pair<std::string, Tensor>>& params,
                                             const GradCheckOptions& options) {
    for (const auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
    }
    loss_fn().backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, p] : params) {
        analytic.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                           : std::vector<double>(p.numel(), 0.0));
    }

    std::vector<GradCheckResult> results;
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k].second;
        GradCheckResult r;
        r.name = params[k].first;
        r.entries = p.numel();
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + options.step;
            const double up = loss_fn().item();
            values[i] = original - options.step;
            const double down = loss_fn().item();
            values[i] = original;
            const double numeric = (up - down) / (2.0 * options.step);
            const double rel = relative_error(analytic[k][i], numeric, options.floor);
            r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic[k][i] - numeric));
            if (rel > r.max_rel_error) {
                r.max_rel_error = rel;
                r.worst_index = i;
            }
        }
        results.push_back(std::move(r));
    }
    return results;
}

double worst_relative_error(const std::vector<GradCheckResult>& results) {
    double worst = 0.0;
    for (const auto& r : results) worst = std::max(worst, r.max_rel_error);
    return worst;
}

ModelConfig toy_config(Architecture arch) {
    ModelConfig c;
    c.arch = arch;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_encoder_layers = 1;
    c.n_decoder_layers = 1;
    c.ff_dim = 16;
    c.dropout_rate = 0.0;
    c.lookback = 16;
    c.horizon = 4;
    c.input_width = 3;
    c.patch_len = 4;
    c.stride = 4;
    c.allow_any_horizon = true;
    return c;
}

ModelGradCheck check_model_gradients(Architecture arch, const GradCheckOptions& options, std::uint64_t seed) {
    ModelGradCheck out;
    out.config = toy_config(arch);
    Forecaster model(out.config, seed);
    Rng rng(seed, RngStream::Synthetic, 99);
    const std::size_t batch = 2;
    std::vector<double> x(batch * out.config.lookback * out.config.input_width);
    std::vector<double> y(batch * out.config.horizon);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : y) v = rng.uniform(-1.0, 1.0);
    const Tensor xt = Tensor::from({batch, out.config.lookback, out.config.input_width}, std::move(x));
    const Tensor yt = Tensor::from({batch, out.config.horizon}, std::move(y));
    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& p : model.parameters()) params.emplace_back(p.name, p.value);
    out.results = check_gradients([&] { return mse_loss(model.forward(xt, false), yt); }, params, options);
    for (const auto& r : out.results) {
        out.entries += r.entries;
        if (r.max_rel_error >= out.worst) {
            out.worst = r.max_rel_error;
            out.worst_parameter = r.name;
        }
    }
    return out;
}

} // namespace tlbench
