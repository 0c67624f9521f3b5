#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tlbench {

double mae(std::span<const double> prediction, std::span<const double> actual);
double mse(std::span<const double> prediction, std::span<const double> actual);

struct MetricSet {
    double mae = 0.0;
    double mse = 0.0;
    std::size_t horizon = 0;
    std::size_t n_predictions = 0;
};

MetricSet evaluate(std::span<const double> prediction, std::span<const double> actual, std::size_t horizon);

/// Field-wise arithmetic mean; n_predictions is summed.
MetricSet mean_metrics(std::span<const MetricSet> runs);

/// 100 * (base - updated) / base. Positive means the new error is lower.
double improvement_pct(double base, double updated);

/// Half away from zero at `decimals` places.
double round_half_away(double value, int decimals);
/// round_half_away then fixed formatting, e.g. format_fixed(4.55, 1) == "4.6".
std::string format_fixed(double value, int decimals);
/// Signed percentage with one decimal, e.g. "+4.6%", "-1.3%", "0.0%".
std::string format_pct(double value);

// --- reports -----------------------------------------------------------------

struct SeedResult {
    std::uint64_t seed = 0;
    MetricSet metrics;
};

struct EvaluationReport {
    std::string plan_id;
    std::string strategy;    // "S1".."S8" or "baseline"
    std::string model;       // trained-model label, e.g. "Bear+Fox"
    std::string target;
    std::string arch;
    std::size_t horizon = 0;
    std::vector<SeedResult> seeds;
    MetricSet mean;
    /// Seeds the plan asked for; fewer completed ones mark a partial mean.
    std::size_t expected_seeds = 0;
    bool core_strategy = true;

    bool partial() const { return seeds.size() < expected_seeds; }
};

/// Fills `mean` from `seeds`.
void finalize(EvaluationReport& report);

struct RenderedTable {
    std::string name;
    std::string text;
    std::string csv;
    std::vector<std::string> warnings;
};

/// Zero-shot matrix for one architecture and horizon: rows are trained
/// models, columns are test datasets, cells are mean MAE. The diagonal
/// (model trained on the test dataset) is the baseline and is marked with
/// '*'. Missing cells render as "—".
RenderedTable render_zero_shot_matrix(const std::vector<EvaluationReport>& reports, const std::string& arch,
                                      std::size_t horizon);

/// One row per (model, target, horizon, strategy) with the baseline MAE/MSE
/// and the strategy's MAE/MSE plus improvement percentages.
RenderedTable render_strategy_summary(const std::vector<EvaluationReport>& reports, const std::string& arch);

/// Every table the reports support.
std::vector<RenderedTable> render_tables(const std::vector<EvaluationReport>& reports);

} // namespace tlbench
