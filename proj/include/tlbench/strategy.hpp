#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "tlbench/combination.hpp"
#include "tlbench/data.hpp"
#include "tlbench/evaluation.hpp"
#include "tlbench/models.hpp"

namespace tlbench {

// S1  one source -> test target                      (zero-shot)
// S2  several sources -> test target                 (zero-shot)
// S3  one source, fine-tune on target -> test
// S4  several sources, fine-tune on target -> test
// S5  one source + target -> test target
// S6  several sources + target -> test target
// S7  S5, then fine-tune on target -> test
// S8  S6, then fine-tune on target -> test
enum class StrategyId { S1 = 1, S2, S3, S4, S5, S6, S7, S8 };

std::string strategy_name(StrategyId id);
StrategyId parse_strategy(std::string_view text);
bool is_zero_shot(StrategyId id);
bool has_fine_tune(StrategyId id);
bool target_in_pretraining(StrategyId id);
bool single_source(StrategyId id);
/// False for S3 and S4, which summary tables mark as extensions.
bool is_core_strategy(StrategyId id);

struct TrainConfig {
    double pretrain_lr = 1e-4;
    double finetune_lr = 1e-5;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 10;
    std::size_t finetune_max_epochs = 10;
    /// Epochs without a new best validation loss before stopping.
    std::size_t patience = 10;
    /// 0 means every batch.
    std::size_t max_batches_per_epoch = 0;
    /// Cap on validation and test windows (evenly spaced); 0 means all.
    std::size_t max_eval_windows = 0;
    std::size_t window_stride = 1;

    bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& config);

struct ExperimentPlan {
    std::string name;  // optional label, not part of the hash
    StrategyId strategy = StrategyId::S1;
    std::vector<std::string> sources;
    std::string target;
    std::size_t horizon = 24;
    std::vector<std::uint64_t> seeds{1, 50, 100};
    ModelConfig model;
    TrainConfig train;
};

/// S1 with the target as its only source: the per-dataset baseline.
bool is_baseline(const ExperimentPlan& plan);

/// Stable text form of every field that affects results.
std::string canonical_plan(const ExperimentPlan& plan);
/// 16 hex digits of FNV-1a over canonical_plan.
std::string plan_hash(const ExperimentPlan& plan);

/// Throws PlanError on a structural breach (source counts, target in sources,
/// bad horizon or seeds) and ConfigError on bad model/train settings. With a
/// registry, also checks that every id is registered.
void validate_plan(const ExperimentPlan& plan, const DatasetRegistry* registry = nullptr);

/// The model config actually trained: plan.model with horizon and input width
/// filled in.
ModelConfig resolve_model(const ExperimentPlan& plan, const InputLayout& layout);

// --- instrumentation ---------------------------------------------------------

enum class Phase { Pretrain, FineTune, Test };
std::string_view phase_name(Phase phase);

/// Consumption of one series in one phase under one declared split role,
/// aggregated over windows. `test_rows` and `padded_rows` are recomputed from
/// the site layout row by row, independently of the declared role.
struct TraceEntry {
    Phase phase = Phase::Pretrain;
    std::string dataset;   // dataset the loader read from
    std::string source;    // root dataset of the series
    std::string member;
    std::string building;
    SegmentRole role = SegmentRole::Train;
    std::size_t windows = 0;
    std::size_t test_rows = 0;
    std::size_t padded_rows = 0;
    std::size_t first_row = 0;
    std::size_t last_row = 0;  // exclusive
};

class TrainingTrace {
public:
    /// Records one window of `span` rows starting at window.start.
    void record(Phase phase, const CleanDataset& ds, const WindowRef& window, std::size_t span, SegmentRole role);
    /// Adds a hand-built entry (negative controls).
    void add(TraceEntry entry);
    const std::vector<TraceEntry>& entries() const { return entries_; }
    std::size_t windows(Phase phase) const;

private:
    std::vector<TraceEntry> entries_;
    std::map<std::tuple<int, std::string, std::uint32_t, int>, std::size_t> index_;
};

struct IsolationResult {
    bool passed = true;
    std::size_t entries_checked = 0;
    std::vector<std::string> violations;
};

/// Fails when a zero-shot, non-baseline plan consumed any series whose root is
/// one of `target_roots` during training, or when any training row (pretrain or
/// fine-tune) came from a test segment. Test-phase rows are not inspected.
IsolationResult verify_isolation(const ExperimentPlan& plan, const std::vector<std::string>& target_roots,
                                 const TrainingTrace& trace);

// --- training ----------------------------------------------------------------

struct EpochRecord {
    Phase phase;
    std::size_t epoch;  // 0 = before any update
    double train_loss;  // NaN at epoch 0
    double val_loss;
    std::size_t steps;
    bool best;
};

struct TrainedModel {
    Forecaster model;
    std::vector<EpochRecord> log;
    bool trained = false;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;
};

/// Adam at train.pretrain_lr over the corpus train windows, shuffled once per
/// epoch; keeps the checkpoint with the lowest validation loss (epoch 0
/// included). Throws TrainingError when the loss diverges.
TrainedModel pretrain(Forecaster model, const CleanDataset& corpus, const InputLayout& layout, const TrainConfig& train,
                      std::uint64_t seed, TrainingTrace* trace = nullptr);

/// Full fine-tuning at train.finetune_lr on the target, using the fine-tune
/// RNG streams so the result does not depend on how pretraining consumed its
/// own streams.
TrainedModel fine_tune(TrainedModel pretrained, const CleanDataset& target, const InputLayout& layout,
                       const TrainConfig& train, std::uint64_t seed, TrainingTrace* trace = nullptr);

/// Eval-mode metrics over the test windows of `ds` (capped by
/// train.max_eval_windows).
MetricSet evaluate_model(const Forecaster& model, const CleanDataset& ds, const InputLayout& layout,
                         const TrainConfig& train, TrainingTrace* trace = nullptr);

/// Eval-mode metrics over any split role (no trace; diagnostics only).
MetricSet evaluate_split(const Forecaster& model, const CleanDataset& ds, const InputLayout& layout,
                         const TrainConfig& train, SegmentRole role);

/// Mean MSE over the validation windows.
double validation_loss(const Forecaster& model, const CleanDataset& ds, const InputLayout& layout,
                       const TrainConfig& train, Phase phase, TrainingTrace* trace = nullptr);

// --- runs --------------------------------------------------------------------

struct RunOptions {
    /// Artifacts go to <root>/runs/<plan-hash>/<seed>/ when set.
    std::optional<std::filesystem::path> output_root;
    /// Reuse a seed's metrics.json when it already exists.
    bool resume = false;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    MetricSet metrics;
    TrainingTrace trace;
    IsolationResult isolation;
    std::vector<EpochRecord> log;
    bool reused = false;
};

/// The datasets a plan trains and tests on.
struct PlanData {
    CleanDataset pretrain_corpus;
    const CleanDataset* target = nullptr;
    InputLayout layout;
    std::vector<std::string> target_roots;
};

PlanData prepare_plan_data(const ExperimentPlan& plan, const DatasetRegistry& registry);

/// One seed end to end. Throws ContractError if isolation is violated.
SeedOutcome run_seed(const ExperimentPlan& plan, const DatasetRegistry& registry, std::uint64_t seed,
                     const RunOptions& options = {});
/// Same, with the plan's datasets already prepared.
SeedOutcome run_seed(const ExperimentPlan& plan, const PlanData& data, std::uint64_t seed,
                     const RunOptions& options = {});

/// Every seed of the plan, then the seed mean. Validates the plan before any
/// training.
EvaluationReport run_strategy(const ExperimentPlan& plan, const DatasetRegistry& registry,
                              const RunOptions& options = {});

std::filesystem::path run_directory(const std::filesystem::path& output_root, const ExperimentPlan& plan,
                                    std::uint64_t seed);

/// Label for the trained model in reports, e.g. "Bear+Fox" or "Peacock+Wolf".
std::string model_label(const ExperimentPlan& plan);

/// metrics.json text for one seed (deterministic, no wall-clock fields).
std::string metrics_json(const ExperimentPlan& plan, std::uint64_t seed, const MetricSet& metrics);
/// plan.json text: the plan's identity and the fields reports group by.
std::string plan_json(const ExperimentPlan& plan);

/// Report skeleton (no seeds) describing a plan.
EvaluationReport empty_report(const ExperimentPlan& plan);

} // namespace tlbench
