#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tlbench/combination.hpp"
#include "tlbench/evaluation.hpp"
#include "tlbench/strategy.hpp"
#include "tlbench/synthetic.hpp"

namespace tlbench {

/// Environment variable that overrides a campaign's output root.
inline constexpr const char* kOutputRootEnv = "TLBENCH_OUTPUT_ROOT";

struct DatasetEntry {
    enum class Kind { Csv, Cleaned, Synthetic, Sinusoid };
    std::string id;
    Kind kind = Kind::Csv;
    std::filesystem::path path;  // Csv, Cleaned
    DatasetProfile profile;      // Synthetic
    SyntheticOptions synthetic;
    SinusoidOptions sinusoid;
    PipelineOptions pipeline;
};

struct CampaignConfig {
    std::filesystem::path source;  // config file, for messages
    std::filesystem::path output_root = "tlbench-out";
    std::vector<DatasetEntry> datasets;
    std::vector<CombinationSpec> combinations;
    std::vector<ExperimentPlan> plans;  // expanded: one per (arch, horizon)
    std::vector<std::string> plan_origin;  // "plans[i]" for each expanded plan
};

/// Parses and validates a YAML campaign. Every problem is reported as a
/// ConfigError prefixed with the offending key path, e.g.
/// "plans[2].sources[0]: unknown dataset 'Foo'". Relative paths resolve
/// against `base_dir`.
CampaignConfig parse_campaign(const std::string& yaml_text, const std::filesystem::path& base_dir,
                              const std::filesystem::path& source = "<config>");
CampaignConfig load_campaign(const std::filesystem::path& path);

/// Loads, cleans or generates every dataset, then builds the combinations in
/// declaration order. Plans are re-validated against the finished registry.
DatasetRegistry build_registry(const CampaignConfig& config);

/// $TLBENCH_OUTPUT_ROOT when set and non-empty, otherwise `configured`.
std::filesystem::path resolve_output_root(const std::filesystem::path& configured);

/// One-line description used by --filter: "<name> <strategy> <sources> -> <target>
/// <arch> <H>hr <hash>".
std::string plan_descriptor(const ExperimentPlan& plan);

struct CampaignOptions {
    std::filesystem::path output_root;
    /// ECMAScript regex searched in plan_descriptor; empty selects all.
    std::string filter;
    std::size_t parallel = 1;
};

struct PlanStatus {
    std::string hash;
    std::string descriptor;
    std::string status;  // "done", "failed", "pending"
    std::vector<std::string> errors;
};

struct CampaignSummary {
    std::size_t plans_selected = 0;
    std::size_t seeds_trained = 0;
    std::size_t seeds_reused = 0;
    std::size_t failures = 0;
    std::vector<PlanStatus> statuses;
    std::vector<EvaluationReport> reports;
};

/// Runs every selected (plan, seed) with at most `parallel` in flight. Seeds
/// with a complete metrics.json are reused. Writes <root>/manifest.json.
CampaignSummary run_campaign(const CampaignConfig& config, const DatasetRegistry& registry,
                             const CampaignOptions& options);

/// Rebuilds reports from <root>/runs/*/plan.json and the seeds' metrics.json.
std::vector<EvaluationReport> collect_reports(const std::filesystem::path& output_root,
                                              std::vector<std::string>* warnings = nullptr);

/// Writes <root>/results/tables/<name>.{txt,csv}; returns the files written.
std::vector<std::filesystem::path> write_tables(const std::filesystem::path& output_root,
                                                const std::vector<RenderedTable>& tables);

} // namespace tlbench
