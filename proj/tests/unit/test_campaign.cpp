#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "tlbench/campaign.hpp"
#include "tlbench/cli.hpp"
#include "tlbench/dataset_io.hpp"
#include "tlbench/errors.hpp"

using namespace tlbench;
namespace fs = std::filesystem;

namespace {

const std::string kCampaign = R"(
output_root: out
defaults:
  horizons: [24]
  seeds: [1, 50]
  model: {d_model: 8, n_heads: 2, encoder_layers: 1, decoder_layers: 1, ff_dim: 16, dropout: 0.1, lookback: 24}
  train: {pretrain_lr: 3.0e-3, finetune_lr: 1.0e-3, batch_size: 16, max_epochs: 1, finetune_max_epochs: 1,
          max_batches_per_epoch: 3, max_eval_windows: 16}
datasets:
  - id: A
    sinusoid: {buildings: 2, length: 480, seed: 1}
  - id: B
    sinusoid: {buildings: 2, length: 480, phase: 5.0, seed: 2}
  - id: C
    sinusoid: {buildings: 1, length: 480, phase: 2.0, seed: 3}
combinations:
  - id: AC
    category: climate-variant
    members: [A, C]
plans:
  - {name: base, strategy: S1, sources: [B], target: B}
  - {name: zs, strategy: S2, sources: [AC], target: B}
  - {name: ft, strategy: S7, sources: [A], target: B}
)";

std::string config_error(const std::string& yaml) {
    try {
        parse_campaign(yaml, ".");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "<no error>";
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    return text.replace(at, from.size(), to);
}

struct EnvGuard {
    explicit EnvGuard(const char* value) {
        if (const char* old = std::getenv(kOutputRootEnv)) saved = old;
        if (value) ::setenv(kOutputRootEnv, value, 1);
        else ::unsetenv(kOutputRootEnv);
    }
    ~EnvGuard() {
        if (saved) ::setenv(kOutputRootEnv, saved->c_str(), 1);
        else ::unsetenv(kOutputRootEnv);
    }
    std::optional<std::string> saved;
};

fs::path write_config(const fs::path& dir, const std::string& yaml) {
    const fs::path p = dir / "campaign.yaml";
    std::ofstream(p) << yaml;
    return p;
}

} // namespace

TEST_CASE("campaign parsing expands plans and resolves paths") {
    const CampaignConfig c = parse_campaign(kCampaign, "/tmp/cfg");
    CHECK(c.output_root == fs::path("/tmp/cfg/out"));
    CHECK(c.datasets.size() == 3);
    CHECK(c.combinations.size() == 1);
    REQUIRE(c.plans.size() == 3);
    CHECK(c.plans[2].strategy == StrategyId::S7);
    CHECK(c.plans[2].seeds == std::vector<std::uint64_t>{1, 50});
    CHECK(c.plans[2].model.d_model == 8);

    const std::string wide = replace(kCampaign, "horizons: [24]", "horizons: [24, 96]\n  archs: [vanilla, patchtst]");
    const CampaignConfig w = parse_campaign(wide, ".");
    CHECK(w.plans.size() == 12);
    CHECK(w.plan_origin[11] == "plans[2]");
    CHECK(plan_descriptor(c.plans[1]).rfind("zs S2 AC -> B vanilla 24hr ", 0) == 0);
}

TEST_CASE("campaign errors name the offending key") {
    CHECK(config_error(replace(kCampaign, "strategy: S1", "stratgy: S1")).find("plans[0].stratgy: unknown key") == 0);
    CHECK(config_error(replace(kCampaign, "sources: [A]", "sources: [Q]")) ==
          "plans[2].sources[0] (line 23): unknown dataset 'Q'");
    CHECK(config_error(replace(kCampaign, "max_epochs: 1", "max_epochs: lots")).find("defaults.train.max_epochs") == 0);
    CHECK(config_error(replace(kCampaign, "members: [A, C]", "members: [A, Nope]")).find("combinations[0].members[1]") ==
          0);
    CHECK(config_error(replace(kCampaign, "strategy: S2", "strategy: S9")).find("plans[1].strategy") == 0);
    // Root counts are only known once the datasets are built.
    const CampaignConfig one_root = parse_campaign(replace(kCampaign, "sources: [AC]", "sources: [A]"), ".");
    CHECK_THROWS_WITH_AS(build_registry(one_root), "plans[1]: plan zs: S2 needs at least two source datasets",
                         PlanError);
    CHECK(config_error("plans: [unclosed") != "<no error>");
    CHECK_THROWS_AS(load_campaign("/nonexistent/campaign.yaml"), ConfigError);
}

TEST_CASE("output root override") {
    {
        EnvGuard env("/tmp/from-env");
        CHECK(resolve_output_root("configured") == fs::path("/tmp/from-env"));
    }
    {
        EnvGuard env("");
        CHECK(resolve_output_root("configured") == fs::path("configured"));
    }
    EnvGuard env(nullptr);
    CHECK(resolve_output_root("configured") == fs::path("configured"));
}

TEST_CASE("campaign run, resume and reports") {
    testing::TempDir dir("campaign");
    const CampaignConfig config = parse_campaign(kCampaign, dir.path);
    const DatasetRegistry registry = build_registry(config);
    CHECK(registry.get("AC").building_count() == 3);

    CampaignOptions options;
    options.output_root = dir.path / "out";
    options.parallel = 3;
    const CampaignSummary first = run_campaign(config, registry, options);
    CHECK(first.plans_selected == 3);
    CHECK(first.seeds_trained == 6);
    CHECK(first.seeds_reused == 0);
    CHECK(first.failures == 0);

    std::ifstream manifest_in(options.output_root / "manifest.json");
    const auto manifest = nlohmann::json::parse(manifest_in);
    CHECK(manifest.at("plans").size() == 3);
    for (const auto& p : manifest.at("plans")) CHECK(p.at("status") == "done");

    // Nothing is retrained on a second pass.
    const CampaignSummary second = run_campaign(config, registry, options);
    CHECK(second.seeds_trained == 0);
    CHECK(second.seeds_reused == 6);
    for (std::size_t i = 0; i < 3; ++i) CHECK(second.reports[i].mean.mae == first.reports[i].mean.mae);

    std::vector<std::string> warnings;
    auto reports = collect_reports(options.output_root, &warnings);
    CHECK(reports.size() == 3);
    CHECK(warnings.empty());

    // A lost seed makes its plan's mean partial.
    fs::remove(run_directory(options.output_root, config.plans[2], 50) / "metrics.json");
    reports = collect_reports(options.output_root, &warnings);
    REQUIRE(reports.size() == 3);
    std::size_t partial = 0;
    for (const auto& r : reports) partial += r.partial();
    CHECK(partial == 1);
    CHECK(!warnings.empty());

    // The filter selects by descriptor.
    options.filter = "^ft ";
    const CampaignSummary filtered = run_campaign(config, registry, options);
    CHECK(filtered.plans_selected == 1);
    CHECK(filtered.seeds_trained == 1);
    CHECK(filtered.seeds_reused == 1);
    options.filter = "([";
    CHECK_THROWS_AS(run_campaign(config, registry, options), ConfigError);
}

TEST_CASE("cli commands map failures to exit codes") {
    testing::TempDir dir("cli");
    std::ostringstream out, err;

    RunCommand bad;
    bad.config = fs::path(TLBENCH_FIXTURES) / "bad_campaign.yaml";
    CHECK(cmd_run(bad, out, err) == kExitValidation);
    CHECK(err.str().find("unknown dataset") != std::string::npos);

    RunCommand missing;
    missing.config = dir.path / "absent.yaml";
    CHECK(cmd_run(missing, out, err) == kExitValidation);
    CHECK(cmd_report(dir.path / "empty", out, err) == kExitValidation);

    CHECK(exit_code_for(ConfigError("x")) == kExitValidation);
    CHECK(exit_code_for(DataError("x")) == kExitValidation);
    CHECK(exit_code_for(TrainingError("x")) == kExitRuntime);
    CHECK(exit_code_for(std::runtime_error("x")) == kExitRuntime);
    CHECK(parse_fault("softmax") == GradientFault::Softmax);
    CHECK_THROWS_AS(parse_fault("everything"), ConfigError);
}

TEST_CASE("cli run honours the environment override and dry-run") {
    testing::TempDir dir("cli-run");
    const fs::path config = write_config(dir.path, replace(kCampaign, "sources: [AC],", "sources: [AC], seeds: [1],"));
    std::ostringstream out, err;

    RunCommand dry;
    dry.config = config;
    dry.dry_run = true;
    CHECK(cmd_run(dry, out, err) == kExitOk);
    CHECK(out.str().find("zs S2 AC -> B") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path / "out"));

    const fs::path env_root = dir.path / "env-root";
    EnvGuard env(env_root.c_str());
    RunCommand run;
    run.config = config;
    run.filter = "^zs ";
    CHECK(cmd_run(run, out, err) == kExitOk);
    CHECK(fs::exists(env_root / "manifest.json"));
    CHECK_FALSE(fs::exists(dir.path / "out"));

    out.str("");
    CHECK(cmd_report(env_root, out, err) == kExitOk);
    CHECK(fs::exists(env_root / "results" / "tables"));
}

TEST_CASE("cli clean writes the dataset and lists what it removed") {
    testing::TempDir dir("clean");
    CleanCommand c;
    c.input = fs::path(TLBENCH_FIXTURES) / "messy_site.csv";
    c.out_dir = dir.path;
    c.pipeline.max_zeros = 50;
    std::ostringstream out, err;
    REQUIRE(cmd_clean(c, out, err) == kExitOk);
    const std::string text = out.str();
    CHECK(text.find("dropped sparse (missing values)") != std::string::npos);
    CHECK(text.find("dropped flat (zero readings)") != std::string::npos);
    CHECK(text.find("interpolated 3 cells") != std::string::npos);

    const DatasetFiles files = dataset_files(dir.path, "messy_site");
    std::ifstream side(files.sidecar);
    const auto j = nlohmann::json::parse(side);
    CHECK(j.at("removed").at("sparse") == nlohmann::json::array({"sparse"}));
    CHECK(j.at("removed").at("zero") == nlohmann::json::array({"flat"}));
    const CleanDataset back = load_dataset(files.csv);
    CHECK(back.building_count() == 2);
    CHECK(back.length() == 200);

    // Cleaning the cleaned output changes nothing.
    CleanCommand again = c;
    again.input = files.csv;
    again.out_dir = dir.path / "again";
    again.id = "messy_site";
    out.str("");
    CHECK(cmd_clean(again, out, err) == kExitOk);
    CHECK(out.str().find("already clean") != std::string::npos);

    CleanCommand absent = c;
    absent.input = dir.path / "nope.csv";
    CHECK(cmd_clean(absent, out, err) == kExitValidation);
}
