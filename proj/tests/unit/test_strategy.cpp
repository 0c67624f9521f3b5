#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "tlbench/errors.hpp"
#include "tlbench/strategy.hpp"
#include "tlbench/synthetic.hpp"

using namespace tlbench;

namespace {

CleanDataset sine(const std::string& id, double phase, std::uint64_t seed, std::size_t length = 480) {
    SinusoidOptions o;
    o.length = length;
    o.phase = phase;
    o.seed = seed;
    return clean(sinusoid_dataset(id, o), id);
}

const DatasetRegistry& registry() {
    static const DatasetRegistry r = [] {
        DatasetRegistry reg;
        reg.add(sine("A", 0.0, 1));
        reg.add(sine("B", 5.0, 2));
        reg.add(sine("C", 2.0, 3));
        reg.add(combine_datasets("AC", {&reg.get("A"), &reg.get("C")}, {"A", "C"}));
        return reg;
    }();
    return r;
}

ExperimentPlan tiny(StrategyId s, std::vector<std::string> sources, std::string target) {
    ExperimentPlan p;
    p.strategy = s;
    p.sources = std::move(sources);
    p.target = std::move(target);
    p.horizon = 24;
    p.seeds = {1, 50, 100};
    p.model.d_model = 8;
    p.model.n_heads = 2;
    p.model.n_encoder_layers = 1;
    p.model.n_decoder_layers = 1;
    p.model.ff_dim = 16;
    p.model.dropout_rate = 0.1;
    p.model.lookback = 24;
    p.train.pretrain_lr = 3e-3;
    p.train.finetune_lr = 1e-3;
    p.train.batch_size = 16;
    p.train.max_epochs = 2;
    p.train.finetune_max_epochs = 1;
    p.train.max_batches_per_epoch = 4;
    p.train.max_eval_windows = 16;
    return p;
}

bool same_bits(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

TraceEntry entry(Phase phase, const std::string& source, SegmentRole role = SegmentRole::Train) {
    TraceEntry e;
    e.phase = phase;
    e.dataset = source;
    e.source = source;
    e.member = source;
    e.building = source + "_s0";
    e.role = role;
    e.windows = 1;
    return e;
}

} // namespace

TEST_CASE("strategy predicates") {
    CHECK(parse_strategy("s7") == StrategyId::S7);
    CHECK(strategy_name(StrategyId::S2) == "S2");
    CHECK_THROWS_AS(parse_strategy("S9"), ConfigError);
    for (int i = 1; i <= 8; ++i) {
        const auto s = static_cast<StrategyId>(i);
        CHECK(is_zero_shot(s) == (i <= 2));
        CHECK(has_fine_tune(s) == (i == 3 || i == 4 || i == 7 || i == 8));
        CHECK(target_in_pretraining(s) == (i >= 5));
        CHECK(single_source(s) == (i % 2 == 1));
        CHECK(is_core_strategy(s) == (i != 3 && i != 4));
    }
}

TEST_CASE("plan validation") {
    const auto& reg = registry();
    CHECK_NOTHROW(validate_plan(tiny(StrategyId::S1, {"A"}, "B"), &reg));
    CHECK_NOTHROW(validate_plan(tiny(StrategyId::S1, {"B"}, "B"), &reg));  // baseline
    CHECK_NOTHROW(validate_plan(tiny(StrategyId::S2, {"AC"}, "B"), &reg));
    CHECK_NOTHROW(validate_plan(tiny(StrategyId::S6, {"A", "C"}, "B"), &reg));

    CHECK_THROWS_AS(validate_plan(tiny(StrategyId::S1, {"A", "C"}, "B"), &reg), PlanError);
    CHECK_THROWS_AS(validate_plan(tiny(StrategyId::S2, {"A"}, "B"), &reg), PlanError);
    CHECK_THROWS_AS(validate_plan(tiny(StrategyId::S5, {"B"}, "B"), &reg), PlanError);
    CHECK_THROWS_AS(validate_plan(tiny(StrategyId::S1, {"AC"}, "A"), &reg), PlanError);  // overlapping roots
    CHECK_THROWS_AS(validate_plan(tiny(StrategyId::S1, {"Z"}, "B"), &reg), PlanError);
    CHECK_THROWS_AS(validate_plan(tiny(StrategyId::S1, {"A"}, ""), nullptr), PlanError);
    auto p = tiny(StrategyId::S1, {"A"}, "B");
    p.horizon = 48;
    CHECK_THROWS_AS(validate_plan(p), PlanError);
    p = tiny(StrategyId::S1, {"A"}, "B");
    p.seeds = {1, 1};
    CHECK_THROWS_AS(validate_plan(p), PlanError);
    p = tiny(StrategyId::S3, {"A"}, "B");
    p.train.finetune_lr = p.train.pretrain_lr;
    CHECK_THROWS_AS(validate_plan(p), ConfigError);
    p = tiny(StrategyId::S1, {"A"}, "B");
    p.model.n_heads = 3;
    CHECK_THROWS_AS(validate_plan(p), ConfigError);
}

TEST_CASE("plan hash ignores seeds and name, tracks everything else") {
    auto a = tiny(StrategyId::S1, {"A"}, "B");
    auto b = a;
    b.seeds = {7};
    b.name = "renamed";
    CHECK(plan_hash(a) == plan_hash(b));
    CHECK(plan_hash(a).size() == 16);
    b.train.pretrain_lr = 1e-3;
    CHECK(plan_hash(a) != plan_hash(b));
    b = a;
    b.model.arch = Architecture::Informer;
    CHECK(plan_hash(a) != plan_hash(b));
    CHECK(model_label(tiny(StrategyId::S6, {"A", "C"}, "B")) == "A+C+B");
    CHECK(model_label(tiny(StrategyId::S1, {"B"}, "B")) == "B");
}

TEST_CASE("identical (plan, seed) runs are bitwise identical") {
    const auto plan = tiny(StrategyId::S3, {"A"}, "B");
    const SeedOutcome x = run_seed(plan, registry(), 50);
    const SeedOutcome y = run_seed(plan, registry(), 50);
    CHECK(same_bits(x.metrics.mae, y.metrics.mae));
    CHECK(same_bits(x.metrics.mse, y.metrics.mse));
    CHECK(metrics_json(plan, 50, x.metrics) == metrics_json(plan, 50, y.metrics));
    const SeedOutcome z = run_seed(plan, registry(), 1);
    CHECK_FALSE(same_bits(x.metrics.mae, z.metrics.mae));
}

TEST_CASE("S7 is S5 followed by fine-tuning") {
    const auto& reg = registry();
    const auto s5 = tiny(StrategyId::S5, {"A"}, "B");
    const auto s7 = tiny(StrategyId::S7, {"A"}, "B");
    const PlanData data = prepare_plan_data(s7, reg);
    CHECK(data.pretrain_corpus.building_count() == 4);

    TrainedModel pre = pretrain(Forecaster(resolve_model(s7, data.layout), 1), data.pretrain_corpus, data.layout,
                                s7.train, 1);
    const MetricSet pre_metrics = evaluate_model(pre.model, *data.target, data.layout, s7.train);
    const TrainedModel ft = fine_tune(std::move(pre), *data.target, data.layout, s7.train, 1);
    const MetricSet ft_metrics = evaluate_model(ft.model, *data.target, data.layout, s7.train);

    CHECK(same_bits(run_seed(s5, reg, 1).metrics.mae, pre_metrics.mae));
    CHECK(same_bits(run_seed(s7, reg, 1).metrics.mae, ft_metrics.mae));
}

TEST_CASE("run_strategy reports the plain three-seed mean") {
    const auto plan = tiny(StrategyId::S1, {"A"}, "B");
    const EvaluationReport r = run_strategy(plan, registry());
    REQUIRE(r.seeds.size() == 3);
    double mae_sum = 0.0, mse_sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const SeedOutcome o = run_seed(plan, registry(), plan.seeds[i]);
        CHECK(same_bits(o.metrics.mae, r.seeds[i].metrics.mae));
        mae_sum += o.metrics.mae;
        mse_sum += o.metrics.mse;
    }
    CHECK(r.mean.mae == doctest::Approx(mae_sum / 3).epsilon(1e-15));
    CHECK(r.mean.mse == doctest::Approx(mse_sum / 3).epsilon(1e-15));
    CHECK_FALSE(r.partial());
    CHECK(r.strategy == "S1");
    CHECK(r.model == "A");
}

TEST_CASE("training log: epoch 0 candidate, best checkpoint, patience") {
    auto plan = tiny(StrategyId::S1, {"A"}, "B");
    plan.train.max_epochs = 8;
    plan.train.patience = 1;
    plan.train.pretrain_lr = 0.05;
    const PlanData data = prepare_plan_data(plan, registry());
    const TrainedModel t = pretrain(Forecaster(resolve_model(plan, data.layout), 1), data.pretrain_corpus, data.layout,
                                    plan.train, 1);
    REQUIRE(!t.log.empty());
    CHECK(t.log.front().epoch == 0);
    CHECK(std::isnan(t.log.front().train_loss));
    double best = t.log.front().val_loss;
    for (const auto& r : t.log) best = std::min(best, r.val_loss);
    CHECK(t.best_val_loss == best);
    CHECK(t.log[t.best_epoch].best);
    const std::size_t last = t.log.back().epoch;
    CHECK((last == plan.train.max_epochs || last - t.best_epoch == plan.train.patience));
    // The kept weights are the best epoch's weights.
    CHECK(validation_loss(t.model, data.pretrain_corpus, data.layout, plan.train, Phase::Pretrain) ==
          doctest::Approx(t.best_val_loss).epsilon(1e-12));
}

TEST_CASE("zero epochs leave the initial model") {
    auto plan = tiny(StrategyId::S1, {"A"}, "B");
    plan.train.max_epochs = 0;
    const PlanData data = prepare_plan_data(plan, registry());
    const ModelConfig config = resolve_model(plan, data.layout);
    const TrainedModel t = pretrain(Forecaster(config, 3), data.pretrain_corpus, data.layout, plan.train, 3);
    CHECK_FALSE(t.trained);
    CHECK(t.log.size() == 1);
    const Forecaster init(config, 3);
    for (std::size_t i = 0; i < init.parameters().size(); ++i) {
        const auto a = init.parameters()[i].value.data();
        const auto b = t.model.parameters()[i].value.data();
        CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST_CASE("divergence surfaces as a TrainingError") {
    auto plan = tiny(StrategyId::S1, {"A"}, "B");
    plan.model.dropout_rate = 0.0;
    plan.train.pretrain_lr = 1e300;
    plan.train.finetune_lr = 1e299;
    CHECK_THROWS_AS(run_seed(plan, registry(), 1), TrainingError);
}

TEST_CASE("traces of real runs respect isolation") {
    const auto& reg = registry();
    const SeedOutcome s1 = run_seed(tiny(StrategyId::S1, {"A"}, "B"), reg, 1);
    CHECK(s1.isolation.passed);
    CHECK(s1.isolation.entries_checked > 0);
    for (const auto& e : s1.trace.entries()) {
        if (e.phase != Phase::Test) CHECK(e.source != "B");
        if (e.phase == Phase::Test) CHECK(e.source == "B");
    }
    const SeedOutcome s3 = run_seed(tiny(StrategyId::S3, {"A"}, "B"), reg, 1);
    bool target_ft = false;
    for (const auto& e : s3.trace.entries()) {
        if (e.phase == Phase::Pretrain) CHECK(e.source == "A");
        target_ft = target_ft || (e.phase == Phase::FineTune && e.source == "B");
    }
    CHECK(target_ft);
    CHECK(s3.trace.windows(Phase::FineTune) > 0);
}

TEST_CASE("isolation negative controls") {
    const auto s1 = tiny(StrategyId::S1, {"A"}, "B");
    const auto s3 = tiny(StrategyId::S3, {"A"}, "B");
    const auto s5 = tiny(StrategyId::S5, {"A"}, "B");
    const std::vector<std::string> roots{"B"};

    TrainingTrace clean_trace;
    clean_trace.add(entry(Phase::Pretrain, "A"));
    clean_trace.add(entry(Phase::Test, "B", SegmentRole::Test));
    CHECK(verify_isolation(s1, roots, clean_trace).passed);

    TrainingTrace leak;
    leak.add(entry(Phase::Pretrain, "B"));
    CHECK_FALSE(verify_isolation(s1, roots, leak).passed);
    CHECK(verify_isolation(s5, roots, leak).passed);
    CHECK_FALSE(verify_isolation(s3, roots, leak).passed);

    TrainingTrace ft;
    ft.add(entry(Phase::FineTune, "B"));
    CHECK(verify_isolation(s3, roots, ft).passed);
    CHECK_FALSE(verify_isolation(s1, roots, ft).passed);

    TrainingTrace test_rows;
    test_rows.add(entry(Phase::Pretrain, "A", SegmentRole::Test));
    CHECK_FALSE(verify_isolation(s5, roots, test_rows).passed);

    TrainingTrace sneaky;  // declared train, but the rows fall in the test segment
    auto e = entry(Phase::FineTune, "B");
    e.test_rows = 3;
    sneaky.add(e);
    CHECK_FALSE(verify_isolation(s5, roots, sneaky).passed);

    TrainingTrace padded;
    auto p = entry(Phase::Pretrain, "A");
    p.padded_rows = 1;
    padded.add(p);
    const auto r = verify_isolation(s5, roots, padded);
    CHECK_FALSE(r.passed);
    CHECK(r.violations.front().find("zero-padded") != std::string::npos);
}

TEST_CASE("run artifacts, resume and checkpoint reload") {
    testing::TempDir dir("runs");
    const auto plan = tiny(StrategyId::S7, {"A"}, "B");
    const RunOptions options{dir.path, true};
    const SeedOutcome first = run_seed(plan, registry(), 50, options);
    CHECK_FALSE(first.reused);
    const auto run = run_directory(dir.path, plan, 50);
    for (const char* f : {"checkpoint.bin", "train_log.csv", "metrics.json"}) CHECK(std::filesystem::exists(run / f));
    CHECK(std::filesystem::exists(run.parent_path() / "plan.json"));

    std::ifstream log(run / "train_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "phase,epoch,train_loss,val_loss,steps,best");

    const SeedOutcome again = run_seed(plan, registry(), 50, options);
    CHECK(again.reused);
    CHECK(same_bits(again.metrics.mae, first.metrics.mae));

    const Forecaster loaded = load_checkpoint(run / "checkpoint.bin");
    const PlanData data = prepare_plan_data(plan, registry());
    const MetricSet m = evaluate_model(loaded, *data.target, data.layout, plan.train);
    CHECK(same_bits(m.mae, first.metrics.mae));

    // A missing metrics.json means the seed is incomplete and reruns.
    std::filesystem::remove(run / "metrics.json");
    const SeedOutcome redo = run_seed(plan, registry(), 50, options);
    CHECK_FALSE(redo.reused);
    CHECK(same_bits(redo.metrics.mae, first.metrics.mae));
}
