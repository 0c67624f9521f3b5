#include "tlbench/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tlbench/errors.hpp"
#include "tlbench/hash.hpp"
#include "tlbench/optim.hpp"
#include "tlbench/rng.hpp"

namespace tlbench {

using nlohmann::json;

// --- strategy ids ------------------------------------------------------------

std::string strategy_name(StrategyId id) {
    return "S" + std::to_string(static_cast<int>(id));
}

StrategyId parse_strategy(std::string_view text) {
    if (text.size() == 2 && (text[0] == 'S' || text[0] == 's') && text[1] >= '1' && text[1] <= '8') {
        return static_cast<StrategyId>(text[1] - '0');
    }
    throw ConfigError("unknown strategy '" + std::string(text) + "' (expected S1..S8)");
}

bool is_zero_shot(StrategyId id) {
    return id == StrategyId::S1 || id == StrategyId::S2;
}

bool has_fine_tune(StrategyId id) {
    return id == StrategyId::S3 || id == StrategyId::S4 || id == StrategyId::S7 || id == StrategyId::S8;
}

bool target_in_pretraining(StrategyId id) {
    return static_cast<int>(id) >= 5;
}

bool single_source(StrategyId id) {
    return static_cast<int>(id) % 2 == 1;
}

bool is_core_strategy(StrategyId id) {
    return id != StrategyId::S3 && id != StrategyId::S4;
}

void validate(const TrainConfig& c) {
    if (!(c.pretrain_lr > 0.0) || !(c.finetune_lr > 0.0)) throw ConfigError("train: learning rates must be positive");
    if (!(c.finetune_lr < c.pretrain_lr)) throw ConfigError("train: finetune_lr must be below pretrain_lr");
    if (c.batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (c.patience == 0) throw ConfigError("train: patience must be positive");
    if (c.window_stride == 0) throw ConfigError("train: window_stride must be positive");
}

bool is_baseline(const ExperimentPlan& plan) {
    return plan.strategy == StrategyId::S1 && plan.sources.size() == 1 && plan.sources.front() == plan.target;
}

std::string canonical_plan(const ExperimentPlan& p) {
    // Seeds are left out on purpose: each seed has its own run directory
    // under the plan hash, so adding a seed reuses the others.
    std::ostringstream out;
    char buf[64];
    auto real = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    const ModelConfig& m = p.model;
    const TrainConfig& t = p.train;
    out << "strategy=" << strategy_name(p.strategy) << ";sources=";
    for (std::size_t i = 0; i < p.sources.size(); ++i) out << (i ? "," : "") << p.sources[i];
    out << ";target=" << p.target << ";horizon=" << p.horizon;
    out << ";arch=" << architecture_name(m.arch) << ";d_model=" << m.d_model << ";n_heads=" << m.n_heads
        << ";enc=" << m.n_encoder_layers << ";dec=" << m.n_decoder_layers << ";ff=" << m.ff_dim
        << ";dropout=" << real(m.dropout_rate) << ";lookback=" << m.lookback << ";patch_len=" << m.patch_len
        << ";stride=" << m.stride << ";factor=" << real(m.probsparse_factor) << ";any_h=" << m.allow_any_horizon;
    out << ";pretrain_lr=" << real(t.pretrain_lr) << ";finetune_lr=" << real(t.finetune_lr)
        << ";batch=" << t.batch_size << ";epochs=" << t.max_epochs << ";ft_epochs=" << t.finetune_max_epochs
        << ";patience=" << t.patience << ";max_batches=" << t.max_batches_per_epoch
        << ";max_eval=" << t.max_eval_windows << ";window_stride=" << t.window_stride;
    return out.str();
}

std::string plan_hash(const ExperimentPlan& plan) {
    return hex64(fnv1a64(canonical_plan(plan)));
}

namespace {

std::vector<std::string> roots_of(const std::vector<std::string>& ids, const DatasetRegistry& registry) {
    std::vector<std::string> out;
    for (const auto& id : ids) {
        for (const auto& r : registry.get(id).sources()) {
            if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
    return out;
}

} // namespace

void validate_plan(const ExperimentPlan& plan, const DatasetRegistry* registry) {
    const std::string who = "plan " + (plan.name.empty() ? strategy_name(plan.strategy) + "->" + plan.target : plan.name);
    if (plan.target.empty()) throw PlanError(who + ": target is empty");
    if (plan.sources.empty()) throw PlanError(who + ": no sources");
    if (plan.seeds.empty()) throw PlanError(who + ": no seeds");
    if (std::set<std::uint64_t>(plan.seeds.begin(), plan.seeds.end()).size() != plan.seeds.size()) {
        throw PlanError(who + ": duplicate seeds");
    }
    if (std::set<std::string>(plan.sources.begin(), plan.sources.end()).size() != plan.sources.size()) {
        throw PlanError(who + ": duplicate sources");
    }
    const bool baseline = is_baseline(plan);
    if (single_source(plan.strategy) && plan.sources.size() != 1) {
        throw PlanError(who + ": " + strategy_name(plan.strategy) + " takes exactly one source");
    }
    if (!baseline && std::find(plan.sources.begin(), plan.sources.end(), plan.target) != plan.sources.end()) {
        throw PlanError(who + ": target '" + plan.target + "' must not be listed as a source");
    }
    if (plan.horizon == 0) throw PlanError(who + ": horizon must be positive");
    if (!plan.model.allow_any_horizon && plan.horizon != 24 && plan.horizon != 96) {
        throw PlanError(who + ": horizon must be 24 or 96");
    }
    validate(plan.train);
    ModelConfig m = plan.model;
    m.horizon = plan.horizon;
    validate(m);

    if (!registry) return;
    for (const auto& id : plan.sources) {
        if (!registry->contains(id)) throw PlanError(who + ": unknown source dataset '" + id + "'");
    }
    if (!registry->contains(plan.target)) throw PlanError(who + ": unknown target dataset '" + plan.target + "'");
    if (baseline) return;
    const auto source_roots = roots_of(plan.sources, *registry);
    if (single_source(plan.strategy) && source_roots.size() != 1) {
        throw PlanError(who + ": " + strategy_name(plan.strategy) + " needs one source dataset, got " +
                        std::to_string(source_roots.size()) + " (" + join(source_roots, ", ") + ")");
    }
    if (!single_source(plan.strategy) && source_roots.size() < 2) {
        throw PlanError(who + ": " + strategy_name(plan.strategy) + " needs at least two source datasets");
    }
    if (!target_in_pretraining(plan.strategy)) {
        for (const auto& r : registry->get(plan.target).sources()) {
            if (std::find(source_roots.begin(), source_roots.end(), r) != source_roots.end()) {
                throw PlanError(who + ": source data overlaps the target (" + r + ")");
            }
        }
    }
}

ModelConfig resolve_model(const ExperimentPlan& plan, const InputLayout& layout) {
    ModelConfig m = plan.model;
    m.horizon = plan.horizon;
    m.input_width = layout.width();
    validate(m);
    return m;
}

// --- trace -------------------------------------------------------------------

std::string_view phase_name(Phase phase) {
    switch (phase) {
    case Phase::Pretrain:
        return "pretrain";
    case Phase::FineTune:
        return "finetune";
    case Phase::Test:
        return "test";
    }
    return "unknown";
}

void TrainingTrace::record(Phase phase, const CleanDataset& ds, const WindowRef& window, std::size_t span,
                           SegmentRole role) {
    const auto key = std::make_tuple(static_cast<int>(phase), ds.id, window.building, static_cast<int>(role));
    auto it = index_.find(key);
    if (it == index_.end()) {
        const CleanBuilding& b = ds.buildings.at(window.building);
        TraceEntry e;
        e.phase = phase;
        e.dataset = ds.id;
        e.source = b.source;
        e.member = b.member;
        e.building = b.name;
        e.role = role;
        e.first_row = window.start;
        e.last_row = window.start + span;
        entries_.push_back(std::move(e));
        it = index_.emplace(key, entries_.size() - 1).first;
    }
    TraceEntry& e = entries_[it->second];
    const Site& site = ds.sites[ds.buildings[window.building].site];
    const std::size_t begin = window.start;
    const std::size_t end = window.start + span;
    for (const auto& seg : site.layout.segments) {
        if (seg.role != SegmentRole::Test) continue;
        const std::size_t lo = std::max(begin, seg.begin);
        const std::size_t hi = std::min(end, seg.end);
        if (lo < hi) e.test_rows += hi - lo;
    }
    if (!site.pad_mask.empty()) {
        for (std::size_t t = begin; t < end; ++t) e.padded_rows += site.pad_mask[t] ? 1 : 0;
    }
    e.windows += 1;
    e.first_row = std::min(e.first_row, begin);
    e.last_row = std::max(e.last_row, end);
}

void TrainingTrace::add(TraceEntry entry) {
    entries_.push_back(std::move(entry));
}

std::size_t TrainingTrace::windows(Phase phase) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.phase == phase) n += e.windows;
    }
    return n;
}

IsolationResult verify_isolation(const ExperimentPlan& plan, const std::vector<std::string>& target_roots,
                                 const TrainingTrace& trace) {
    IsolationResult result;
    const bool baseline = is_baseline(plan);
    auto is_target = [&](const std::string& source) {
        return std::find(target_roots.begin(), target_roots.end(), source) != target_roots.end();
    };
    auto fail = [&](const TraceEntry& e, const std::string& why) {
        result.passed = false;
        result.violations.push_back(std::string(phase_name(e.phase)) + " " + e.source + "/" + e.building + " (" +
                                    std::string(role_name(e.role)) + ", " + std::to_string(e.windows) +
                                    " windows): " + why);
    };
    for (const auto& e : trace.entries()) {
        if (e.phase == Phase::Test) continue;
        ++result.entries_checked;
        if (e.role == SegmentRole::Test || e.test_rows > 0) fail(e, "test-split rows consumed during training");
        if (e.role == SegmentRole::ZeroPadExcluded || e.padded_rows > 0) fail(e, "zero-padded rows consumed");
        if (baseline || !is_target(e.source)) continue;
        if (is_zero_shot(plan.strategy)) {
            fail(e, "target data consumed by a zero-shot plan");
        } else if (e.phase == Phase::Pretrain && !target_in_pretraining(plan.strategy)) {
            fail(e, "target data consumed during pretraining");
        }
    }
    return result;
}

// --- training ----------------------------------------------------------------

namespace {

std::vector<WindowRef> cap_windows(std::vector<WindowRef> windows, std::size_t cap) {
    if (cap == 0 || windows.size() <= cap) return windows;
    std::vector<WindowRef> out;
    out.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) out.push_back(windows[i * windows.size() / cap]);
    return out;
}

struct Predictions {
    std::vector<double> forecast;
    std::vector<double> actual;
};

Predictions predict(const Forecaster& model, const CleanDataset& ds, const std::vector<WindowRef>& windows,
                    const InputLayout& layout, std::size_t batch_size, Phase phase, SegmentRole role,
                    TrainingTrace* trace) {
    NoGradGuard no_grad;
    Predictions out;
    out.forecast.reserve(windows.size() * layout.horizon);
    out.actual.reserve(windows.size() * layout.horizon);
    for (std::size_t i = 0; i < windows.size(); i += batch_size) {
        const std::size_t n = std::min(batch_size, windows.size() - i);
        const std::span<const WindowRef> chunk(windows.data() + i, n);
        if (trace) {
            for (const auto& w : chunk) trace->record(phase, ds, w, layout.lookback + layout.horizon, role);
        }
        const ForecastBatch batch = assemble_batch(ds, chunk, layout);
        const Tensor pred = model.forward(batch.x_past, false);
        out.forecast.insert(out.forecast.end(), pred.data().begin(), pred.data().end());
        out.actual.insert(out.actual.end(), batch.y_future.data().begin(), batch.y_future.data().end());
    }
    return out;
}

void check_width(const Forecaster& model, const InputLayout& layout) {
    const ModelConfig& c = model.config();
    if (c.input_width != layout.width() || c.lookback != layout.lookback || c.horizon != layout.horizon) {
        throw ConfigError("model expects inputs of width " + std::to_string(c.input_width) + " (L=" +
                          std::to_string(c.lookback) + ", H=" + std::to_string(c.horizon) + ") but the data provide " +
                          std::to_string(layout.width()) + " (L=" + std::to_string(layout.lookback) +
                          ", H=" + std::to_string(layout.horizon) + ")");
    }
}

struct LoopSettings {
    Phase phase;
    double lr;
    std::size_t max_epochs;
    RngStream shuffle;
    RngStream dropout;
};

TrainedModel train_loop(Forecaster model, std::vector<EpochRecord> log, const CleanDataset& ds,
                        const InputLayout& layout, const TrainConfig& train, std::uint64_t seed,
                        const LoopSettings& settings, TrainingTrace* trace) {
    check_width(model, layout);
    const std::size_t span = layout.lookback + layout.horizon;
    const std::vector<WindowRef> windows =
        make_windows(ds, SegmentRole::Train, layout.lookback, layout.horizon, train.window_stride);
    if (windows.empty()) throw ConfigError("training: '" + ds.id + "' yields no training windows");

    double best_val = validation_loss(model, ds, layout, train, settings.phase, trace);
    log.push_back({settings.phase, 0, std::numeric_limits<double>::quiet_NaN(), best_val, 0, true});
    if (settings.max_epochs == 0) return {std::move(model), std::move(log), false, best_val, 0};

    Forecaster best = model.clone();
    std::size_t best_epoch = 0;
    Adam optimizer(model.parameter_tensors(), AdamHyper{settings.lr});
    Rng shuffle(seed, settings.shuffle);
    Rng dropout(seed, settings.dropout);
    std::vector<std::size_t> order(windows.size());
    std::size_t stale = 0;
    std::size_t steps = 0;
    for (std::size_t epoch = 1; epoch <= settings.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.below(i)]);
        }
        std::size_t batches = (order.size() + train.batch_size - 1) / train.batch_size;
        if (train.max_batches_per_epoch) batches = std::min(batches, train.max_batches_per_epoch);
        double loss_total = 0.0;
        std::vector<WindowRef> chunk;
        for (std::size_t b = 0; b < batches; ++b) {
            chunk.clear();
            const std::size_t lo = b * train.batch_size;
            const std::size_t hi = std::min(order.size(), lo + train.batch_size);
            for (std::size_t i = lo; i < hi; ++i) chunk.push_back(windows[order[i]]);
            if (trace) {
                for (const auto& w : chunk) trace->record(settings.phase, ds, w, span, SegmentRole::Train);
            }
            const ForecastBatch batch = assemble_batch(ds, chunk, layout);
            try {
                optimizer.zero_grad();
                const Tensor loss = mse_loss(model.forward(batch.x_past, true, &dropout), batch.y_future);
                const double value = loss.item();
                if (!std::isfinite(value)) throw NumericError("non-finite loss");
                loss.backward();
                optimizer.step();
                loss_total += value;
            } catch (const NumericError& e) {
                throw TrainingError(std::string(phase_name(settings.phase)) + " diverged on '" + ds.id + "' at epoch " +
                                    std::to_string(epoch) + ", batch " + std::to_string(b) + " (lr " +
                                    std::to_string(settings.lr) + "): " + e.what());
            }
            ++steps;
        }
        const double val = validation_loss(model, ds, layout, train, settings.phase, trace);
        if (!std::isfinite(val)) {
            throw TrainingError(std::string(phase_name(settings.phase)) + " produced a non-finite validation loss at epoch " +
                                std::to_string(epoch));
        }
        const bool improved = val < best_val;
        log.push_back({settings.phase, epoch, loss_total / static_cast<double>(batches), val, steps, improved});
        if (improved) {
            best_val = val;
            best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else if (++stale >= train.patience) {
            break;
        }
    }
    return {std::move(best), std::move(log), true, best_val, best_epoch};
}

} // namespace

double validation_loss(const Forecaster& model, const CleanDataset& ds, const InputLayout& layout,
                       const TrainConfig& train, Phase phase, TrainingTrace* trace) {
    auto windows = cap_windows(make_windows(ds, SegmentRole::Validation, layout.lookback, layout.horizon),
                               train.max_eval_windows);
    if (windows.empty()) throw ConfigError("validation: '" + ds.id + "' yields no validation windows");
    const Predictions p = predict(model, ds, windows, layout, train.batch_size, phase, SegmentRole::Validation, trace);
    return mse(p.forecast, p.actual);
}

MetricSet evaluate_model(const Forecaster& model, const CleanDataset& ds, const InputLayout& layout,
                         const TrainConfig& train, TrainingTrace* trace) {
    check_width(model, layout);
    auto windows =
        cap_windows(make_windows(ds, SegmentRole::Test, layout.lookback, layout.horizon), train.max_eval_windows);
    if (windows.empty()) throw ConfigError("evaluation: '" + ds.id + "' yields no test windows");
    const Predictions p = predict(model, ds, windows, layout, train.batch_size, Phase::Test, SegmentRole::Test, trace);
    return evaluate(p.forecast, p.actual, layout.horizon);
}

MetricSet evaluate_split(const Forecaster& model, const CleanDataset& ds, const InputLayout& layout,
                         const TrainConfig& train, SegmentRole role) {
    check_width(model, layout);
    auto windows = cap_windows(make_windows(ds, role, layout.lookback, layout.horizon), train.max_eval_windows);
    if (windows.empty()) throw ConfigError("evaluation: '" + ds.id + "' yields no " + std::string(role_name(role)) + " windows");
    const Predictions p = predict(model, ds, windows, layout, train.batch_size, Phase::Test, role, nullptr);
    return evaluate(p.forecast, p.actual, layout.horizon);
}

TrainedModel pretrain(Forecaster model, const CleanDataset& corpus, const InputLayout& layout, const TrainConfig& train,
                      std::uint64_t seed, TrainingTrace* trace) {
    validate(train);
    return train_loop(std::move(model), {}, corpus, layout, train, seed,
                      {Phase::Pretrain, train.pretrain_lr, train.max_epochs, RngStream::Shuffle, RngStream::Dropout},
                      trace);
}

TrainedModel fine_tune(TrainedModel pretrained, const CleanDataset& target, const InputLayout& layout,
                       const TrainConfig& train, std::uint64_t seed, TrainingTrace* trace) {
    validate(train);
    TrainedModel out = train_loop(std::move(pretrained.model), std::move(pretrained.log), target, layout, train, seed,
                                  {Phase::FineTune, train.finetune_lr, train.finetune_max_epochs,
                                   RngStream::FineTuneShuffle, RngStream::FineTuneDropout},
                                  trace);
    out.trained = out.trained || pretrained.trained;
    return out;
}

// --- runs --------------------------------------------------------------------

std::string model_label(const ExperimentPlan& plan) {
    if (is_baseline(plan)) return plan.target;
    std::vector<std::string> parts = plan.sources;
    if (target_in_pretraining(plan.strategy)) parts.push_back(plan.target);
    return join(parts, "+");
}

PlanData prepare_plan_data(const ExperimentPlan& plan, const DatasetRegistry& registry) {
    PlanData data;
    data.target = &registry.get(plan.target);
    std::vector<const CleanDataset*> members;
    std::vector<std::string> tags;
    for (const auto& id : plan.sources) {
        members.push_back(&registry.get(id));
        tags.push_back(id);
    }
    if (target_in_pretraining(plan.strategy)) {
        members.push_back(data.target);
        tags.push_back(plan.target);
    }
    data.pretrain_corpus = combine_datasets(model_label(plan), members, tags);
    data.layout.schema = data.pretrain_corpus.schema().unite(data.target->schema());
    data.layout.lookback = plan.model.lookback;
    data.layout.horizon = plan.horizon;
    data.target_roots = data.target->sources();
    return data;
}

std::filesystem::path run_directory(const std::filesystem::path& output_root, const ExperimentPlan& plan,
                                    std::uint64_t seed) {
    return output_root / "runs" / plan_hash(plan) / std::to_string(seed);
}

std::string metrics_json(const ExperimentPlan& plan, std::uint64_t seed, const MetricSet& metrics) {
    json j;
    j["plan"] = plan_hash(plan);
    j["seed"] = seed;
    j["horizon"] = plan.horizon;
    j["mae"] = metrics.mae;
    j["mse"] = metrics.mse;
    j["n_predictions"] = metrics.n_predictions;
    j["strategy"] = strategy_name(plan.strategy);
    j["target"] = plan.target;
    return j.dump(2) + "\n";
}

std::string plan_json(const ExperimentPlan& plan) {
    json j;
    j["hash"] = plan_hash(plan);
    j["name"] = plan.name;
    j["strategy"] = strategy_name(plan.strategy);
    j["baseline"] = is_baseline(plan);
    j["core_strategy"] = is_core_strategy(plan.strategy);
    j["sources"] = plan.sources;
    j["target"] = plan.target;
    j["model"] = model_label(plan);
    j["arch"] = std::string(architecture_name(plan.model.arch));
    j["horizon"] = plan.horizon;
    j["seeds"] = plan.seeds;
    j["canonical"] = canonical_plan(plan);
    return j.dump(2) + "\n";
}

EvaluationReport empty_report(const ExperimentPlan& plan) {
    EvaluationReport r;
    r.plan_id = plan_hash(plan);
    r.strategy = is_baseline(plan) ? "baseline" : strategy_name(plan.strategy);
    r.model = model_label(plan);
    r.target = plan.target;
    r.arch = std::string(architecture_name(plan.model.arch));
    r.horizon = plan.horizon;
    r.expected_seeds = plan.seeds.size();
    r.core_strategy = is_core_strategy(plan.strategy);
    return r;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string train_log_csv(const std::vector<EpochRecord>& log) {
    std::string out = "phase,epoch,train_loss,val_loss,steps,best\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%.17g,%zu,%d\n", std::string(phase_name(r.phase)).c_str(), r.epoch,
                      r.train_loss, r.val_loss, r.steps, r.best ? 1 : 0);
        out += buf;
    }
    return out;
}

std::optional<MetricSet> read_metrics(const std::filesystem::path& path, const ExperimentPlan& plan,
                                      std::uint64_t seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
        const json j = json::parse(in);
        if (j.at("plan").get<std::string>() != plan_hash(plan) || j.at("seed").get<std::uint64_t>() != seed) {
            return std::nullopt;
        }
        MetricSet m;
        m.mae = j.at("mae").get<double>();
        m.mse = j.at("mse").get<double>();
        m.horizon = j.at("horizon").get<std::size_t>();
        m.n_predictions = j.value("n_predictions", std::size_t{0});
        return m;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

} // namespace

SeedOutcome run_seed(const ExperimentPlan& plan, const PlanData& data, std::uint64_t seed, const RunOptions& options) {
    SeedOutcome outcome;
    outcome.seed = seed;
    std::filesystem::path dir;
    if (options.output_root) {
        dir = run_directory(*options.output_root, plan, seed);
        if (options.resume) {
            if (auto m = read_metrics(dir / "metrics.json", plan, seed)) {
                outcome.metrics = *m;
                outcome.reused = true;
                return outcome;
            }
        }
    }

    const ModelConfig config = resolve_model(plan, data.layout);
    TrainedModel trained = pretrain(Forecaster(config, seed), data.pretrain_corpus, data.layout, plan.train, seed,
                                    &outcome.trace);
    if (has_fine_tune(plan.strategy)) {
        trained = fine_tune(std::move(trained), *data.target, data.layout, plan.train, seed, &outcome.trace);
    }
    outcome.metrics = evaluate_model(trained.model, *data.target, data.layout, plan.train, &outcome.trace);
    outcome.log = trained.log;
    outcome.isolation = verify_isolation(plan, data.target_roots, outcome.trace);
    if (!outcome.isolation.passed) {
        throw ContractError("isolation violated for plan " + plan_hash(plan) + " seed " + std::to_string(seed) + ": " +
                            outcome.isolation.violations.front());
    }

    if (options.output_root) {
        std::filesystem::create_directories(dir);
        save_checkpoint(dir / "checkpoint.bin", trained.model);
        write_text(dir / "train_log.csv", train_log_csv(outcome.log));
        write_text(dir.parent_path() / "plan.json", plan_json(plan));
        // Written last: its presence marks the seed as complete.
        write_text(dir / "metrics.json", metrics_json(plan, seed, outcome.metrics));
    }
    return outcome;
}

SeedOutcome run_seed(const ExperimentPlan& plan, const DatasetRegistry& registry, std::uint64_t seed,
                     const RunOptions& options) {
    validate_plan(plan, &registry);
    return run_seed(plan, prepare_plan_data(plan, registry), seed, options);
}

EvaluationReport run_strategy(const ExperimentPlan& plan, const DatasetRegistry& registry, const RunOptions& options) {
    validate_plan(plan, &registry);
    const PlanData data = prepare_plan_data(plan, registry);
    EvaluationReport report = empty_report(plan);
    for (auto seed : plan.seeds) {
        const SeedOutcome outcome = run_seed(plan, data, seed, options);
        report.seeds.push_back({seed, outcome.metrics});
    }
    finalize(report);
    return report;
}

} // namespace tlbench
