#include "tlbench/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "tlbench/dataset_io.hpp"
#include "tlbench/errors.hpp"

namespace tlbench {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// --- YAML access with key paths ------------------------------------------------

struct Cursor {
    YAML::Node node;
    std::string path;

    Cursor at(const std::string& key) const { return {node[key], path.empty() ? key : path + "." + key}; }
    Cursor at(std::size_t i) const { return {node[i], path + "[" + std::to_string(i) + "]"}; }
    bool has(const std::string& key) const { return node.IsMap() && node[key].IsDefined() && !node[key].IsNull(); }

    std::string where() const {
        std::string out = path.empty() ? "<root>" : path;
        const YAML::Mark mark = node.Mark();
        if (mark.line >= 0 && node.IsDefined()) out += " (line " + std::to_string(mark.line + 1) + ")";
        return out;
    }

    [[noreturn]] void fail(const std::string& message) const { throw ConfigError(where() + ": " + message); }
};

void expect_map(const Cursor& c) {
    if (!c.node.IsMap()) c.fail("expected a mapping");
}

void only_keys(const Cursor& c, std::initializer_list<const char*> allowed) {
    expect_map(c);
    for (const auto& kv : c.node) {
        const std::string key = kv.first.as<std::string>();
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            std::string list;
            for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
            throw ConfigError((c.path.empty() ? key : c.path + "." + key) + ": unknown key (expected one of: " + list +
                              ")");
        }
    }
}

std::string text(const Cursor& c) {
    if (!c.node.IsScalar()) c.fail("expected a string");
    return c.node.Scalar();
}

double real(const Cursor& c) {
    if (!c.node.IsScalar()) c.fail("expected a number");
    try {
        return c.node.as<double>();
    } catch (const YAML::Exception&) {
        c.fail("expected a number, got '" + c.node.Scalar() + "'");
    }
}

std::int64_t integer(const Cursor& c) {
    if (!c.node.IsScalar()) c.fail("expected an integer");
    try {
        return c.node.as<std::int64_t>();
    } catch (const YAML::Exception&) {
        c.fail("expected an integer, got '" + c.node.Scalar() + "'");
    }
}

std::size_t count(const Cursor& c) {
    const std::int64_t v = integer(c);
    if (v < 0) c.fail("must not be negative");
    return static_cast<std::size_t>(v);
}

bool boolean(const Cursor& c) {
    if (!c.node.IsScalar()) c.fail("expected true or false");
    try {
        return c.node.as<bool>();
    } catch (const YAML::Exception&) {
        c.fail("expected true or false, got '" + c.node.Scalar() + "'");
    }
}

/// A scalar or a sequence of scalars.
template <class F>
auto list_of(const Cursor& c, F item) {
    using T = decltype(item(c));
    std::vector<T> out;
    if (c.node.IsSequence()) {
        for (std::size_t i = 0; i < c.node.size(); ++i) out.push_back(item(c.at(i)));
    } else if (c.node.IsScalar()) {
        out.push_back(item(c));
    } else {
        c.fail("expected a value or a list");
    }
    return out;
}

/// Rethrows a library error with the key path in front, keeping its type.
template <class F>
auto at_path(const Cursor& c, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const PlanError& e) {
        throw PlanError(c.where() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(c.where() + ": " + e.what());
    }
}

// --- sections ----------------------------------------------------------------------

void read_model(const Cursor& c, ModelConfig& m) {
    only_keys(c, {"arch", "d_model", "n_heads", "encoder_layers", "decoder_layers", "ff_dim", "dropout", "lookback",
                  "patch_len", "stride", "probsparse_factor", "allow_any_horizon"});
    if (c.has("arch")) m.arch = at_path(c.at("arch"), [&] { return parse_architecture(text(c.at("arch"))); });
    if (c.has("d_model")) m.d_model = count(c.at("d_model"));
    if (c.has("n_heads")) m.n_heads = count(c.at("n_heads"));
    if (c.has("encoder_layers")) m.n_encoder_layers = count(c.at("encoder_layers"));
    if (c.has("decoder_layers")) m.n_decoder_layers = count(c.at("decoder_layers"));
    if (c.has("ff_dim")) m.ff_dim = count(c.at("ff_dim"));
    if (c.has("dropout")) m.dropout_rate = real(c.at("dropout"));
    if (c.has("lookback")) m.lookback = count(c.at("lookback"));
    if (c.has("patch_len")) m.patch_len = count(c.at("patch_len"));
    if (c.has("stride")) m.stride = count(c.at("stride"));
    if (c.has("probsparse_factor")) m.probsparse_factor = real(c.at("probsparse_factor"));
    if (c.has("allow_any_horizon")) m.allow_any_horizon = boolean(c.at("allow_any_horizon"));
}

void read_train(const Cursor& c, TrainConfig& t) {
    only_keys(c, {"pretrain_lr", "finetune_lr", "batch_size", "max_epochs", "finetune_max_epochs", "patience",
                  "max_batches_per_epoch", "max_eval_windows", "window_stride"});
    if (c.has("pretrain_lr")) t.pretrain_lr = real(c.at("pretrain_lr"));
    if (c.has("finetune_lr")) t.finetune_lr = real(c.at("finetune_lr"));
    if (c.has("batch_size")) t.batch_size = count(c.at("batch_size"));
    if (c.has("max_epochs")) t.max_epochs = count(c.at("max_epochs"));
    if (c.has("finetune_max_epochs")) t.finetune_max_epochs = count(c.at("finetune_max_epochs"));
    if (c.has("patience")) t.patience = count(c.at("patience"));
    if (c.has("max_batches_per_epoch")) t.max_batches_per_epoch = count(c.at("max_batches_per_epoch"));
    if (c.has("max_eval_windows")) t.max_eval_windows = count(c.at("max_eval_windows"));
    if (c.has("window_stride")) t.window_stride = count(c.at("window_stride"));
}

void read_pipeline(const Cursor& c, PipelineOptions& p) {
    only_keys(c, {"sparse_threshold", "max_zeros", "split", "min_segment"});
    if (c.has("sparse_threshold")) {
        p.sparse_threshold = real(c.at("sparse_threshold"));
        if (!(p.sparse_threshold > 0.0 && p.sparse_threshold <= 1.0)) c.at("sparse_threshold").fail("must be in (0, 1]");
    }
    if (c.has("max_zeros")) p.max_zeros = count(c.at("max_zeros"));
    if (c.has("min_segment")) p.min_segment = count(c.at("min_segment"));
    if (c.has("split")) {
        const Cursor s = c.at("split");
        only_keys(s, {"train", "validation", "test"});
        if (s.has("train")) p.ratios.train = real(s.at("train"));
        if (s.has("validation")) p.ratios.validation = real(s.at("validation"));
        if (s.has("test")) p.ratios.test = real(s.at("test"));
        const double sum = p.ratios.train + p.ratios.validation + p.ratios.test;
        if (p.ratios.train <= 0 || p.ratios.validation <= 0 || p.ratios.test <= 0 || std::abs(sum - 1.0) > 1e-9) {
            s.fail("fractions must be positive and sum to 1");
        }
    }
}

std::size_t horizon_value(const Cursor& c) {
    const std::size_t h = count(c);
    if (h == 0) c.fail("horizon must be positive");
    return h;
}

std::uint64_t seed_value(const Cursor& c) {
    return static_cast<std::uint64_t>(count(c));
}

bool valid_id(const std::string& id) {
    if (id.empty()) return false;
    return std::all_of(id.begin(), id.end(), [](unsigned char ch) {
        return std::isalnum(ch) || ch == '_' || ch == '-' || ch == '.';
    });
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

struct Defaults {
    std::vector<std::size_t> horizons{24};
    std::vector<std::uint64_t> seeds{1, 50, 100};
    std::vector<Architecture> archs;  // empty: model.arch
    ModelConfig model;
    TrainConfig train;
    PipelineOptions pipeline;
};

Defaults read_defaults(const Cursor& c) {
    Defaults d;
    if (!c.node.IsDefined() || c.node.IsNull()) return d;
    only_keys(c, {"horizons", "seeds", "archs", "model", "train", "pipeline"});
    if (c.has("horizons")) d.horizons = list_of(c.at("horizons"), horizon_value);
    if (c.has("seeds")) d.seeds = list_of(c.at("seeds"), seed_value);
    if (c.has("archs")) {
        d.archs = list_of(c.at("archs"), [](const Cursor& a) {
            return at_path(a, [&] { return parse_architecture(text(a)); });
        });
    }
    if (c.has("model")) read_model(c.at("model"), d.model);
    if (c.has("train")) read_train(c.at("train"), d.train);
    if (c.has("pipeline")) read_pipeline(c.at("pipeline"), d.pipeline);
    return d;
}

DatasetEntry read_dataset(const Cursor& c, const fs::path& base, const Defaults& defaults) {
    only_keys(c, {"id", "csv", "cleaned", "synthetic", "sinusoid", "pipeline"});
    DatasetEntry e;
    if (!c.has("id")) c.fail("missing 'id'");
    e.id = text(c.at("id"));
    if (!valid_id(e.id)) c.at("id").fail("invalid id '" + e.id + "' (letters, digits, '_', '-', '.')");
    e.pipeline = defaults.pipeline;
    if (c.has("pipeline")) read_pipeline(c.at("pipeline"), e.pipeline);

    int kinds = 0;
    for (const char* k : {"csv", "cleaned", "synthetic", "sinusoid"}) kinds += c.has(k) ? 1 : 0;
    if (kinds != 1) c.fail("exactly one of csv, cleaned, synthetic or sinusoid is required");

    if (c.has("csv") || c.has("cleaned")) {
        const bool csv = c.has("csv");
        const Cursor p = c.at(csv ? "csv" : "cleaned");
        e.kind = csv ? DatasetEntry::Kind::Csv : DatasetEntry::Kind::Cleaned;
        e.path = resolve(base, text(p));
        if (!fs::exists(e.path)) p.fail("file not found: " + e.path.string());
    } else if (c.has("synthetic")) {
        const Cursor s = c.at("synthetic");
        e.kind = DatasetEntry::Kind::Synthetic;
        if (s.node.IsScalar() && s.node.Scalar() == "true") {
            // Bare `synthetic: true` uses the reference profile named by id.
        } else {
            only_keys(s, {"profile", "buildings", "schema", "climate_zone", "length", "start", "seed", "noise",
                          "missing_fraction"});
        }
        const bool detailed = s.node.IsMap();
        const std::string profile_id = detailed && s.has("profile") ? text(s.at("profile")) : e.id;
        const auto profile = find_reference_profile(profile_id);
        if (!profile) {
            (detailed && s.has("profile") ? s.at("profile") : s).fail("unknown reference profile '" + profile_id + "'");
        }
        e.profile = *profile;
        e.profile.id = e.id;
        if (detailed) {
            if (s.has("buildings")) {
                e.profile.buildings = count(s.at("buildings"));
                if (e.profile.buildings == 0) s.at("buildings").fail("must be positive");
            }
            if (s.has("schema")) {
                e.profile.schema = at_path(s.at("schema"), [&] { return FeatureSchema::parse(text(s.at("schema"))); });
            }
            if (s.has("climate_zone")) e.profile.climate_zone = text(s.at("climate_zone"));
            if (s.has("length")) e.synthetic.length = count(s.at("length"));
            if (s.has("start")) e.synthetic.start = integer(s.at("start"));
            if (s.has("seed")) e.synthetic.seed = seed_value(s.at("seed"));
            if (s.has("noise")) e.synthetic.noise = real(s.at("noise"));
            if (s.has("missing_fraction")) {
                e.synthetic.missing_fraction = real(s.at("missing_fraction"));
                if (e.synthetic.missing_fraction < 0.0 || e.synthetic.missing_fraction >= 1.0) {
                    s.at("missing_fraction").fail("must be in [0, 1)");
                }
            }
        }
    } else {
        const Cursor s = c.at("sinusoid");
        e.kind = DatasetEntry::Kind::Sinusoid;
        if (!(s.node.IsScalar() && s.node.Scalar() == "true")) {
            only_keys(s, {"buildings", "length", "start", "period", "amplitude", "phase", "phase_jitter", "noise",
                          "seed"});
            SinusoidOptions& o = e.sinusoid;
            if (s.has("buildings")) o.buildings = count(s.at("buildings"));
            if (s.has("length")) o.length = count(s.at("length"));
            if (s.has("start")) o.start = integer(s.at("start"));
            if (s.has("period")) o.period = real(s.at("period"));
            if (s.has("amplitude")) o.amplitude = real(s.at("amplitude"));
            if (s.has("phase")) o.phase = real(s.at("phase"));
            if (s.has("phase_jitter")) o.phase_jitter = real(s.at("phase_jitter"));
            if (s.has("noise")) o.noise = real(s.at("noise"));
            if (s.has("seed")) o.seed = seed_value(s.at("seed"));
            if (o.buildings == 0) s.at("buildings").fail("must be positive");
            if (!(o.period > 0.0)) s.at("period").fail("must be positive");
        }
    }
    return e;
}

TruncationDirective read_directive(const Cursor& c) {
    only_keys(c, {"drop_features", "keep_buildings", "layout"});
    if (c.node.size() != 1) c.fail("a directive has exactly one key");
    if (c.has("drop_features")) {
        const Cursor d = c.at("drop_features");
        std::string codes;
        for (const auto& s : list_of(d, text)) codes += (codes.empty() ? "" : ",") + s;
        FeatureSchema drop = at_path(d, [&] { return FeatureSchema::parse(codes); });
        if (drop.width() == 0) d.fail("no features listed");
        return FeatureTruncate{drop};
    }
    if (c.has("keep_buildings")) {
        const std::size_t n = count(c.at("keep_buildings"));
        if (n == 0) c.at("keep_buildings").fail("must be positive");
        return BuildingTruncate{n};
    }
    const Cursor l = c.at("layout");
    if (!l.node.IsSequence() || l.node.size() == 0) l.fail("expected a non-empty list of {role, fraction}");
    TemporalTruncate t;
    double sum = 0.0;
    for (std::size_t i = 0; i < l.node.size(); ++i) {
        const Cursor part = l.at(i);
        only_keys(part, {"role", "fraction"});
        if (!part.has("role") || !part.has("fraction")) part.fail("needs role and fraction");
        LayoutPart p{at_path(part.at("role"), [&] { return parse_role(text(part.at("role"))); }),
                     real(part.at("fraction"))};
        if (!(p.fraction > 0.0)) part.at("fraction").fail("must be positive");
        sum += p.fraction;
        t.layout.push_back(p);
    }
    if (std::abs(sum - 1.0) > 1e-9) l.fail("fractions sum to " + std::to_string(sum) + ", expected 1");
    return t;
}

CombinationSpec read_combination(const Cursor& c, const std::set<std::string>& known, std::vector<std::string>& base_ids) {
    only_keys(c, {"id", "category", "members"});
    CombinationSpec spec;
    if (!c.has("id")) c.fail("missing 'id'");
    spec.id = text(c.at("id"));
    if (!valid_id(spec.id)) c.at("id").fail("invalid id '" + spec.id + "'");
    if (c.has("category")) {
        spec.category = at_path(c.at("category"), [&] { return parse_category(text(c.at("category"))); });
    }
    if (!c.has("members")) {
        if (spec.category != CombinationCategory::FullEnsemble) c.fail("missing 'members'");
        for (const auto& id : base_ids) spec.members.push_back({id, id, {}});
        return spec;
    }
    const Cursor m = c.at("members");
    if (!m.node.IsSequence() || m.node.size() == 0) m.fail("expected a non-empty list");
    std::set<std::string> aliases;
    for (std::size_t i = 0; i < m.node.size(); ++i) {
        const Cursor item = m.at(i);
        CombinationMember member;
        if (item.node.IsScalar()) {
            member.dataset = text(item);
        } else {
            only_keys(item, {"dataset", "alias", "directives"});
            if (!item.has("dataset")) item.fail("missing 'dataset'");
            member.dataset = text(item.at("dataset"));
            if (item.has("alias")) member.alias = text(item.at("alias"));
            if (item.has("directives")) {
                const Cursor d = item.at("directives");
                if (!d.node.IsSequence()) d.fail("expected a list");
                for (std::size_t k = 0; k < d.node.size(); ++k) member.directives.push_back(read_directive(d.at(k)));
            }
        }
        if (!known.count(member.dataset)) {
            (item.node.IsScalar() ? item : item.at("dataset")).fail("unknown dataset '" + member.dataset + "'");
        }
        if (member.alias.empty()) member.alias = member.dataset;
        if (!aliases.insert(member.alias).second) item.fail("duplicate member '" + member.alias + "'");
        spec.members.push_back(std::move(member));
    }
    return spec;
}

void read_plans(const Cursor& c, const Defaults& defaults, const std::set<std::string>& known, CampaignConfig& out) {
    if (!c.node.IsSequence()) c.fail("expected a list");
    std::map<std::string, std::string> seen;  // hash -> path
    for (std::size_t i = 0; i < c.node.size(); ++i) {
        const Cursor p = c.at(i);
        only_keys(p, {"name", "strategy", "sources", "target", "horizon", "horizons", "arch", "archs", "seeds", "model",
                      "train"});
        for (const char* k : {"strategy", "sources", "target"}) {
            if (!p.has(k)) p.fail(std::string("missing '") + k + "'");
        }
        if (p.has("horizon") && p.has("horizons")) p.fail("use either 'horizon' or 'horizons'");
        if (p.has("arch") && p.has("archs")) p.fail("use either 'arch' or 'archs'");

        ExperimentPlan base;
        base.name = p.has("name") ? text(p.at("name")) : p.path;
        base.strategy = at_path(p.at("strategy"), [&] { return parse_strategy(text(p.at("strategy"))); });
        base.sources = list_of(p.at("sources"), text);
        base.target = text(p.at("target"));
        for (std::size_t k = 0; k < base.sources.size(); ++k) {
            const Cursor s = p.at("sources").node.IsSequence() ? p.at("sources").at(k) : p.at("sources");
            if (!known.count(base.sources[k])) s.fail("unknown dataset '" + base.sources[k] + "'");
        }
        if (!known.count(base.target)) p.at("target").fail("unknown dataset '" + base.target + "'");
        base.seeds = p.has("seeds") ? list_of(p.at("seeds"), seed_value) : defaults.seeds;
        base.model = defaults.model;
        if (p.has("model")) read_model(p.at("model"), base.model);
        base.train = defaults.train;
        if (p.has("train")) read_train(p.at("train"), base.train);

        std::vector<std::size_t> horizons = defaults.horizons;
        if (p.has("horizon")) horizons = list_of(p.at("horizon"), horizon_value);
        if (p.has("horizons")) horizons = list_of(p.at("horizons"), horizon_value);
        std::vector<Architecture> archs = defaults.archs;
        const char* arch_key = p.has("arch") ? "arch" : "archs";
        if (p.has(arch_key)) {
            archs = list_of(p.at(arch_key), [](const Cursor& a) {
                return at_path(a, [&] { return parse_architecture(text(a)); });
            });
        } else if (p.has("model") && p.at("model").has("arch")) {
            archs = {base.model.arch};
        }
        if (archs.empty()) archs = {base.model.arch};

        for (const Architecture arch : archs) {
            for (const std::size_t h : horizons) {
                ExperimentPlan plan = base;
                plan.model.arch = arch;
                plan.horizon = h;
                at_path(p, [&] { validate_plan(plan, nullptr); });
                const std::string hash = plan_hash(plan);
                const auto [it, fresh] = seen.emplace(hash, p.path);
                if (!fresh) {
                    p.fail("duplicates " + it->second + " (" + std::string(architecture_name(arch)) + ", " +
                           std::to_string(h) + "hr)");
                }
                out.plans.push_back(std::move(plan));
                out.plan_origin.push_back(p.path);
            }
        }
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string join(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
    return out;
}

} // namespace

CampaignConfig parse_campaign(const std::string& yaml_text, const fs::path& base_dir, const fs::path& source) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source.string() + ": " + e.what());
    }
    CampaignConfig config;
    config.source = source;
    const Cursor top{root, ""};
    if (!root.IsMap()) throw ConfigError(source.string() + ": expected a mapping at the top level");
    only_keys(top, {"output_root", "defaults", "datasets", "combinations", "plans"});
    if (top.has("output_root")) config.output_root = resolve(base_dir, text(top.at("output_root")));
    else config.output_root = base_dir / "tlbench-out";

    const Defaults defaults = read_defaults(top.at("defaults"));

    std::set<std::string> known;
    std::vector<std::string> base_ids;
    if (!top.has("datasets")) top.fail("missing 'datasets'");
    const Cursor ds = top.at("datasets");
    if (!ds.node.IsSequence() || ds.node.size() == 0) ds.fail("expected a non-empty list");
    for (std::size_t i = 0; i < ds.node.size(); ++i) {
        DatasetEntry e = read_dataset(ds.at(i), base_dir, defaults);
        if (!known.insert(e.id).second) ds.at(i).at("id").fail("duplicate dataset id '" + e.id + "'");
        base_ids.push_back(e.id);
        config.datasets.push_back(std::move(e));
    }
    if (top.has("combinations")) {
        const Cursor cs = top.at("combinations");
        if (!cs.node.IsSequence()) cs.fail("expected a list");
        for (std::size_t i = 0; i < cs.node.size(); ++i) {
            CombinationSpec spec = read_combination(cs.at(i), known, base_ids);
            if (!known.insert(spec.id).second) cs.at(i).at("id").fail("duplicate dataset id '" + spec.id + "'");
            config.combinations.push_back(std::move(spec));
        }
    }
    if (!top.has("plans")) top.fail("missing 'plans'");
    read_plans(top.at("plans"), defaults, known, config);
    return config;
}

CampaignConfig load_campaign(const fs::path& path) {
    return parse_campaign(read_file(path), path.parent_path().empty() ? fs::path(".") : path.parent_path(), path);
}

DatasetRegistry build_registry(const CampaignConfig& config) {
    DatasetRegistry registry;
    for (std::size_t i = 0; i < config.datasets.size(); ++i) {
        const DatasetEntry& e = config.datasets[i];
        const std::string where = "datasets[" + std::to_string(i) + "] (" + e.id + ")";
        try {
            switch (e.kind) {
            case DatasetEntry::Kind::Csv:
                registry.add(clean(load_csv(e.path), e.id, e.pipeline));
                break;
            case DatasetEntry::Kind::Cleaned: {
                CleanDataset ds = load_dataset(e.path);
                if (ds.id != e.id) throw ConfigError("file holds dataset '" + ds.id + "', expected '" + e.id + "'");
                registry.add(std::move(ds));
                break;
            }
            case DatasetEntry::Kind::Synthetic:
                registry.add(clean(generate_dataset(e.profile, e.synthetic), e.id, e.pipeline));
                break;
            case DatasetEntry::Kind::Sinusoid:
                registry.add(clean(sinusoid_dataset(e.id, e.sinusoid), e.id, e.pipeline));
                break;
            }
        } catch (const ConfigError& ex) {
            throw ConfigError(where + ": " + ex.what());
        } catch (const FormatError& ex) {
            throw FormatError(where + ": " + ex.what());
        } catch (const DataError& ex) {
            throw DataError(where + ": " + ex.what());
        }
    }
    for (std::size_t i = 0; i < config.combinations.size(); ++i) {
        const CombinationSpec& spec = config.combinations[i];
        const std::string where = "combinations[" + std::to_string(i) + "] (" + spec.id + ")";
        try {
            registry.add(combine(spec, registry));
        } catch (const ConfigError& ex) {
            throw ConfigError(where + ": " + ex.what());
        } catch (const DataError& ex) {
            throw DataError(where + ": " + ex.what());
        }
    }
    for (std::size_t i = 0; i < config.plans.size(); ++i) {
        const std::string where = i < config.plan_origin.size() ? config.plan_origin[i] : "plans";
        try {
            validate_plan(config.plans[i], &registry);
        } catch (const PlanError& ex) {
            throw PlanError(where + ": " + ex.what());
        } catch (const ConfigError& ex) {
            throw ConfigError(where + ": " + ex.what());
        }
    }
    return registry;
}

fs::path resolve_output_root(const fs::path& configured) {
    const char* env = std::getenv(kOutputRootEnv);
    if (env && *env) return fs::path(env);
    return configured;
}

std::string plan_descriptor(const ExperimentPlan& plan) {
    return plan.name + " " + strategy_name(plan.strategy) + " " + join(plan.sources, ",") + " -> " + plan.target + " " +
           std::string(architecture_name(plan.model.arch)) + " " + std::to_string(plan.horizon) + "hr " +
           plan_hash(plan);
}

CampaignSummary run_campaign(const CampaignConfig& config, const DatasetRegistry& registry,
                             const CampaignOptions& options) {
    std::regex filter;
    if (!options.filter.empty()) {
        try {
            filter = std::regex(options.filter, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ConfigError("--filter: invalid regex '" + options.filter + "': " + e.what());
        }
    }
    std::vector<const ExperimentPlan*> selected;
    for (const auto& plan : config.plans) {
        if (options.filter.empty() || std::regex_search(plan_descriptor(plan), filter)) selected.push_back(&plan);
    }

    CampaignSummary summary;
    summary.plans_selected = selected.size();
    const fs::path root = options.output_root;
    fs::create_directories(root / "runs");

    struct SeedState {
        std::string status = "pending";
        MetricSet metrics;
        bool reused = false;
        std::string error;
    };
    std::vector<std::vector<SeedState>> states(selected.size());
    std::vector<std::string> plan_errors(selected.size());
    std::vector<PlanData> data(selected.size());
    for (std::size_t p = 0; p < selected.size(); ++p) {
        states[p].resize(selected[p]->seeds.size());
        try {
            data[p] = prepare_plan_data(*selected[p], registry);
        } catch (const Error& e) {
            plan_errors[p] = e.what();
        }
    }

    auto write_manifest = [&] {
        json j;
        j["config"] = config.source.string();
        j["output_root"] = root.string();
        j["filter"] = options.filter;
        j["plans"] = json::array();
        for (std::size_t p = 0; p < selected.size(); ++p) {
            json plan;
            plan["hash"] = plan_hash(*selected[p]);
            plan["descriptor"] = plan_descriptor(*selected[p]);
            if (!plan_errors[p].empty()) plan["error"] = plan_errors[p];
            plan["seeds"] = json::array();
            std::string status = plan_errors[p].empty() ? "done" : "failed";
            for (std::size_t s = 0; s < states[p].size(); ++s) {
                if (states[p][s].status == "failed") status = "failed";
                else if (states[p][s].status != "done" && status == "done") status = "pending";
                const SeedState& st = states[p][s];
                json seed{{"seed", selected[p]->seeds[s]}, {"status", st.status}};
                if (st.status == "done") {
                    seed["mae"] = st.metrics.mae;
                    seed["mse"] = st.metrics.mse;
                    seed["reused"] = st.reused;
                }
                if (!st.error.empty()) seed["error"] = st.error;
                plan["seeds"].push_back(seed);
            }
            plan["status"] = status;
            j["plans"].push_back(plan);
        }
        write_text(root / "manifest.json", j.dump(2) + "\n");
    };
    write_manifest();

    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t p = 0; p < selected.size(); ++p) {
        if (!plan_errors[p].empty()) {
            for (auto& st : states[p]) {
                st.status = "failed";
                st.error = plan_errors[p];
            }
            continue;
        }
        for (std::size_t s = 0; s < states[p].size(); ++s) jobs.emplace_back(p, s);
    }

    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::size_t finished = 0;
    auto worker = [&] {
        for (;;) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            const auto [p, s] = jobs[j];
            const ExperimentPlan& plan = *selected[p];
            const std::uint64_t seed = plan.seeds[s];
            SeedState st;
            try {
                const SeedOutcome outcome = run_seed(plan, data[p], seed, RunOptions{root, true});
                st.status = "done";
                st.metrics = outcome.metrics;
                st.reused = outcome.reused;
            } catch (const std::exception& e) {
                st.status = "failed";
                st.error = e.what();
            }
            std::lock_guard lock(mutex);
            states[p][s] = st;
            ++finished;
            char line[512];
            if (st.status == "done") {
                std::snprintf(line, sizeof(line), "[%zu/%zu] %s seed %llu: mae %.4f mse %.4f%s", finished, jobs.size(),
                              plan.name.c_str(), static_cast<unsigned long long>(seed), st.metrics.mae, st.metrics.mse,
                              st.reused ? " (reused)" : "");
            } else {
                std::snprintf(line, sizeof(line), "[%zu/%zu] %s seed %llu: FAILED: %s", finished, jobs.size(),
                              plan.name.c_str(), static_cast<unsigned long long>(seed), st.error.c_str());
            }
            std::cerr << line << '\n';
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.parallel, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (std::size_t p = 0; p < selected.size(); ++p) {
        const ExperimentPlan& plan = *selected[p];
        PlanStatus status{plan_hash(plan), plan_descriptor(plan), "done", {}};
        EvaluationReport report = empty_report(plan);
        for (std::size_t s = 0; s < states[p].size(); ++s) {
            const SeedState& st = states[p][s];
            if (st.status == "done") {
                report.seeds.push_back({plan.seeds[s], st.metrics});
                ++(st.reused ? summary.seeds_reused : summary.seeds_trained);
            } else {
                ++summary.failures;
                status.status = "failed";
                status.errors.push_back("seed " + std::to_string(plan.seeds[s]) + ": " + st.error);
            }
        }
        finalize(report);
        summary.statuses.push_back(std::move(status));
        summary.reports.push_back(std::move(report));
    }
    write_manifest();
    return summary;
}

std::vector<EvaluationReport> collect_reports(const fs::path& output_root, std::vector<std::string>* warnings) {
    std::vector<EvaluationReport> reports;
    const fs::path runs = output_root / "runs";
    if (!fs::is_directory(runs)) return reports;
    auto warn = [&](const std::string& w) {
        if (warnings) warnings->push_back(w);
    };
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(runs)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        const fs::path plan_file = dir / "plan.json";
        if (!fs::exists(plan_file)) {
            warn(dir.string() + ": no plan.json, skipped");
            continue;
        }
        EvaluationReport r;
        std::vector<std::uint64_t> seeds;
        try {
            const json p = json::parse(read_file(plan_file));
            r.plan_id = p.at("hash").get<std::string>();
            r.strategy = p.at("baseline").get<bool>() ? "baseline" : p.at("strategy").get<std::string>();
            r.model = p.at("model").get<std::string>();
            r.target = p.at("target").get<std::string>();
            r.arch = p.at("arch").get<std::string>();
            r.horizon = p.at("horizon").get<std::size_t>();
            r.core_strategy = p.at("core_strategy").get<bool>();
            seeds = p.at("seeds").get<std::vector<std::uint64_t>>();
        } catch (const std::exception& e) {
            warn(plan_file.string() + ": unreadable (" + e.what() + "), skipped");
            continue;
        }
        r.expected_seeds = seeds.size();
        for (const auto seed : seeds) {
            const fs::path m = dir / std::to_string(seed) / "metrics.json";
            if (!fs::exists(m)) {
                warn(m.string() + ": missing, seed " + std::to_string(seed) + " not counted");
                continue;
            }
            try {
                const json j = json::parse(read_file(m));
                if (j.at("plan").get<std::string>() != r.plan_id || j.at("seed").get<std::uint64_t>() != seed) {
                    warn(m.string() + ": belongs to another plan or seed, ignored");
                    continue;
                }
                MetricSet ms{j.at("mae").get<double>(), j.at("mse").get<double>(), r.horizon,
                             j.at("n_predictions").get<std::size_t>()};
                r.seeds.push_back({seed, ms});
            } catch (const std::exception& e) {
                warn(m.string() + ": unreadable (" + e.what() + "), ignored");
            }
        }
        if (r.seeds.empty()) {
            warn("plan " + r.plan_id + " (" + r.model + " -> " + r.target + "): no completed seeds");
            continue;
        }
        finalize(r);
        reports.push_back(std::move(r));
    }
    std::sort(reports.begin(), reports.end(), [](const EvaluationReport& a, const EvaluationReport& b) {
        return std::tie(a.arch, a.horizon, a.model, a.target, a.strategy) <
               std::tie(b.arch, b.horizon, b.model, b.target, b.strategy);
    });
    return reports;
}

std::vector<fs::path> write_tables(const fs::path& output_root, const std::vector<RenderedTable>& tables) {
    std::vector<fs::path> written;
    const fs::path dir = output_root / "results" / "tables";
    for (const auto& t : tables) {
        write_text(dir / (t.name + ".txt"), t.text);
        write_text(dir / (t.name + ".csv"), t.csv);
        written.push_back(dir / (t.name + ".txt"));
        written.push_back(dir / (t.name + ".csv"));
    }
    return written;
}

} // namespace tlbench
