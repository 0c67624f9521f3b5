#include "tlbench/combination.hpp"

#include <algorithm>
#include <cstdio>

#include "tlbench/errors.hpp"

namespace tlbench {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

CleanDataset drop_features(const CleanDataset& ds, const FeatureSchema& drop) {
    if (drop.width() == 0) throw ConfigError("truncate: feature list is empty");
    const FeatureSchema present = ds.schema();
    for (auto f : drop.features()) {
        if (!present.has(f)) {
            throw ConfigError("truncate: dataset '" + ds.id + "' has no " + std::string(abbreviation(f)) + " column");
        }
    }
    CleanDataset out = ds;
    for (auto& site : out.sites) {
        for (auto f : drop.features()) {
            const auto i = static_cast<std::size_t>(f);
            site.weather[i].clear();
            site.weather_scale[i] = {};
        }
        site.schema = site.schema.without(drop);
    }
    return out;
}

CleanDataset keep_buildings(const CleanDataset& ds, std::size_t keep) {
    if (keep == 0 || keep > ds.building_count()) {
        throw ConfigError("truncate: keep_count " + std::to_string(keep) + " is outside 1.." +
                          std::to_string(ds.building_count()) + " for '" + ds.id + "'");
    }
    CleanDataset out = ds;
    out.buildings.resize(keep);
    return out;
}

CleanDataset relayout(const CleanDataset& ds, const std::vector<LayoutPart>& parts) {
    const SplitLayout layout = layout_from_fractions(ds.length(), parts);
    CleanDataset out = ds;
    for (std::size_t s = 0; s < out.sites.size(); ++s) {
        Site& site = out.sites[s];
        std::vector<std::uint8_t> mask(ds.length(), 0);
        bool any_pad = false;
        for (const auto& seg : layout.segments) {
            if (seg.role != SegmentRole::ZeroPadExcluded) continue;
            std::fill(mask.begin() + static_cast<std::ptrdiff_t>(seg.begin),
                      mask.begin() + static_cast<std::ptrdiff_t>(seg.end), 1);
            any_pad = true;
        }
        // Keep earlier padding: a series zeroed once stays excluded.
        if (!site.pad_mask.empty()) {
            for (std::size_t t = 0; t < mask.size(); ++t) mask[t] |= site.pad_mask[t];
            any_pad = true;
        }
        if (layout == site.layout && !any_pad) continue;
        site.layout = layout;
        if (any_pad) {
            site.pad_mask = std::move(mask);
        } else {
            site.pad_mask.clear();
        }
        refit_site_scales(out, s);
    }
    return out;
}

/// Restricts a dataset to timestamps [lo, hi) by index, clipping layouts.
CleanDataset clip(const CleanDataset& ds, std::size_t lo, std::size_t hi) {
    if (lo == 0 && hi == ds.length()) return ds;
    CleanDataset out = ds;
    out.timestamps.assign(ds.timestamps.begin() + static_cast<std::ptrdiff_t>(lo),
                          ds.timestamps.begin() + static_cast<std::ptrdiff_t>(hi));
    auto cut = [&](std::vector<double>& v) {
        if (v.empty()) return;
        v = std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(hi));
    };
    for (auto& b : out.buildings) cut(b.values);
    for (std::size_t s = 0; s < out.sites.size(); ++s) {
        Site& site = out.sites[s];
        for (auto& w : site.weather) cut(w);
        if (!site.pad_mask.empty()) {
            site.pad_mask = std::vector<std::uint8_t>(site.pad_mask.begin() + static_cast<std::ptrdiff_t>(lo),
                                                      site.pad_mask.begin() + static_cast<std::ptrdiff_t>(hi));
        }
        SplitLayout clipped;
        for (const auto& seg : site.layout.segments) {
            const std::size_t b = std::max(seg.begin, lo);
            const std::size_t e = std::min(seg.end, hi);
            if (b < e) clipped.segments.push_back({seg.role, b - lo, e - lo});
        }
        for (auto role : {SegmentRole::Train, SegmentRole::Validation, SegmentRole::Test}) {
            if (clipped.total(role) == 0) {
                throw DataError("combine: the shared time range leaves '" + site.id + "' without a " +
                                std::string(role_name(role)) + " segment");
            }
        }
        site.layout = std::move(clipped);
        refit_site_scales(out, s);
    }
    return out;
}

} // namespace

std::string describe(const TruncationDirective& directive) {
    return std::visit(Overloaded{
                          [](const FeatureTruncate& d) { return "drop features " + d.drop.to_string(); },
                          [](const BuildingTruncate& d) { return "keep first " + std::to_string(d.keep_count) + " buildings"; },
                          [](const TemporalTruncate& d) {
                              std::string out = "layout";
                              for (const auto& p : d.layout) {
                                  char buf[64];
                                  std::snprintf(buf, sizeof(buf), " %s:%.4g", std::string(role_name(p.role)).c_str(), p.fraction);
                                  out += buf;
                              }
                              return out;
                          },
                      },
                      directive);
}

std::string_view category_name(CombinationCategory category) {
    switch (category) {
    case CombinationCategory::UnmodifiedCombined:
        return "unmodified-combined";
    case CombinationCategory::Uniform:
        return "uniform";
    case CombinationCategory::ClimateVariant:
        return "climate-variant";
    case CombinationCategory::BuildingCountVariant:
        return "building-count-variant";
    case CombinationCategory::WeatherFeatureVariant:
        return "weather-feature-variant";
    case CombinationCategory::TemporalRangeVariant:
        return "temporal-range-variant";
    case CombinationCategory::FullEnsemble:
        return "full-ensemble";
    }
    return "unknown";
}

CombinationCategory parse_category(std::string_view text) {
    for (auto c : {CombinationCategory::UnmodifiedCombined, CombinationCategory::Uniform,
                   CombinationCategory::ClimateVariant, CombinationCategory::BuildingCountVariant,
                   CombinationCategory::WeatherFeatureVariant, CombinationCategory::TemporalRangeVariant,
                   CombinationCategory::FullEnsemble}) {
        if (category_name(c) == text) return c;
    }
    throw ConfigError("unknown combination category '" + std::string(text) + "'");
}

void DatasetRegistry::add(CleanDataset ds) {
    if (ds.id.empty()) throw ConfigError("registry: dataset id is empty");
    if (datasets_.count(ds.id)) throw ConfigError("registry: dataset '" + ds.id + "' is already registered");
    std::string id = ds.id;
    datasets_.emplace(std::move(id), std::move(ds));
}

bool DatasetRegistry::contains(std::string_view id) const {
    return datasets_.find(id) != datasets_.end();
}

const CleanDataset& DatasetRegistry::get(std::string_view id) const {
    const auto it = datasets_.find(id);
    if (it == datasets_.end()) throw ConfigError("registry: unknown dataset '" + std::string(id) + "'");
    return it->second;
}

std::vector<std::string> DatasetRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, ds] : datasets_) out.push_back(id);
    return out;
}

CleanDataset truncate(const CleanDataset& ds, const TruncationDirective& directive, const std::string& new_id) {
    CleanDataset out = std::visit(Overloaded{
                                      [&](const FeatureTruncate& d) { return drop_features(ds, d.drop); },
                                      [&](const BuildingTruncate& d) { return keep_buildings(ds, d.keep_count); },
                                      [&](const TemporalTruncate& d) { return relayout(ds, d.layout); },
                                  },
                                  directive);
    if (!new_id.empty()) out.id = new_id;
    return out;
}

CleanDataset combine_datasets(const std::string& id, const std::vector<const CleanDataset*>& members,
                              const std::vector<std::string>& tags) {
    if (members.empty()) throw ConfigError("combine: '" + id + "' has no members");
    if (tags.size() != members.size()) throw ContractError("combine: one tag per member required");

    // Shared range over the hourly grid.
    std::int64_t first = members.front()->timestamps.front();
    std::int64_t last = members.front()->timestamps.back();
    for (const auto* m : members) {
        if (m->length() == 0) throw DataError("combine: member '" + m->id + "' is empty");
        first = std::max(first, m->timestamps.front());
        last = std::min(last, m->timestamps.back());
    }
    if (first > last) throw DataError("combine: members of '" + id + "' share no timestamps");

    CleanDataset out;
    out.id = id;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const CleanDataset& m = *members[i];
        const auto lo_it = std::lower_bound(m.timestamps.begin(), m.timestamps.end(), first);
        const auto hi_it = std::upper_bound(m.timestamps.begin(), m.timestamps.end(), last);
        const auto lo = static_cast<std::size_t>(lo_it - m.timestamps.begin());
        const auto hi = static_cast<std::size_t>(hi_it - m.timestamps.begin());
        CleanDataset part = clip(m, lo, hi);
        if (out.timestamps.empty()) {
            out.timestamps = part.timestamps;
        } else if (part.timestamps != out.timestamps) {
            throw DataError("combine: member '" + m.id + "' is not on the same hourly grid as the others");
        }
        const std::size_t site_offset = out.sites.size();
        for (auto& site : part.sites) out.sites.push_back(std::move(site));
        for (auto& b : part.buildings) {
            b.site += site_offset;
            b.member = tags[i];
            out.buildings.push_back(std::move(b));
        }
        out.log.dropped_sparse.insert(out.log.dropped_sparse.end(), part.log.dropped_sparse.begin(),
                                      part.log.dropped_sparse.end());
        out.log.dropped_zero.insert(out.log.dropped_zero.end(), part.log.dropped_zero.begin(), part.log.dropped_zero.end());
        out.log.interpolated_cells += part.log.interpolated_cells;
    }
    return out;
}

CleanDataset combine(const CombinationSpec& spec, const DatasetRegistry& registry) {
    if (spec.members.empty()) throw ConfigError("combination '" + spec.id + "' has no members");
    std::vector<CleanDataset> prepared;
    std::vector<std::string> tags;
    prepared.reserve(spec.members.size());
    for (const auto& member : spec.members) {
        CleanDataset ds = registry.get(member.dataset);
        for (const auto& d : member.directives) ds = truncate(ds, d);
        tags.push_back(member.alias.empty() ? member.dataset : member.alias);
        if (!member.alias.empty()) ds.id = member.alias;
        prepared.push_back(std::move(ds));
    }
    std::vector<const CleanDataset*> ptrs;
    for (const auto& ds : prepared) ptrs.push_back(&ds);
    return combine_datasets(spec.id, ptrs, tags);
}

CleanDataset build_full_ensemble(const DatasetRegistry& registry, const std::vector<std::string>& ids,
                                 const std::string& id) {
    CombinationSpec spec;
    spec.id = id;
    spec.category = CombinationCategory::FullEnsemble;
    std::vector<std::string> missing;
    for (const auto& member : ids) {
        if (!registry.contains(member)) missing.push_back(member);
        spec.members.push_back({member, {}, {}});
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw ConfigError("full ensemble: missing member dataset(s): " + list);
    }
    return combine(spec, registry);
}

} // namespace tlbench
