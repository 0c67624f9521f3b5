#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tlbench/data.hpp"

namespace tlbench {

struct FeatureTruncate {
    FeatureSchema drop;
};

/// Keeps the first keep_count buildings in column order.
struct BuildingTruncate {
    std::size_t keep_count = 0;
};

/// Replaces the split layout. ZeroPadExcluded parts are zeroed and masked so
/// they never yield windows.
struct TemporalTruncate {
    std::vector<LayoutPart> layout;
};

using TruncationDirective = std::variant<FeatureTruncate, BuildingTruncate, TemporalTruncate>;

std::string describe(const TruncationDirective& directive);

enum class CombinationCategory {
    UnmodifiedCombined,
    Uniform,
    ClimateVariant,
    BuildingCountVariant,
    WeatherFeatureVariant,
    TemporalRangeVariant,
    FullEnsemble,
};

std::string_view category_name(CombinationCategory category);
CombinationCategory parse_category(std::string_view text);

struct CombinationMember {
    std::string dataset;
    /// Member tag in the result; defaults to the dataset id.
    std::string alias;
    /// Applied in order before combining.
    std::vector<TruncationDirective> directives;
};

struct CombinationSpec {
    std::string id;
    std::vector<CombinationMember> members;
    CombinationCategory category = CombinationCategory::UnmodifiedCombined;
};

/// Cleaned datasets by id. Immutable once a campaign starts.
class DatasetRegistry {
public:
    void add(CleanDataset ds);
    bool contains(std::string_view id) const;
    /// Throws ConfigError for an unknown id.
    const CleanDataset& get(std::string_view id) const;
    std::vector<std::string> ids() const;
    std::size_t size() const { return datasets_.size(); }

private:
    std::map<std::string, CleanDataset, std::less<>> datasets_;
};

/// Throws ConfigError when the directive does not fit the dataset (unknown
/// feature, keep_count of zero or above the building count, bad layout).
CleanDataset truncate(const CleanDataset& ds, const TruncationDirective& directive, const std::string& new_id = {});

/// Unions the members' buildings, keeping each member's sites (weather block,
/// layout, pad mask) intact. Timestamps are cut to the range every member
/// covers; cutting clips the split layouts and refits scales. Disjoint ranges
/// are a DataError.
CleanDataset combine(const CombinationSpec& spec, const DatasetRegistry& registry);

/// Same, over already-prepared datasets with explicit member tags.
CleanDataset combine_datasets(const std::string& id, const std::vector<const CleanDataset*>& members,
                              const std::vector<std::string>& tags);

/// Combination of every listed base dataset; a missing member is a
/// ConfigError.
CleanDataset build_full_ensemble(const DatasetRegistry& registry, const std::vector<std::string>& ids,
                                 const std::string& id = "FullEnsemble");

} // namespace tlbench
