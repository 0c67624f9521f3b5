#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tlbench/tensor.hpp"

namespace tlbench {

// --- feature schema ----------------------------------------------------------

enum class WeatherFeature : std::size_t {
    AirTemperature = 0,
    DewTemperature = 1,
    SeaLevelPressure = 2,
    WindDirection = 3,
    WindSpeed = 4,
    CloudCoverage = 5,
};
inline constexpr std::size_t kWeatherFeatureCount = 6;
inline constexpr std::array<WeatherFeature, kWeatherFeatureCount> kAllWeatherFeatures = {
    WeatherFeature::AirTemperature, WeatherFeature::DewTemperature, WeatherFeature::SeaLevelPressure,
    WeatherFeature::WindDirection,  WeatherFeature::WindSpeed,      WeatherFeature::CloudCoverage};

/// Reserved CSV column name, e.g. "airTemperature".
std::string_view column_name(WeatherFeature f);
/// Short code, e.g. "AT".
std::string_view abbreviation(WeatherFeature f);
std::optional<WeatherFeature> feature_from_column(std::string_view column);
/// Accepts either the short code or the column name.
WeatherFeature parse_feature(std::string_view text);

/// Presence flags for the six weather covariates.
class FeatureSchema {
public:
    FeatureSchema() = default;
    static FeatureSchema all();
    static FeatureSchema of(std::initializer_list<WeatherFeature> features);
    /// Comma-separated short codes ("AT,DT"); empty string for no features.
    static FeatureSchema parse(std::string_view codes);

    bool has(WeatherFeature f) const { return bits_.test(static_cast<std::size_t>(f)); }
    void set(WeatherFeature f, bool present = true) { bits_.set(static_cast<std::size_t>(f), present); }
    std::size_t width() const { return bits_.count(); }
    std::vector<WeatherFeature> features() const;
    bool subset_of(const FeatureSchema& other) const { return (bits_ & ~other.bits_).none(); }
    FeatureSchema unite(const FeatureSchema& other) const;
    FeatureSchema without(const FeatureSchema& other) const;
    std::string to_string() const;

    bool operator==(const FeatureSchema&) const = default;

private:
    std::bitset<kWeatherFeatureCount> bits_;
};

// --- raw panels --------------------------------------------------------------

struct Series {
    std::string name;
    std::vector<double> values;  // NaN marks a missing observation
};

struct DatasetMetadata {
    std::string site;
    std::string climate_zone;
};

/// Hourly panel straight from CSV. Missing cells are NaN.
struct RawDataset {
    std::vector<std::int64_t> timestamps;  // unix seconds, strictly increasing
    std::vector<Series> buildings;
    std::array<std::optional<std::vector<double>>, kWeatherFeatureCount> weather;
    DatasetMetadata metadata;

    std::size_t length() const { return timestamps.size(); }
    FeatureSchema schema() const;
    std::size_t missing_count() const;
};

/// What each cleaning rule removed or imputed.
struct CleaningLog {
    std::vector<std::string> dropped_sparse;
    std::vector<std::string> dropped_zero;
    std::size_t interpolated_cells = 0;

    bool empty() const { return dropped_sparse.empty() && dropped_zero.empty() && interpolated_cells == 0; }
};

/// Parses "YYYY-MM-DD HH:MM[:SS]" (or with a 'T' separator, optional 'Z').
std::int64_t parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t unix_seconds);

/// First column: ISO-8601 timestamps. Weather columns are recognised by their
/// reserved names; every other column is a building. Leading "# key=value"
/// lines set metadata (site, climate_zone). Empty or NaN cells, and cells that
/// do not parse as numbers, become missing markers.
RawDataset load_csv(const std::filesystem::path& path);
RawDataset parse_csv(std::string_view text, std::string_view default_site = {});

/// Removes buildings whose missing fraction is >= threshold.
RawDataset drop_sparse_buildings(const RawDataset& ds, double threshold = 0.10, CleaningLog* log = nullptr);

/// Linear interpolation between observed neighbours; leading and trailing gaps
/// take the nearest observed value.
std::vector<double> interpolate_series(std::span<const double> values);
RawDataset interpolate_linear(const RawDataset& ds, CleaningLog* log = nullptr);

/// Removes every column (building or weather) with more than max_zeros exact
/// zeros.
RawDataset drop_zero_columns(const RawDataset& ds, std::size_t max_zeros = 3000, CleaningLog* log = nullptr);

// --- splits ------------------------------------------------------------------

enum class SegmentRole { Train, ZeroPadExcluded, Validation, Test };
std::string_view role_name(SegmentRole role);
SegmentRole parse_role(std::string_view text);

struct Segment {
    SegmentRole role;
    std::size_t begin;
    std::size_t end;  // exclusive

    std::size_t size() const { return end - begin; }
    bool operator==(const Segment&) const = default;
};

/// Contiguous, ordered, non-overlapping partition of [0, T).
struct SplitLayout {
    std::vector<Segment> segments;

    std::vector<Segment> of(SegmentRole role) const;
    std::size_t total(SegmentRole role) const;
    /// Role of a timestamp index.
    SegmentRole role_at(std::size_t index) const;
    bool operator==(const SplitLayout&) const = default;
};

struct SplitRatios {
    double train = 0.70;
    double validation = 0.10;
    double test = 0.20;
};

struct LayoutPart {
    SegmentRole role;
    double fraction;
};

/// Segment sizes are floor(fraction * T) for every part but the last, which
/// takes the remainder. Fractions must sum to 1; every segment must hold at
/// least min_segment rows, and train, validation and test must all appear.
SplitLayout layout_from_fractions(std::size_t length, std::span<const LayoutPart> parts, std::size_t min_segment = 1);
SplitLayout split_chronological(std::size_t length, const SplitRatios& ratios = {}, std::size_t min_segment = 1);

// --- clean datasets ----------------------------------------------------------

struct Standardization {
    double mean = 0.0;
    double std = 1.0;

    double apply(double x) const { return (x - mean) / std; }
    double invert(double z) const { return z * std + mean; }
    bool operator==(const Standardization&) const = default;
};

/// One member site of a (possibly combined) dataset: its weather block, split
/// layout and pad mask. A single dataset has exactly one site.
struct Site {
    std::string id;
    DatasetMetadata metadata;
    FeatureSchema schema;
    std::array<std::vector<double>, kWeatherFeatureCount> weather;  // empty when absent
    std::array<Standardization, kWeatherFeatureCount> weather_scale{};
    SplitLayout layout;
    std::vector<std::uint8_t> pad_mask;  // 1 = zero-padded timestamp

    bool padded(std::size_t index) const { return !pad_mask.empty() && pad_mask[index] != 0; }
};

struct CleanBuilding {
    std::string name;
    std::string source;  // root dataset id the series came from
    std::string member;  // member tag assigned by the most recent combine
    std::size_t site = 0;
    std::vector<double> values;  // standardized
    Standardization scale;
};

struct CleanDataset {
    std::string id;
    std::vector<std::int64_t> timestamps;
    std::vector<Site> sites;
    std::vector<CleanBuilding> buildings;
    CleaningLog log;

    std::size_t length() const { return timestamps.size(); }
    std::size_t building_count() const { return buildings.size(); }
    /// Union of site schemas.
    FeatureSchema schema() const;
    /// Distinct root datasets contributing buildings, in first-seen order.
    std::vector<std::string> sources() const;
};

/// Standardizes every load series and weather column using statistics from
/// the train segments only. Throws DataError naming a constant load series.
/// A constant weather column keeps std = 1 (centred only).
CleanDataset standardize(const RawDataset& ds, const SplitLayout& layout, const std::string& id);
std::vector<double> invert(const CleanBuilding& building);

/// Recomputes the load and weather scales of one site from its current train
/// segments (after a layout or pad-mask change). Padded timestamps are set to
/// zero in standardized units.
void refit_site_scales(CleanDataset& ds, std::size_t site_index);

struct PipelineOptions {
    double sparse_threshold = 0.10;
    std::size_t max_zeros = 3000;
    SplitRatios ratios;
    std::size_t min_segment = 1;
};

/// drop_sparse_buildings -> interpolate_linear -> drop_zero_columns ->
/// split_chronological -> standardize.
CleanDataset clean(const RawDataset& raw, const std::string& id, const PipelineOptions& options = {});

// --- windows -----------------------------------------------------------------

/// One training example: inputs at [start, start + L), targets at
/// [start + L, start + L + H) for one building.
struct WindowRef {
    std::uint32_t building = 0;
    std::uint32_t start = 0;
    bool operator==(const WindowRef&) const = default;
};

/// Number of stride-1 windows in a contiguous range of length T.
std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon, std::size_t stride = 1);

/// Windows lying entirely inside a single segment of `role` for every
/// building, skipping any window that touches a zero-padded timestamp of the
/// building's site. Throws ConfigError when no segment of that role can hold
/// L + H rows.
std::vector<WindowRef> make_windows(const CleanDataset& ds, SegmentRole role, std::size_t lookback,
                                    std::size_t horizon, std::size_t stride = 1);

/// Layout of one model input time step:
///   [load, weather(schema order), presence mask(schema order),
///    sin/cos hour-of-day, sin/cos day-of-week]
/// Features absent at a building's site are zero with mask 0.
struct InputLayout {
    FeatureSchema schema;
    std::size_t lookback = 168;
    std::size_t horizon = 24;

    std::size_t width() const { return 1 + 2 * schema.width() + 4; }
};

struct ForecastBatch {
    Tensor x_past;    // [B, L, F]
    Tensor y_future;  // [B, H]
    std::vector<std::string> series_id;
};

ForecastBatch assemble_batch(const CleanDataset& ds, std::span<const WindowRef> windows, const InputLayout& layout);

} // namespace tlbench
