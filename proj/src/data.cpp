#include "tlbench/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tlbench/csv.hpp"
#include "tlbench/errors.hpp"

namespace tlbench {

namespace {

constexpr std::array<std::string_view, kWeatherFeatureCount> kColumnNames = {
    "airTemperature", "dewTemperature", "seaLvlPressure", "windDirection", "windSpeed", "cloudCoverage"};
constexpr std::array<std::string_view, kWeatherFeatureCount> kAbbreviations = {"AT", "DT", "SLP", "WD", "WS", "CC"};

std::size_t idx(WeatherFeature f) {
    return static_cast<std::size_t>(f);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool is_missing(double v) {
    return std::isnan(v);
}

std::optional<double> parse_number(std::string_view text) {
    const std::string t = csv::trim(text);
    if (t.empty()) return std::nullopt;
    const std::string l = lower(t);
    if (l == "nan" || l == "na" || l == "null") return std::nullopt;
    double value = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
}

} // namespace

std::string_view column_name(WeatherFeature f) {
    return kColumnNames[idx(f)];
}

std::string_view abbreviation(WeatherFeature f) {
    return kAbbreviations[idx(f)];
}

std::optional<WeatherFeature> feature_from_column(std::string_view column) {
    for (std::size_t i = 0; i < kWeatherFeatureCount; ++i) {
        if (kColumnNames[i] == column) return static_cast<WeatherFeature>(i);
    }
    return std::nullopt;
}

WeatherFeature parse_feature(std::string_view text) {
    const std::string t = csv::trim(text);
    for (std::size_t i = 0; i < kWeatherFeatureCount; ++i) {
        if (kAbbreviations[i] == t || kColumnNames[i] == t) return static_cast<WeatherFeature>(i);
    }
    throw ConfigError("unknown weather feature '" + t + "' (expected one of AT, DT, SLP, WD, WS, CC)");
}

// --- FeatureSchema -----------------------------------------------------------

FeatureSchema FeatureSchema::all() {
    FeatureSchema s;
    s.bits_.set();
    return s;
}

FeatureSchema FeatureSchema::of(std::initializer_list<WeatherFeature> features) {
    FeatureSchema s;
    for (auto f : features) s.set(f);
    return s;
}

FeatureSchema FeatureSchema::parse(std::string_view codes) {
    FeatureSchema s;
    if (csv::trim(codes).empty()) return s;
    for (const auto& part : csv::split_record(codes)) s.set(parse_feature(part));
    return s;
}

std::vector<WeatherFeature> FeatureSchema::features() const {
    std::vector<WeatherFeature> out;
    for (auto f : kAllWeatherFeatures) {
        if (has(f)) out.push_back(f);
    }
    return out;
}

FeatureSchema FeatureSchema::unite(const FeatureSchema& other) const {
    FeatureSchema s;
    s.bits_ = bits_ | other.bits_;
    return s;
}

FeatureSchema FeatureSchema::without(const FeatureSchema& other) const {
    FeatureSchema s;
    s.bits_ = bits_ & ~other.bits_;
    return s;
}

std::string FeatureSchema::to_string() const {
    std::string out;
    for (auto f : features()) {
        if (!out.empty()) out.push_back(',');
        out += abbreviation(f);
    }
    return out;
}

// --- RawDataset --------------------------------------------------------------

FeatureSchema RawDataset::schema() const {
    FeatureSchema s;
    for (auto f : kAllWeatherFeatures) {
        if (weather[idx(f)].has_value()) s.set(f);
    }
    return s;
}

std::size_t RawDataset::missing_count() const {
    std::size_t n = 0;
    for (const auto& b : buildings) n += static_cast<std::size_t>(std::count_if(b.values.begin(), b.values.end(), is_missing));
    for (const auto& w : weather) {
        if (w) n += static_cast<std::size_t>(std::count_if(w->begin(), w->end(), is_missing));
    }
    return n;
}

std::int64_t parse_timestamp(std::string_view text) {
    const std::string t = csv::trim(text);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    int consumed = 0;
    const int n = std::sscanf(t.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
    if (n < 6 || (sep != ' ' && sep != 'T')) throw FormatError("invalid timestamp '" + t + "'");
    std::string_view rest = std::string_view(t).substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest.front() == ':') {
        int used = 0;
        if (std::sscanf(std::string(rest).c_str(), ":%2d%n", &s, &used) != 1) {
            throw FormatError("invalid timestamp '" + t + "'");
        }
        rest.remove_prefix(static_cast<std::size_t>(used));
    }
    if (rest == "Z" || rest == "+00:00") rest = {};
    if (!rest.empty()) throw FormatError("invalid timestamp '" + t + "'");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0) {
        throw FormatError("invalid timestamp '" + t + "'");
    }
    const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t unix_seconds) {
    const auto days = static_cast<int>(std::floor(static_cast<double>(unix_seconds) / 86400.0));
    const std::int64_t secs = unix_seconds - static_cast<std::int64_t>(days) * 86400;
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(secs / 3600),
                  static_cast<int>(secs % 3600 / 60), static_cast<int>(secs % 60));
    return buf;
}

RawDataset parse_csv(std::string_view text, std::string_view default_site) {
    RawDataset ds;
    ds.metadata.site = std::string(default_site);
    const auto rows = csv::lines(text);
    std::size_t r = 0;
    for (; r < rows.size(); ++r) {
        const std::string line = csv::trim(rows[r]);
        if (line.empty()) continue;
        if (line.front() != '#') break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = csv::trim(std::string_view(line).substr(1, eq - 1));
        const std::string value = csv::trim(std::string_view(line).substr(eq + 1));
        if (key == "site") ds.metadata.site = value;
        if (key == "climate_zone") ds.metadata.climate_zone = value;
    }
    if (r >= rows.size()) throw FormatError("csv: no header row");
    const auto header = csv::split_record(rows[r]);
    const std::string first = lower(csv::trim(header.front()));
    if (first != "timestamp" && first != "time" && first != "datetime" && first != "date") {
        throw FormatError("csv: missing timestamp column (first column is '" + csv::trim(header.front()) + "')");
    }
    struct Column {
        bool weather = false;
        std::size_t index = 0;
    };
    std::vector<Column> columns;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string name = csv::trim(header[c]);
        if (auto f = feature_from_column(name)) {
            if (ds.weather[idx(*f)]) throw FormatError("csv: duplicate weather column '" + name + "'");
            ds.weather[idx(*f)] = std::vector<double>{};
            columns.push_back({true, idx(*f)});
        } else {
            for (const auto& b : ds.buildings) {
                if (b.name == name) throw FormatError("csv: duplicate building column '" + name + "'");
            }
            ds.buildings.push_back({name, {}});
            columns.push_back({false, ds.buildings.size() - 1});
        }
    }
    for (++r; r < rows.size(); ++r) {
        if (csv::trim(rows[r]).empty()) continue;
        const auto cells = csv::split_record(rows[r]);
        const std::int64_t ts = parse_timestamp(cells.front());
        if (!ds.timestamps.empty() && ts <= ds.timestamps.back()) {
            throw FormatError("csv: timestamps must be strictly increasing (" + format_timestamp(ts) + " follows " +
                              format_timestamp(ds.timestamps.back()) + " at line " + std::to_string(r + 1) + ")");
        }
        ds.timestamps.push_back(ts);
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto value = c + 1 < cells.size() ? parse_number(cells[c + 1]) : std::nullopt;
            const double v = value.value_or(std::numeric_limits<double>::quiet_NaN());
            if (columns[c].weather) {
                ds.weather[columns[c].index]->push_back(v);
            } else {
                ds.buildings[columns[c].index].values.push_back(v);
            }
        }
    }
    if (ds.timestamps.empty()) throw FormatError("csv: no data rows");
    return ds;
}

RawDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_csv(buffer.str(), path.stem().string());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

RawDataset drop_sparse_buildings(const RawDataset& ds, double threshold, CleaningLog* log) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw ConfigError("drop_sparse_buildings: threshold must lie in (0, 1]");
    }
    RawDataset out = ds;
    out.buildings.clear();
    const double n = static_cast<double>(ds.length());
    for (const auto& b : ds.buildings) {
        const auto missing = static_cast<double>(std::count_if(b.values.begin(), b.values.end(), is_missing));
        // Compare counts rather than fractions so "exactly 10%" is not lost to rounding.
        if (missing >= threshold * n - 1e-9 * n) {
            if (log) log->dropped_sparse.push_back(b.name);
        } else {
            out.buildings.push_back(b);
        }
    }
    return out;
}

std::vector<double> interpolate_series(std::span<const double> values) {
    std::vector<double> out(values.begin(), values.end());
    std::size_t prev = values.size();  // last observed index
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (is_missing(values[i])) continue;
        if (prev == values.size()) {
            for (std::size_t j = 0; j < i; ++j) out[j] = values[i];
        } else if (i > prev + 1) {
            const double span = static_cast<double>(i - prev);
            for (std::size_t j = prev + 1; j < i; ++j) {
                const double w = static_cast<double>(j - prev) / span;
                out[j] = values[prev] + w * (values[i] - values[prev]);
            }
        }
        prev = i;
    }
    if (prev == values.size()) throw DataError("interpolate: series has no observed values");
    for (std::size_t j = prev + 1; j < values.size(); ++j) out[j] = values[prev];
    return out;
}

RawDataset interpolate_linear(const RawDataset& ds, CleaningLog* log) {
    RawDataset out = ds;
    auto fill = [&](std::vector<double>& values, const std::string& name) {
        const auto missing = static_cast<std::size_t>(std::count_if(values.begin(), values.end(), is_missing));
        if (missing == 0) return;
        if (missing == values.size()) throw DataError("interpolate: column '" + name + "' has no observed values");
        values = interpolate_series(values);
        if (log) log->interpolated_cells += missing;
    };
    for (auto& b : out.buildings) fill(b.values, b.name);
    for (auto f : kAllWeatherFeatures) {
        if (out.weather[idx(f)]) fill(*out.weather[idx(f)], std::string(column_name(f)));
    }
    return out;
}

RawDataset drop_zero_columns(const RawDataset& ds, std::size_t max_zeros, CleaningLog* log) {
    auto zeros = [](const std::vector<double>& v) {
        return static_cast<std::size_t>(std::count(v.begin(), v.end(), 0.0));
    };
    RawDataset out = ds;
    out.buildings.clear();
    for (const auto& b : ds.buildings) {
        if (zeros(b.values) > max_zeros) {
            if (log) log->dropped_zero.push_back(b.name);
        } else {
            out.buildings.push_back(b);
        }
    }
    for (auto f : kAllWeatherFeatures) {
        auto& w = out.weather[idx(f)];
        if (w && zeros(*w) > max_zeros) {
            if (log) log->dropped_zero.emplace_back(column_name(f));
            w.reset();
        }
    }
    return out;
}

// --- splits ------------------------------------------------------------------

std::string_view role_name(SegmentRole role) {
    switch (role) {
    case SegmentRole::Train:
        return "train";
    case SegmentRole::ZeroPadExcluded:
        return "zero_pad_excluded";
    case SegmentRole::Validation:
        return "validation";
    case SegmentRole::Test:
        return "test";
    }
    return "unknown";
}

SegmentRole parse_role(std::string_view text) {
    const std::string t = lower(csv::trim(text));
    if (t == "train") return SegmentRole::Train;
    if (t == "zero_pad_excluded" || t == "pad" || t == "zero_pad") return SegmentRole::ZeroPadExcluded;
    if (t == "validation" || t == "val") return SegmentRole::Validation;
    if (t == "test") return SegmentRole::Test;
    throw ConfigError("unknown segment role '" + std::string(text) + "'");
}

std::vector<Segment> SplitLayout::of(SegmentRole role) const {
    std::vector<Segment> out;
    for (const auto& s : segments) {
        if (s.role == role) out.push_back(s);
    }
    return out;
}

std::size_t SplitLayout::total(SegmentRole role) const {
    std::size_t n = 0;
    for (const auto& s : segments) {
        if (s.role == role) n += s.size();
    }
    return n;
}

SegmentRole SplitLayout::role_at(std::size_t index) const {
    for (const auto& s : segments) {
        if (index >= s.begin && index < s.end) return s.role;
    }
    throw ContractError("SplitLayout::role_at: index " + std::to_string(index) + " outside layout");
}

SplitLayout layout_from_fractions(std::size_t length, std::span<const LayoutPart> parts, std::size_t min_segment) {
    if (parts.empty()) throw ConfigError("split layout: no segments");
    double total = 0.0;
    for (const auto& p : parts) {
        if (!(p.fraction >= 0.0)) throw ConfigError("split layout: fractions must be non-negative");
        total += p.fraction;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split layout: fractions sum to " + std::to_string(total) + ", expected 1");
    }
    bool has_train = false, has_val = false, has_test = false;
    SplitLayout layout;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::size_t size = i + 1 == parts.size()
                                     ? length - cursor
                                     : static_cast<std::size_t>(std::floor(parts[i].fraction * static_cast<double>(length) + 1e-9));
        if (size == 0 || size < min_segment) {
            throw ConfigError("split layout: " + std::string(role_name(parts[i].role)) + " segment has " +
                              std::to_string(size) + " rows, needs at least " + std::to_string(std::max<std::size_t>(min_segment, 1)));
        }
        if (cursor + size > length) throw ConfigError("split layout: segments exceed dataset length");
        layout.segments.push_back({parts[i].role, cursor, cursor + size});
        cursor += size;
        has_train |= parts[i].role == SegmentRole::Train;
        has_val |= parts[i].role == SegmentRole::Validation;
        has_test |= parts[i].role == SegmentRole::Test;
    }
    if (!has_train || !has_val || !has_test) {
        throw ConfigError("split layout: train, validation and test segments are all required");
    }
    return layout;
}

SplitLayout split_chronological(std::size_t length, const SplitRatios& ratios, std::size_t min_segment) {
    const LayoutPart parts[] = {{SegmentRole::Train, ratios.train},
                                {SegmentRole::Validation, ratios.validation},
                                {SegmentRole::Test, ratios.test}};
    return layout_from_fractions(length, parts, min_segment);
}

// --- clean datasets ----------------------------------------------------------

FeatureSchema CleanDataset::schema() const {
    FeatureSchema s;
    for (const auto& site : sites) s = s.unite(site.schema);
    return s;
}

std::vector<std::string> CleanDataset::sources() const {
    std::vector<std::string> out;
    for (const auto& b : buildings) {
        if (std::find(out.begin(), out.end(), b.source) == out.end()) out.push_back(b.source);
    }
    return out;
}

namespace {

/// Mean and population standard deviation over the train segments,
/// skipping padded timestamps.
Standardization fit_scale(const std::vector<double>& values, const SplitLayout& layout,
                          const std::vector<std::uint8_t>& pad_mask) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& seg : layout.of(SegmentRole::Train)) {
        for (std::size_t t = seg.begin; t < seg.end; ++t) {
            if (!pad_mask.empty() && pad_mask[t]) continue;
            total += values[t];
            ++n;
        }
    }
    if (n == 0) throw DataError("standardize: train split is empty");
    const double mu = total / static_cast<double>(n);
    double var = 0.0;
    for (const auto& seg : layout.of(SegmentRole::Train)) {
        for (std::size_t t = seg.begin; t < seg.end; ++t) {
            if (!pad_mask.empty() && pad_mask[t]) continue;
            var += (values[t] - mu) * (values[t] - mu);
        }
    }
    return {mu, std::sqrt(var / static_cast<double>(n))};
}

} // namespace

void refit_site_scales(CleanDataset& ds, std::size_t site_index) {
    Site& site = ds.sites[site_index];
    for (auto& b : ds.buildings) {
        if (b.site != site_index) continue;
        std::vector<double> raw = invert(b);
        for (std::size_t t = 0; t < raw.size(); ++t) {
            if (site.padded(t)) raw[t] = 0.0;
        }
        const Standardization s = fit_scale(raw, site.layout, site.pad_mask);
        if (!(s.std > 0.0)) {
            throw DataError("standardize: series '" + b.name + "' is constant on the train split (std = 0)");
        }
        b.scale = s;
        for (std::size_t t = 0; t < raw.size(); ++t) b.values[t] = site.padded(t) ? 0.0 : s.apply(raw[t]);
    }
    for (auto f : site.schema.features()) {
        auto& w = site.weather[idx(f)];
        const Standardization old = site.weather_scale[idx(f)];
        for (auto& v : w) v = old.invert(v);
        for (std::size_t t = 0; t < w.size(); ++t) {
            if (site.padded(t)) w[t] = 0.0;
        }
        Standardization s = fit_scale(w, site.layout, site.pad_mask);
        if (!(s.std > 0.0)) s.std = 1.0;
        site.weather_scale[idx(f)] = s;
        for (std::size_t t = 0; t < w.size(); ++t) w[t] = site.padded(t) ? 0.0 : s.apply(w[t]);
    }
}

CleanDataset standardize(const RawDataset& ds, const SplitLayout& layout, const std::string& id) {
    if (ds.missing_count() != 0) throw DataError("standardize: dataset still has missing values");
    if (layout.segments.empty() || layout.segments.back().end != ds.length()) {
        throw ConfigError("standardize: split layout does not cover the dataset");
    }
    CleanDataset out;
    out.id = id;
    out.timestamps = ds.timestamps;
    Site site;
    site.id = id;
    site.metadata = ds.metadata;
    site.schema = ds.schema();
    site.layout = layout;
    for (auto f : site.schema.features()) site.weather[idx(f)] = *ds.weather[idx(f)];
    out.sites.push_back(std::move(site));
    for (const auto& b : ds.buildings) {
        out.buildings.push_back({b.name, id, id, 0, b.values, {}});
    }
    refit_site_scales(out, 0);
    return out;
}

std::vector<double> invert(const CleanBuilding& building) {
    std::vector<double> out(building.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = building.scale.invert(building.values[i]);
    return out;
}

CleanDataset clean(const RawDataset& raw, const std::string& id, const PipelineOptions& options) {
    CleaningLog log;
    RawDataset step = drop_sparse_buildings(raw, options.sparse_threshold, &log);
    step = interpolate_linear(step, &log);
    step = drop_zero_columns(step, options.max_zeros, &log);
    if (step.buildings.empty()) throw DataError("clean: no buildings survive cleaning");
    const SplitLayout layout = split_chronological(step.length(), options.ratios, options.min_segment);
    CleanDataset out = standardize(step, layout, id);
    out.log = std::move(log);
    return out;
}

// --- windows -----------------------------------------------------------------

std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon, std::size_t stride) {
    if (stride == 0) throw ConfigError("window stride must be positive");
    if (length < lookback + horizon) return 0;
    return (length - lookback - horizon) / stride + 1;
}

std::vector<WindowRef> make_windows(const CleanDataset& ds, SegmentRole role, std::size_t lookback,
                                    std::size_t horizon, std::size_t stride) {
    if (lookback == 0 || horizon == 0) throw ConfigError("make_windows: lookback and horizon must be positive");
    if (stride == 0) throw ConfigError("make_windows: stride must be positive");
    const std::size_t span = lookback + horizon;
    // prefix[t] = padded timestamps in [0, t) for each site.
    std::vector<std::vector<std::size_t>> prefix(ds.sites.size());
    bool any_fits = false;
    for (std::size_t s = 0; s < ds.sites.size(); ++s) {
        const Site& site = ds.sites[s];
        auto& p = prefix[s];
        p.assign(ds.length() + 1, 0);
        for (std::size_t t = 0; t < ds.length(); ++t) p[t + 1] = p[t] + (site.padded(t) ? 1 : 0);
        for (const auto& seg : site.layout.of(role)) any_fits |= seg.size() >= span;
    }
    if (!any_fits) {
        throw ConfigError("make_windows: no " + std::string(role_name(role)) + " segment of '" + ds.id +
                          "' holds lookback + horizon = " + std::to_string(span) + " rows");
    }
    std::vector<WindowRef> out;
    for (std::size_t b = 0; b < ds.buildings.size(); ++b) {
        const std::size_t s = ds.buildings[b].site;
        const auto& p = prefix[s];
        for (const auto& seg : ds.sites[s].layout.of(role)) {
            if (seg.size() < span) continue;
            for (std::size_t t = seg.begin; t + span <= seg.end; t += stride) {
                if (p[t + span] - p[t] != 0) continue;
                out.push_back({static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(t)});
            }
        }
    }
    return out;
}

ForecastBatch assemble_batch(const CleanDataset& ds, std::span<const WindowRef> windows, const InputLayout& layout) {
    if (windows.empty()) throw ContractError("assemble_batch: no windows");
    const std::size_t L = layout.lookback;
    const std::size_t H = layout.horizon;
    const std::size_t F = layout.width();
    const auto features = layout.schema.features();
    const std::size_t nf = features.size();
    std::vector<double> x(windows.size() * L * F, 0.0);
    std::vector<double> y(windows.size() * H);
    ForecastBatch batch;
    batch.series_id.reserve(windows.size());
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& ref = windows[w];
        if (ref.building >= ds.buildings.size() || ref.start + L + H > ds.length()) {
            throw ContractError("assemble_batch: window out of range");
        }
        const CleanBuilding& b = ds.buildings[ref.building];
        const Site& site = ds.sites[b.site];
        batch.series_id.push_back(b.source + "/" + b.name);
        for (std::size_t i = 0; i < L; ++i) {
            const std::size_t t = ref.start + i;
            double* row = x.data() + (w * L + i) * F;
            row[0] = b.values[t];
            for (std::size_t k = 0; k < nf; ++k) {
                if (site.schema.has(features[k])) {
                    row[1 + k] = site.weather[idx(features[k])][t];
                    row[1 + nf + k] = 1.0;
                }
            }
            const std::int64_t ts = ds.timestamps[t];
            const std::int64_t hours = ts / 3600;
            const double hour = static_cast<double>(((hours % 24) + 24) % 24);
            // 1970-01-01 was a Thursday; 0 = Monday.
            const double dow = static_cast<double>((((ts / 86400) + 3) % 7 + 7) % 7);
            row[1 + 2 * nf + 0] = std::sin(two_pi * hour / 24.0);
            row[1 + 2 * nf + 1] = std::cos(two_pi * hour / 24.0);
            row[1 + 2 * nf + 2] = std::sin(two_pi * dow / 7.0);
            row[1 + 2 * nf + 3] = std::cos(two_pi * dow / 7.0);
        }
        for (std::size_t j = 0; j < H; ++j) y[w * H + j] = b.values[ref.start + L + j];
    }
    batch.x_past = Tensor::from({windows.size(), L, F}, std::move(x));
    batch.y_future = Tensor::from({windows.size(), H}, std::move(y));
    return batch;
}

} // namespace tlbench
