#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "helpers.hpp"
#include "tlbench/data.hpp"
#include "tlbench/dataset_io.hpp"
#include "tlbench/errors.hpp"
#include "tlbench/synthetic.hpp"

using namespace tlbench;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

RawDataset panel(std::size_t length, std::vector<Series> buildings) {
    RawDataset raw;
    for (std::size_t i = 0; i < length; ++i) raw.timestamps.push_back(kReferenceStart + 3600 * static_cast<std::int64_t>(i));
    raw.buildings = std::move(buildings);
    raw.metadata.site = "fixture";
    return raw;
}

std::vector<double> ramp(std::size_t n, double offset = 1.0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = offset + std::sin(0.1 * static_cast<double>(i)) + 0.01 * i;
    return v;
}

/// Gap filling written independently of the library: for every missing run,
/// find the bracketing observations and interpolate by index distance.
std::vector<double> interpolation_oracle(std::vector<double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> observed;
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isnan(v[i])) observed.push_back(i);
    if (observed.empty()) return v;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isnan(v[i])) continue;
        auto hi = std::lower_bound(observed.begin(), observed.end(), i);
        if (hi == observed.begin()) {
            v[i] = v[*hi];
        } else if (hi == observed.end()) {
            v[i] = v[observed.back()];
        } else {
            const std::size_t a = *(hi - 1), b = *hi;
            const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
            v[i] = v[a] + w * (v[b] - v[a]);
        }
    }
    return v;
}

std::vector<std::string> names(const RawDataset& ds) {
    std::vector<std::string> out;
    for (const auto& b : ds.buildings) out.push_back(b.name);
    return out;
}

} // namespace

TEST_CASE("timestamps parse in both ISO forms") {
    CHECK(parse_timestamp("2016-01-01 00:00:00") == kReferenceStart);
    CHECK(parse_timestamp("2016-01-01T01:00Z") == kReferenceStart + 3600);
    CHECK(format_timestamp(kReferenceStart) == "2016-01-01 00:00:00");
    CHECK_THROWS_AS(parse_timestamp("yesterday"), FormatError);
}

TEST_CASE("parse_csv reads buildings, weather and metadata") {
    const std::string text =
        "# site=Bear\n# climate_zone=3C\n"
        "timestamp,b1,b2,airTemperature\n"
        "2016-01-01 00:00:00,1.5,,10\n"
        "2016-01-01 01:00:00,2.5,4,NaN\n";
    const RawDataset raw = parse_csv(text);
    CHECK(raw.length() == 2);
    CHECK(names(raw) == std::vector<std::string>{"b1", "b2"});
    CHECK(raw.metadata.site == "Bear");
    CHECK(raw.metadata.climate_zone == "3C");
    CHECK(raw.schema() == FeatureSchema::parse("AT"));
    CHECK(std::isnan(raw.buildings[1].values[0]));
    CHECK(std::isnan((*raw.weather[0])[1]));
    CHECK(raw.missing_count() == 2);  // weather gaps count too

    CHECK_THROWS_AS(parse_csv("timestamp,b1\n2016-01-01 01:00:00,1\n2016-01-01 00:00:00,2\n"), FormatError);
    CHECK_THROWS_AS(parse_csv("timestamp,b1\nnot-a-time,1\n"), FormatError);
    CHECK_THROWS_AS(parse_csv("timestamp,b1,b1\n2016-01-01 00:00:00,1,2\n"), FormatError);
}

TEST_CASE("sparse buildings: at 10% missing removed, just below kept") {
    const std::size_t T = 17544;  // 10% is 1754.4 rows
    auto with_missing = [&](std::size_t k) {
        auto v = ramp(T);
        for (std::size_t i = 0; i < k; ++i) v[100 + 7 * i] = kNaN;
        return v;
    };
    RawDataset raw = panel(T, {{"keep", with_missing(1754)}, {"drop", with_missing(1755)}, {"full", ramp(T)}});
    CleaningLog log;
    const RawDataset out = drop_sparse_buildings(raw, 0.10, &log);
    CHECK(names(out) == std::vector<std::string>{"keep", "full"});
    CHECK(log.dropped_sparse == std::vector<std::string>{"drop"});

    RawDataset exact = panel(100, {{"ten", with_missing(0)}});
    exact.buildings[0].values.resize(100);
    for (std::size_t i = 0; i < 10; ++i) exact.buildings[0].values[i * 10] = kNaN;
    CHECK(drop_sparse_buildings(exact, 0.10).buildings.empty());
    exact.buildings[0].values[0] = 1.0;
    CHECK(drop_sparse_buildings(exact, 0.10).buildings.size() == 1);
}

TEST_CASE("zero columns: 3000 zeros kept, 3001 removed, weather included") {
    const std::size_t T = 4000;
    auto zeros = [&](std::size_t k) {
        auto v = ramp(T);
        for (std::size_t i = 0; i < k; ++i) v[i] = 0.0;
        return v;
    };
    RawDataset raw = panel(T, {{"z3000", zeros(3000)}, {"z3001", zeros(3001)}});
    raw.weather[static_cast<std::size_t>(WeatherFeature::CloudCoverage)] = zeros(3500);
    raw.weather[static_cast<std::size_t>(WeatherFeature::AirTemperature)] = zeros(10);
    CleaningLog log;
    const RawDataset out = drop_zero_columns(raw, 3000, &log);
    CHECK(names(out) == std::vector<std::string>{"z3000"});
    CHECK(out.schema() == FeatureSchema::parse("AT"));
    CHECK(log.dropped_zero == std::vector<std::string>{"z3001", "cloudCoverage"});
}

TEST_CASE("linear interpolation matches the oracle") {
    Rng rng(4, RngStream::Synthetic);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(200);
        for (auto& x : v) x = rng.uniform(-3, 3);
        for (int k = 0; k < 40; ++k) v[rng.below(200)] = kNaN;
        if (trial % 5 == 0) v[0] = v[1] = v[199] = kNaN;
        const auto got = interpolate_series(v);
        const auto want = interpolation_oracle(v);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
    }
    const auto simple = interpolate_series(std::vector<double>{1.0, kNaN, kNaN, 4.0});
    CHECK(simple == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("chronological split of two years") {
    const SplitLayout layout = split_chronological(17544);
    CHECK(layout.total(SegmentRole::Train) == 12280);
    CHECK(layout.total(SegmentRole::Validation) == 1754);
    CHECK(layout.total(SegmentRole::Test) == 3510);
    CHECK(layout.segments.front().begin == 0);
    CHECK(layout.segments.back().end == 17544);
    CHECK(layout.role_at(12279) == SegmentRole::Train);
    CHECK(layout.role_at(12280) == SegmentRole::Validation);
    CHECK(layout.role_at(14034) == SegmentRole::Test);
    CHECK_THROWS_AS(split_chronological(5, {}, 2), ConfigError);
}

TEST_CASE("custom layouts floor every part but the last") {
    const std::vector<LayoutPart> parts{{SegmentRole::Train, 0.35},
                                        {SegmentRole::ZeroPadExcluded, 0.35},
                                        {SegmentRole::Validation, 0.10},
                                        {SegmentRole::Test, 0.20}};
    const SplitLayout l = layout_from_fractions(17544, parts);
    REQUIRE(l.segments.size() == 4);
    CHECK(l.segments[0].size() == 6140);
    CHECK(l.segments[1].size() == 6140);
    CHECK(l.segments[2].size() == 1754);
    CHECK(l.segments[3].size() == 3510);
    const std::vector<LayoutPart> no_test{{SegmentRole::Train, 0.9}, {SegmentRole::Validation, 0.1}};
    CHECK_THROWS_AS(layout_from_fractions(100, no_test), ConfigError);
}

TEST_CASE("clean standardizes with train-only statistics") {
    const std::size_t T = 1000;
    std::vector<double> v(T);
    for (std::size_t i = 0; i < T; ++i) v[i] = i < 700 ? static_cast<double>(i % 10) : 1000.0;
    RawDataset raw = panel(T, {{"b", v}});
    raw.weather[0] = ramp(T, 20.0);
    const CleanDataset ds = clean(raw, "Fix");
    REQUIRE(ds.buildings.size() == 1);
    const auto& b = ds.buildings[0];
    CHECK(b.scale.mean == doctest::Approx(4.5));
    CHECK(b.scale.std == doctest::Approx(std::sqrt(8.25)));  // population std of 0..9
    CHECK(b.values[3] == doctest::Approx((3.0 - 4.5) / std::sqrt(8.25)));
    CHECK(b.scale.invert(b.values[900]) == doctest::Approx(1000.0));
    CHECK(b.source == "Fix");
    CHECK(ds.sites.size() == 1);

    RawDataset flat = panel(T, {{"flat", std::vector<double>(T, 2.0)}});
    CHECK_THROWS_AS(clean(flat, "Flat"), DataError);
}

TEST_CASE("windows stay inside one segment") {
    const std::size_t T = 500;
    const CleanDataset ds = clean(panel(T, {{"a", ramp(T)}, {"b", ramp(T, 3.0)}}), "W");
    const SplitLayout& layout = ds.sites[0].layout;
    const auto train = make_windows(ds, SegmentRole::Train, 48, 24);
    CHECK(train.size() == 2 * window_count(layout.total(SegmentRole::Train), 48, 24));
    for (const auto& w : train) CHECK(w.start + 72 <= layout.of(SegmentRole::Train).front().end);
    const auto test = make_windows(ds, SegmentRole::Test, 48, 24);
    for (const auto& w : test) CHECK(layout.role_at(w.start) == SegmentRole::Test);
    CHECK(make_windows(ds, SegmentRole::Train, 48, 24, 5).size() == 2 * window_count(350, 48, 24, 5));
    CHECK_THROWS_AS(make_windows(ds, SegmentRole::Validation, 48, 24), ConfigError);  // 50 rows < 72
}

TEST_CASE("batch layout: load, weather, mask, calendar") {
    const std::size_t T = 400;
    RawDataset raw = panel(T, {{"a", ramp(T)}});
    raw.weather[0] = ramp(T, 20.0);
    const CleanDataset ds = clean(raw, "B");
    InputLayout layout{FeatureSchema::parse("AT,WS"), 24, 24};
    CHECK(layout.width() == 1 + 2 * 2 + 4);
    const std::vector<WindowRef> w{{0, 0}};
    const ForecastBatch batch = assemble_batch(ds, w, layout);
    CHECK(batch.x_past.shape() == Shape{1, 24, 9});
    CHECK(batch.y_future.shape() == Shape{1, 24});
    CHECK(batch.x_past.at({0, 0, 0}) == ds.buildings[0].values[0]);
    CHECK(batch.x_past.at({0, 5, 1}) == ds.sites[0].weather[0][5]);
    CHECK(batch.x_past.at({0, 5, 2}) == 0.0);  // WS absent
    CHECK(batch.x_past.at({0, 5, 3}) == 1.0);
    CHECK(batch.x_past.at({0, 5, 4}) == 0.0);
    // 2016-01-01 00:00 is a Friday: hour 0, day index 4 with Monday = 0.
    CHECK(batch.x_past.at({0, 0, 5}) == doctest::Approx(0.0));
    CHECK(batch.x_past.at({0, 0, 6}) == doctest::Approx(1.0));
    CHECK(batch.x_past.at({0, 0, 7}) == doctest::Approx(std::sin(2 * std::numbers::pi * 4 / 7)));
    CHECK(batch.x_past.at({0, 6, 5}) == doctest::Approx(1.0));  // 06:00
    CHECK(batch.y_future.at({0, 0}) == ds.buildings[0].values[24]);
}

TEST_CASE("dataset files round trip exactly") {
    testing::TempDir dir("io");
    SyntheticOptions o;
    o.length = 600;
    o.missing_fraction = 0.02;
    DatasetProfile p = *find_reference_profile("Bull");
    p.buildings = 3;
    const CleanDataset ds = clean(generate_dataset(p, o), "Bull");
    const DatasetFiles files = save_dataset(ds, dir.path);
    CHECK(std::filesystem::exists(files.csv));
    const CleanDataset back = load_dataset(files.sidecar);
    CHECK(back.id == ds.id);
    CHECK(back.timestamps == ds.timestamps);
    REQUIRE(back.buildings.size() == ds.buildings.size());
    for (std::size_t i = 0; i < ds.buildings.size(); ++i) {
        CHECK(back.buildings[i].values == ds.buildings[i].values);
        CHECK(back.buildings[i].scale == ds.buildings[i].scale);
        CHECK(back.buildings[i].source == ds.buildings[i].source);
    }
    CHECK(back.sites[0].layout == ds.sites[0].layout);
    CHECK(back.sites[0].schema == ds.sites[0].schema);
    CHECK(back.log.interpolated_cells == ds.log.interpolated_cells);
    CHECK(load_dataset(files.csv).id == "Bull");

    std::ofstream(dir.path / "broken.json") << "{\"format\": \"something-else\"}";
    CHECK_THROWS_AS(load_dataset(dir.path / "broken.json"), FormatError);
}

TEST_CASE("synthetic reference profiles") {
    std::size_t total = 0;
    for (const auto& p : reference_profiles()) total += p.buildings;
    CHECK(reference_profiles().size() == 16);
    CHECK(total == 819);
    CHECK(find_reference_profile("Wolf")->schema == FeatureSchema::all());
    CHECK(find_reference_profile("Gator")->schema.width() == 0);
    CHECK_FALSE(find_reference_profile("Unicorn"));
    SyntheticOptions o;
    o.length = 100;
    const RawDataset a = generate_dataset(*find_reference_profile("Crow"), o);
    const RawDataset b = generate_dataset(*find_reference_profile("Crow"), o);
    CHECK(a.buildings.size() == 4);
    CHECK(a.buildings[0].values == b.buildings[0].values);
}
