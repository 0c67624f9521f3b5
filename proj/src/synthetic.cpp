#include "tlbench/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "tlbench/errors.hpp"
#include "tlbench/hash.hpp"
#include "tlbench/rng.hpp"

namespace tlbench {

namespace {

using WF = WeatherFeature;

const FeatureSchema kFive = FeatureSchema::of({WF::AirTemperature, WF::DewTemperature, WF::SeaLevelPressure,
                                               WF::WindDirection, WF::WindSpeed});
const FeatureSchema kThree = FeatureSchema::of({WF::AirTemperature, WF::DewTemperature, WF::SeaLevelPressure});

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double gaussian(Rng& rng) {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t dataset_seed(std::string_view id, std::uint64_t seed) {
    return fnv1a64(id) ^ (seed * 0x9e3779b97f4a7c15ULL);
}

} // namespace

const std::vector<DatasetProfile>& reference_profiles() {
    static const std::vector<DatasetProfile> profiles = {
        {"Bear", 73, "3C", kFive},
        {"Bobcat", 7, "5B", kFive},
        {"Bull", 41, "2A", kThree},
        {"Cockatoo", 1, "6A", kFive},
        {"Crow", 4, "6A", kFive},
        {"Eagle", 87, "4A", kFive},
        {"Fox", 127, "2B", kFive},
        {"Gator", 29, "2A", FeatureSchema{}},
        {"Hog", 24, "6A", kFive},
        {"Lamb", 41, "4A", FeatureSchema::of({WF::AirTemperature, WF::DewTemperature, WF::WindDirection, WF::WindSpeed})},
        {"Moose", 9, "6A", kFive},
        {"Mouse", 3, "4A", kFive},
        {"Peacock", 36, "5A", kThree},
        {"Rat", 251, "4A", kFive},
        {"Robin", 50, "4A", kFive},
        {"Wolf", 36, "5A", FeatureSchema::all()},
    };
    return profiles;
}

std::optional<DatasetProfile> find_reference_profile(std::string_view id) {
    for (const auto& p : reference_profiles()) {
        if (p.id == id) return p;
    }
    return std::nullopt;
}

std::vector<std::string> reference_ids() {
    std::vector<std::string> out;
    for (const auto& p : reference_profiles()) out.push_back(p.id);
    return out;
}

RawDataset generate_dataset(const DatasetProfile& profile, const SyntheticOptions& options) {
    if (options.length == 0) throw ConfigError("generate_dataset: length must be positive");
    if (profile.buildings == 0) throw ConfigError("generate_dataset: profile '" + profile.id + "' has no buildings");
    if (!(options.missing_fraction >= 0.0 && options.missing_fraction < 1.0)) {
        throw ConfigError("generate_dataset: missing_fraction must lie in [0, 1)");
    }
    const std::uint64_t seed = dataset_seed(profile.id, options.seed);
    const std::size_t T = options.length;

    RawDataset ds;
    ds.metadata = {profile.id, profile.climate_zone};
    ds.timestamps.resize(T);
    for (std::size_t t = 0; t < T; ++t) ds.timestamps[t] = options.start + static_cast<std::int64_t>(t) * 3600;

    // Temperature drives both the weather block and the load response, so it
    // is generated even when the profile does not publish it.
    Rng wrng(seed, RngStream::Synthetic, 0);
    const double climate_offset = wrng.uniform(-5.0, 10.0);
    std::vector<double> temp(T), dew(T), slp(T), wdir(T), wspeed(T), cloud(T);
    double drift = 0.0;
    double dir = wrng.uniform(0.0, 360.0);
    for (std::size_t t = 0; t < T; ++t) {
        const double day = static_cast<double>(ds.timestamps[t] - kReferenceStart) / 86400.0;
        const double hour = static_cast<double>(((ds.timestamps[t] / 3600) % 24 + 24) % 24);
        drift = 0.98 * drift + 0.4 * gaussian(wrng);
        temp[t] = 12.0 + climate_offset + 10.0 * std::sin(kTwoPi * (day - 110.0) / 365.25) +
                  4.0 * std::sin(kTwoPi * (hour - 9.0) / 24.0) + drift;
        dew[t] = temp[t] - 4.0 - 2.0 * std::abs(std::sin(kTwoPi * hour / 24.0)) + 0.5 * gaussian(wrng);
        slp[t] = 1013.0 + 6.0 * std::sin(kTwoPi * day / 9.0) + 0.8 * gaussian(wrng);
        dir = std::fmod(dir + 15.0 * gaussian(wrng) + 360.0, 360.0);
        wdir[t] = dir == 0.0 ? 1.0 : dir;
        wspeed[t] = 0.2 + std::abs(3.0 + 1.5 * std::sin(kTwoPi * hour / 24.0) + gaussian(wrng));
        cloud[t] = 1.0 + std::floor(4.0 + 3.0 * std::sin(kTwoPi * day / 5.0) + gaussian(wrng) + 0.5);
        cloud[t] = std::clamp(cloud[t], 1.0, 9.0);
    }
    const std::array<const std::vector<double>*, kWeatherFeatureCount> series = {&temp, &dew, &slp, &wdir, &wspeed, &cloud};
    for (auto f : profile.schema.features()) ds.weather[static_cast<std::size_t>(f)] = *series[static_cast<std::size_t>(f)];

    for (std::size_t b = 0; b < profile.buildings; ++b) {
        Rng rng(seed, RngStream::Synthetic, b + 1);
        const double level = rng.uniform(50.0, 150.0);
        const double daily = rng.uniform(0.15, 0.45) * level;
        const double weekend = rng.uniform(0.0, 0.3) * level;
        const double heat = rng.uniform(0.0, 2.0);
        const double cool = rng.uniform(0.0, 2.5);
        const double shift = rng.uniform(-2.0, 2.0);
        char name[64];
        std::snprintf(name, sizeof(name), "%s_b%03zu", profile.id.c_str(), b);
        Series s{name, std::vector<double>(T)};
        for (std::size_t t = 0; t < T; ++t) {
            const std::int64_t ts = ds.timestamps[t];
            const double hour = static_cast<double>(((ts / 3600) % 24 + 24) % 24);
            const long dow = (((ts / 86400) + 3) % 7 + 7) % 7;
            const double occupied = std::max(0.0, std::sin(std::numbers::pi * (hour - 6.0 - shift) / 13.0));
            double y = level + daily * occupied - (dow >= 5 ? weekend * occupied : 0.0);
            y += heat * std::max(0.0, 15.0 - temp[t]) + cool * std::max(0.0, temp[t] - 20.0);
            y += options.noise * level * gaussian(rng);
            s.values[t] = std::max(y, 0.05 * level);
        }
        if (options.missing_fraction > 0.0) {
            for (auto& v : s.values) {
                if (rng.uniform() < options.missing_fraction) v = std::numeric_limits<double>::quiet_NaN();
            }
        }
        ds.buildings.push_back(std::move(s));
    }
    return ds;
}

RawDataset sinusoid_dataset(const std::string& id, const SinusoidOptions& options) {
    if (options.buildings == 0 || options.length == 0) throw ConfigError("sinusoid_dataset: empty panel requested");
    if (!(options.period > 0.0)) throw ConfigError("sinusoid_dataset: period must be positive");
    const std::uint64_t seed = dataset_seed(id, options.seed);
    RawDataset ds;
    ds.metadata = {id, ""};
    ds.timestamps.resize(options.length);
    for (std::size_t t = 0; t < options.length; ++t) {
        ds.timestamps[t] = options.start + static_cast<std::int64_t>(t) * 3600;
    }
    for (std::size_t b = 0; b < options.buildings; ++b) {
        Rng rng(seed, RngStream::Synthetic, b + 1);
        const double level = rng.uniform(2.0, 4.0);
        const double phase = options.phase + rng.uniform(-options.phase_jitter, options.phase_jitter);
        Series s{id + "_s" + std::to_string(b), std::vector<double>(options.length)};
        for (std::size_t t = 0; t < options.length; ++t) {
            const double x = static_cast<double>(t);
            s.values[t] = level + options.amplitude * std::sin(kTwoPi * (x + phase) / options.period) +
                          0.5 * options.amplitude * std::sin(kTwoPi * x / (7.0 * options.period)) +
                          options.noise * gaussian(rng);
        }
        ds.buildings.push_back(std::move(s));
    }
    return ds;
}

} // namespace tlbench
