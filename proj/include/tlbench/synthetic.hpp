#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tlbench/data.hpp"

namespace tlbench {

/// Shape of one base dataset: building count, climate tag and which weather
/// columns it carries.
struct DatasetProfile {
    std::string id;
    std::size_t buildings = 0;
    std::string climate_zone;
    FeatureSchema schema;
};

/// The sixteen base sites of the reference study, in table order.
const std::vector<DatasetProfile>& reference_profiles();
std::optional<DatasetProfile> find_reference_profile(std::string_view id);
std::vector<std::string> reference_ids();

/// 2016-01-01 00:00 UTC; two years of hourly rows is 17544.
inline constexpr std::int64_t kReferenceStart = 1451606400;
inline constexpr std::size_t kReferenceLength = 17544;

struct SyntheticOptions {
    std::size_t length = kReferenceLength;
    std::int64_t start = kReferenceStart;
    std::uint64_t seed = 1;
    /// Noise std as a fraction of each building's base level.
    double noise = 0.05;
    /// Fraction of load cells blanked at random (exercises interpolation).
    double missing_fraction = 0.0;
};

/// Weather-driven load panel shaped like `profile`. Each building mixes a
/// daily and weekly cycle with a temperature response; the weather columns
/// follow seasonal and diurnal cycles. Deterministic in (profile.id, seed).
RawDataset generate_dataset(const DatasetProfile& profile, const SyntheticOptions& options = {});

/// Sinusoid-plus-noise panel without weather columns:
///   y_b(t) = level_b + amplitude * sin(2 pi (t + phase_b) / period)
///            + 0.5 * amplitude * sin(2 pi t / (7 period)) + noise
/// level_b and phase_b vary by building; `phase` shifts every building.
struct SinusoidOptions {
    std::size_t buildings = 2;
    std::size_t length = 24 * 60;
    std::int64_t start = kReferenceStart;
    double period = 24.0;
    double amplitude = 1.0;
    double phase = 0.0;
    double phase_jitter = 2.0;
    double noise = 0.05;
    std::uint64_t seed = 1;
};

RawDataset sinusoid_dataset(const std::string& id, const SinusoidOptions& options = {});

} // namespace tlbench
