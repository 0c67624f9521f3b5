#pragma once

#include <filesystem>
#include <string>

#include "tlbench/data.hpp"

namespace tlbench {

// A cleaned dataset on disk is two files in one directory:
//   <id>.csv   timestamp column, one column per building (standardized load),
//              then one column per site weather feature ("<site>:<column>")
//   <id>.json  sidecar with schema, scales, split boundaries, pad ranges,
//              provenance tags and the cleaning log
// Values are printed with 17 significant digits, so a round trip is exact.

struct DatasetFiles {
    std::filesystem::path csv;
    std::filesystem::path sidecar;
};

DatasetFiles dataset_files(const std::filesystem::path& dir, const std::string& id);

DatasetFiles save_dataset(const CleanDataset& ds, const std::filesystem::path& dir);

/// Accepts either file of the pair (or the CSV path without its sidecar
/// present, which is a FormatError).
CleanDataset load_dataset(const std::filesystem::path& path);

/// The sidecar alone, as JSON text.
std::string sidecar_json(const CleanDataset& ds);

} // namespace tlbench
