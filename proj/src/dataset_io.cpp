#include "tlbench/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tlbench/csv.hpp"
#include "tlbench/errors.hpp"

namespace tlbench {

using nlohmann::json;

namespace {

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json scale_json(const Standardization& s) {
    return {{"mean", s.mean}, {"std", s.std}};
}

Standardization scale_from(const json& j) {
    return {j.at("mean").get<double>(), j.at("std").get<double>()};
}

json pad_ranges(const std::vector<std::uint8_t>& mask) {
    json out = json::array();
    std::size_t t = 0;
    while (t < mask.size()) {
        if (!mask[t]) {
            ++t;
            continue;
        }
        std::size_t end = t;
        while (end < mask.size() && mask[end]) ++end;
        out.push_back({t, end});
        t = end;
    }
    return out;
}

std::string weather_header(std::size_t site, WeatherFeature f) {
    return std::to_string(site) + ":" + std::string(column_name(f));
}

} // namespace

DatasetFiles dataset_files(const std::filesystem::path& dir, const std::string& id) {
    return {dir / (id + ".csv"), dir / (id + ".json")};
}

std::string sidecar_json(const CleanDataset& ds) {
    json j;
    j["format"] = "tlbench-dataset";
    j["version"] = 1;
    j["id"] = ds.id;
    j["length"] = ds.length();
    j["schema"] = ds.schema().to_string();
    json sites = json::array();
    for (std::size_t s = 0; s < ds.sites.size(); ++s) {
        const Site& site = ds.sites[s];
        json js;
        js["id"] = site.id;
        js["site"] = site.metadata.site;
        js["climate_zone"] = site.metadata.climate_zone;
        js["schema"] = site.schema.to_string();
        json scales = json::object();
        for (auto f : site.schema.features()) {
            scales[std::string(abbreviation(f))] = scale_json(site.weather_scale[static_cast<std::size_t>(f)]);
        }
        js["weather_scale"] = scales;
        json segs = json::array();
        for (const auto& seg : site.layout.segments) {
            segs.push_back({{"role", role_name(seg.role)}, {"begin", seg.begin}, {"end", seg.end}});
        }
        js["segments"] = segs;
        js["pad_ranges"] = pad_ranges(site.pad_mask);
        sites.push_back(js);
    }
    j["sites"] = sites;
    json buildings = json::array();
    for (const auto& b : ds.buildings) {
        buildings.push_back({{"name", b.name},
                             {"source", b.source},
                             {"member", b.member},
                             {"site", b.site},
                             {"scale", scale_json(b.scale)}});
    }
    j["buildings"] = buildings;
    j["removed"] = {{"sparse", ds.log.dropped_sparse},
                    {"zero", ds.log.dropped_zero},
                    {"interpolated_cells", ds.log.interpolated_cells}};
    return j.dump(2);
}

DatasetFiles save_dataset(const CleanDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const DatasetFiles files = dataset_files(dir, ds.id);

    std::vector<std::string> header{"timestamp"};
    for (const auto& b : ds.buildings) header.push_back(b.name);
    for (std::size_t s = 0; s < ds.sites.size(); ++s) {
        for (auto f : ds.sites[s].schema.features()) header.push_back(weather_header(s, f));
    }

    std::ofstream csv_out(files.csv, std::ios::binary);
    if (!csv_out) throw FormatError("cannot write " + files.csv.string());
    csv_out << csv::join_record(header) << '\n';
    std::vector<std::string> row;
    for (std::size_t t = 0; t < ds.length(); ++t) {
        row.clear();
        row.push_back(format_timestamp(ds.timestamps[t]));
        for (const auto& b : ds.buildings) row.push_back(format_value(b.values[t]));
        for (const auto& site : ds.sites) {
            for (auto f : site.schema.features()) {
                row.push_back(format_value(site.weather[static_cast<std::size_t>(f)][t]));
            }
        }
        csv_out << csv::join_record(row) << '\n';
    }
    if (!csv_out) throw FormatError("write failed: " + files.csv.string());

    std::ofstream side_out(files.sidecar, std::ios::binary);
    if (!side_out) throw FormatError("cannot write " + files.sidecar.string());
    side_out << sidecar_json(ds) << '\n';
    return files;
}

CleanDataset load_dataset(const std::filesystem::path& path) {
    std::filesystem::path csv_path = path;
    std::filesystem::path side_path = path;
    csv_path.replace_extension(".csv");
    side_path.replace_extension(".json");
    std::ifstream side_in(side_path, std::ios::binary);
    if (!side_in) throw FormatError("missing sidecar " + side_path.string());
    std::ifstream csv_in(csv_path, std::ios::binary);
    if (!csv_in) throw FormatError("cannot open " + csv_path.string());

    CleanDataset ds;
    try {
        const json j = json::parse(side_in);
        if (j.value("format", "") != "tlbench-dataset") throw FormatError("not a tlbench dataset sidecar");
        ds.id = j.at("id").get<std::string>();
        const auto length = j.at("length").get<std::size_t>();
        for (const auto& js : j.at("sites")) {
            Site site;
            site.id = js.at("id").get<std::string>();
            site.metadata.site = js.value("site", "");
            site.metadata.climate_zone = js.value("climate_zone", "");
            site.schema = FeatureSchema::parse(js.at("schema").get<std::string>());
            for (auto f : site.schema.features()) {
                site.weather_scale[static_cast<std::size_t>(f)] =
                    scale_from(js.at("weather_scale").at(std::string(abbreviation(f))));
                site.weather[static_cast<std::size_t>(f)].reserve(length);
            }
            for (const auto& seg : js.at("segments")) {
                site.layout.segments.push_back({parse_role(seg.at("role").get<std::string>()),
                                                seg.at("begin").get<std::size_t>(), seg.at("end").get<std::size_t>()});
            }
            const json& pads = js.at("pad_ranges");
            if (!pads.empty()) {
                site.pad_mask.assign(length, 0);
                for (const auto& r : pads) {
                    const auto b = r.at(0).get<std::size_t>();
                    const auto e = r.at(1).get<std::size_t>();
                    if (b > e || e > length) throw FormatError("pad range out of bounds");
                    std::fill(site.pad_mask.begin() + static_cast<std::ptrdiff_t>(b),
                              site.pad_mask.begin() + static_cast<std::ptrdiff_t>(e), 1);
                }
            }
            ds.sites.push_back(std::move(site));
        }
        for (const auto& jb : j.at("buildings")) {
            CleanBuilding b;
            b.name = jb.at("name").get<std::string>();
            b.source = jb.at("source").get<std::string>();
            b.member = jb.at("member").get<std::string>();
            b.site = jb.at("site").get<std::size_t>();
            if (b.site >= ds.sites.size()) throw FormatError("building '" + b.name + "' references unknown site");
            b.scale = scale_from(jb.at("scale"));
            b.values.reserve(length);
            ds.buildings.push_back(std::move(b));
        }
        const json& removed = j.at("removed");
        ds.log.dropped_sparse = removed.at("sparse").get<std::vector<std::string>>();
        ds.log.dropped_zero = removed.at("zero").get<std::vector<std::string>>();
        ds.log.interpolated_cells = removed.at("interpolated_cells").get<std::size_t>();
        ds.timestamps.reserve(length);
    } catch (const json::exception& e) {
        throw FormatError(side_path.string() + ": " + e.what());
    }

    std::stringstream buffer;
    buffer << csv_in.rdbuf();
    const std::string text = buffer.str();
    const auto rows = csv::lines(text);
    if (rows.empty()) throw FormatError(csv_path.string() + ": empty file");
    const auto header = csv::split_record(rows.front());
    std::size_t weather_cols = 0;
    for (const auto& site : ds.sites) weather_cols += site.schema.width();
    if (header.size() != 1 + ds.buildings.size() + weather_cols) {
        throw FormatError(csv_path.string() + ": column count does not match sidecar");
    }
    for (std::size_t b = 0; b < ds.buildings.size(); ++b) {
        if (header[1 + b] != ds.buildings[b].name) {
            throw FormatError(csv_path.string() + ": column '" + header[1 + b] + "' does not match sidecar");
        }
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].empty()) continue;
        const auto cells = csv::split_record(rows[r]);
        if (cells.size() != header.size()) {
            throw FormatError(csv_path.string() + ": line " + std::to_string(r + 1) + " has wrong column count");
        }
        ds.timestamps.push_back(parse_timestamp(cells[0]));
        std::size_t c = 1;
        auto number = [&](const std::string& cell) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                return v;
            } catch (const std::exception&) {
                throw FormatError(csv_path.string() + ": bad number '" + cell + "' at line " + std::to_string(r + 1));
            }
        };
        for (auto& b : ds.buildings) b.values.push_back(number(cells[c++]));
        for (auto& site : ds.sites) {
            for (auto f : site.schema.features()) site.weather[static_cast<std::size_t>(f)].push_back(number(cells[c++]));
        }
    }
    for (const auto& site : ds.sites) {
        if (site.layout.segments.empty() || site.layout.segments.back().end != ds.length()) {
            throw FormatError(side_path.string() + ": split layout does not cover " + std::to_string(ds.length()) + " rows");
        }
    }
    return ds;
}

} // namespace tlbench
