#pragma once

// mps-json v1 and stacked-mps-json v1 interchange formats.
//
//   mps-json:          {"version": 1, "L": n, "units": [{"shape": [...], "data": [...]}, ...]}
//   stacked-mps-json:  {"version": 1, "format": "stacked-mps", "B": b, "L": n,
//                       "placement": site, "units": [[unit, ...], ...]}   (B rows of L units)
//
// Data are flat row-major lists. Doubles are written in shortest round-trip
// form, so reading a file back reproduces every value bit for bit.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tnstack/mps.hpp"
#include "tnstack/stacking.hpp"

namespace tnstack {

inline constexpr int kJsonVersion = 1;

inline nlohmann::json unit_to_json(const DenseTensor& t) {
    nlohmann::json j;
    j["shape"] = t.shape().dims();
    j["data"] = std::vector<double>(t.data().begin(), t.data().end());
    return j;
}

inline DenseTensor unit_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("data"))
        throw FormatError("unit entry needs 'shape' and 'data'");
    try {
        auto dims = j.at("shape").get<std::vector<std::size_t>>();
        auto data = j.at("data").get<std::vector<double>>();
        return DenseTensor(Shape(std::move(dims)), std::move(data));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed unit entry: ") + e.what());
    } catch (const DimensionError& e) {
        throw FormatError(std::string("inconsistent unit entry: ") + e.what());
    }
}

inline nlohmann::json units_to_json(std::span<const DenseTensor> units) {
    nlohmann::json j;
    j["version"] = kJsonVersion;
    j["L"] = units.size();
    j["units"] = nlohmann::json::array();
    for (const auto& u : units) j["units"].push_back(unit_to_json(u));
    return j;
}

inline nlohmann::json to_json(const Mps& m) { return units_to_json(m.units()); }

namespace detail {

inline void check_version(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("version")) throw FormatError("missing 'version'");
    if (j.at("version") != kJsonVersion) throw FormatError("unsupported version " + j.at("version").dump());
}

}  // namespace detail

/// Units of an mps-json document without MPS validation (dense stacked exports
/// with a non-final stack leg are not valid MPS).
inline std::vector<DenseTensor> units_from_json(const nlohmann::json& j) {
    detail::check_version(j);
    if (!j.contains("units") || !j.at("units").is_array()) throw FormatError("missing 'units' list");
    std::vector<DenseTensor> units;
    for (const auto& u : j.at("units")) units.push_back(unit_from_json(u));
    if (j.contains("L") && j.at("L") != units.size()) throw FormatError("'L' does not match the number of units");
    return units;
}

inline Mps mps_from_json(const nlohmann::json& j) {
    try {
        return Mps(units_from_json(j));
    } catch (const ShapeError& e) {
        throw FormatError(std::string("not a valid MPS: ") + e.what());
    }
}

inline nlohmann::json to_json(const StackedMps& s) {
    nlohmann::json j;
    j["version"] = kJsonVersion;
    j["format"] = "stacked-mps";
    j["B"] = s.batch();
    j["L"] = s.length();
    j["placement"] = s.stack_site();
    j["units"] = nlohmann::json::array();
    for (const auto& m : s.sources()) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& u : m.units()) row.push_back(unit_to_json(u));
        j["units"].push_back(std::move(row));
    }
    return j;
}

inline StackedMps stacked_from_json(const nlohmann::json& j) {
    detail::check_version(j);
    if (!j.contains("format") || j.at("format") != "stacked-mps") throw FormatError("not a stacked-mps document");
    if (!j.contains("units") || !j.at("units").is_array()) throw FormatError("missing 'units' grid");
    std::vector<Mps> inputs;
    try {
        for (const auto& row : j.at("units")) {
            std::vector<DenseTensor> units;
            for (const auto& u : row) units.push_back(unit_from_json(u));
            inputs.emplace_back(std::move(units));
        }
        if (j.contains("B") && j.at("B") != inputs.size()) throw FormatError("'B' does not match the unit grid");
        StackPlacement placement;
        if (j.contains("placement")) placement.site = j.at("placement").get<std::size_t>();
        return StackedMps(std::move(inputs), placement);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed stacked-mps document: ") + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(std::string("invalid MPS in stacked-mps document: ") + e.what());
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
    const std::string text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) { write_text_file(path, j.dump() + "\n"); }

}  // namespace tnstack
