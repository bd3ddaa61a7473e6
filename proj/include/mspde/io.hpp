#pragma once

// File formats: fields as CSV and JSON snapshots, noise paths as raw float64
// with a JSON header, plus small helpers shared by the CLI writers.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspde/grid.hpp"
#include "mspde/noise.hpp"

namespace mspde {

/// %.17g: round-trip exact for doubles.
std::string format_double(double x);

void write_text(const std::filesystem::path& file, const std::string& text);
std::string read_text(const std::filesystem::path& file);
void write_json(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& file);

/// Rows "index,x[,y],value", nodes in index order.
std::string field_csv(const Field& f);
nlohmann::json field_snapshot(const Field& f, double time);
Field field_from_snapshot(const nlohmann::json& j, double* time = nullptr);

/// Writes <stem>.bin (float64, row-major (step, mode), little-endian) and <stem>.json.
void write_noise(const std::filesystem::path& stem, const NoisePath& noise);
NoisePath read_noise(const std::filesystem::path& stem);

}  // namespace mspde
