#include "mspde/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mspde/errors.hpp"

namespace mspde {

static_assert(std::endian::native == std::endian::little, "noise dumps assume a little-endian host");

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + file.string());
  out << text;
}

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string(), "config_not_found");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& file, const nlohmann::json& j) { write_text(file, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::filesystem::path& file) {
  const std::string text = read_text(file);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what(), "config_parse_error");
  }
}

std::string field_csv(const Field& f) {
  const Grid& g = f.grid();
  std::string out = g.dim() == 1 ? "index,x,value\n" : "index,x,y,value\n";
  for (std::size_t k = 0; k < f.size(); ++k) {
    const std::size_t i = k % g.nodes(0);
    out += std::to_string(k) + ',' + format_double(static_cast<double>(i + 1) * g.h(0)) + ',';
    if (g.dim() == 2) out += format_double(static_cast<double>(k / g.nodes(0) + 1) * g.h(1)) + ',';
    out += format_double(f[k]) + '\n';
  }
  return out;
}

nlohmann::json field_snapshot(const Field& f, double time) {
  std::vector<double> values(f.values().begin(), f.values().end());
  return {{"grid", f.grid().to_json()}, {"time", time}, {"values", values}};
}

Field field_from_snapshot(const nlohmann::json& j, double* time) {
  GridPtr grid = Grid::from_json(j.at("grid"));
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != grid->size()) throw ConfigError("snapshot has the wrong number of values");
  if (time) *time = j.at("time").get<double>();
  return Field(grid, std::move(values));
}

void write_noise(const std::filesystem::path& stem, const NoisePath& noise) {
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path header = stem;
  header += ".json";
  if (bin.has_parent_path()) std::filesystem::create_directories(bin.parent_path());
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + bin.string());
  out.write(reinterpret_cast<const char*>(noise.increments.data()),
            static_cast<std::streamsize>(noise.increments.size() * sizeof(double)));
  write_json(header, {{"file", bin.filename().string()},
                      {"dtype", "float64"},
                      {"endianness", "little"},
                      {"layout", "row-major (step, mode)"},
                      {"steps", noise.steps},
                      {"modes", noise.modes},
                      {"tau", noise.tau},
                      {"seed", noise.seed},
                      {"path", noise.path}});
}

NoisePath read_noise(const std::filesystem::path& stem) {
  std::filesystem::path header = stem;
  header += ".json";
  const nlohmann::json h = read_json(header);
  NoisePath noise;
  noise.steps = h.at("steps").get<std::size_t>();
  noise.modes = h.at("modes").get<std::size_t>();
  noise.tau = h.at("tau").get<double>();
  noise.seed = h.at("seed").get<std::uint64_t>();
  noise.path = h.at("path").get<std::uint64_t>();
  noise.increments.resize(noise.steps * noise.modes);
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  in.read(reinterpret_cast<char*>(noise.increments.data()),
          static_cast<std::streamsize>(noise.increments.size() * sizeof(double)));
  if (!in) throw ConfigError("noise dump " + bin.string() + " is truncated or missing");
  return noise;
}

}  // namespace mspde
