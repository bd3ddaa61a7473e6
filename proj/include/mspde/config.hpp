#pragma once

// Run configuration: parsing with validation, and emission of the fully
// resolved form (every defaulted field written out). emit(parse(x)) parses
// back to the same configuration.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspde/experiments.hpp"
#include "mspde/grid.hpp"
#include "mspde/noise.hpp"
#include "mspde/solver.hpp"

namespace mspde {

struct NoiseSettings {
  std::string kind = "additive";  // additive | multiplicative | none
  std::size_t modes = 0;          // 0: min(nodes, 16)
  std::uint64_t seed = 0;
  double q_decay = 1.1;
  double amplitude = 1.0;
  Sigma sigma;
  TimeProfile profile;
};

struct InitialSettings {
  std::string kind = "sine";  // zero | sine | bump
  int mode = 1;
  double amplitude = 1.0;
};

struct LadderSettings {
  std::vector<double> lambda;
  std::vector<double> epsilon;
  std::vector<double> tau;
};

struct ExperimentSettings {
  std::string kind = "solve";  // solve | verify | converge | potential-table
  std::size_t paths = 1;
  std::string output_dir = "mspde_out";
  std::uint64_t seed = 0;
  int workers = 0;
  std::vector<double> snapshot_times;
  LadderSettings ladder;
  bool dump_noise = false;
  std::vector<double> eps_grid;    // verify: maximal estimate
  std::vector<double> thresholds;  // verify: uniform integrability
  double table_radius = 3.0;       // potential-table: x in [-radius, radius]
  std::size_t table_points = 61;
  std::vector<double> table_lambdas;
};

struct RunConfig {
  GridPtr grid;
  nlohmann::json potential;
  NoiseSettings noise;
  SolverConfig solver;
  InitialSettings initial;
  ExperimentSettings experiment;
};

RunConfig parse_config(const nlohmann::json& j);
nlohmann::json emit_config(const RunConfig& cfg);

std::string scheme_name(Scheme s);

Potential build_potential(const RunConfig& cfg);
WienerConfig build_wiener(const RunConfig& cfg);
DiffusionOperator build_diffusion(const RunConfig& cfg, const WienerConfig& wiener);
Field build_initial(const RunConfig& cfg);
EnsembleSpec build_ensemble(const RunConfig& cfg);

}  // namespace mspde
