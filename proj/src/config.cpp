#include "mspde/config.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "mspde/errors.hpp"

namespace mspde {

namespace {

using nlohmann::json;

void reject_unknown(const json& block, const std::string& name, const std::set<std::string>& known) {
  if (!block.is_object()) throw ConfigError("'" + name + "' must be an object");
  for (const auto& [key, _] : block.items())
    if (!known.count(key)) throw ConfigError("unknown field '" + name + "." + key + "'");
}

template <class T>
T get_or(const json& block, const char* key, T fallback) {
  if (!block.contains(key) || block.at(key).is_null()) return fallback;
  return block.at(key).get<T>();
}

std::vector<double> number_list(const json& block, const char* key) {
  if (!block.contains(key)) return {};
  const json& v = block.at(key);
  if (v.is_number()) return {v.get<double>()};
  return v.get<std::vector<double>>();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

GridPtr parse_grid(const json& block) {
  reject_unknown(block, "grid", {"dim", "extent", "nodes"});
  const int dim = get_or<int>(block, "dim", block.contains("nodes") && block.at("nodes").is_array()
                                                 ? static_cast<int>(block.at("nodes").size())
                                                 : 1);
  require(dim == 1 || dim == 2, "grid.dim must be 1 or 2");
  auto broadcast = [&](const char* key, auto sample) {
    using T = decltype(sample);
    require(block.contains(key), std::string("grid.") + key + " is required");
    const json& v = block.at(key);
    std::vector<T> out = v.is_array() ? v.get<std::vector<T>>() : std::vector<T>(dim, v.get<T>());
    require(static_cast<int>(out.size()) == dim, std::string("grid.") + key + " needs one entry per axis");
    return out;
  };
  auto extent = broadcast("extent", 0.0);
  auto nodes = broadcast("nodes", std::size_t{0});
  for (double e : extent) require(e > 0.0, "grid.extent must be positive");
  for (std::size_t n : nodes) require(n >= 1 && n <= 4096, "grid.nodes must lie in [1, 4096]");
  return std::make_shared<const Grid>(std::move(extent), std::move(nodes));
}

Sigma::Kind sigma_kind(const std::string& s) {
  if (s == "zero") return Sigma::Kind::zero;
  if (s == "identity_clipped") return Sigma::Kind::identity_clipped;
  if (s == "tanh") return Sigma::Kind::tanh;
  if (s == "affine") return Sigma::Kind::affine;
  throw ConfigError("unknown noise.sigma_kind '" + s + "'", "unknown_kind");
}

std::string sigma_name(Sigma::Kind k) {
  switch (k) {
    case Sigma::Kind::zero:
      return "zero";
    case Sigma::Kind::identity_clipped:
      return "identity_clipped";
    case Sigma::Kind::tanh:
      return "tanh";
    case Sigma::Kind::affine:
      return "affine";
  }
  return "tanh";
}

NoiseSettings parse_noise(const json& block, const Grid& grid) {
  reject_unknown(block, "noise", {"kind", "modes", "seed", "q_decay", "amplitude", "sigma_kind", "L_B", "clip",
                                  "offset", "time_profile"});
  NoiseSettings n;
  n.kind = get_or<std::string>(block, "kind", "additive");
  require(n.kind == "additive" || n.kind == "multiplicative" || n.kind == "none",
          "noise.kind must be additive, multiplicative or none");
  n.modes = get_or<std::size_t>(block, "modes", default_modes(grid));
  require(n.modes >= 1 && n.modes <= grid.size(), "noise.modes must lie in [1, number of nodes]");
  n.seed = get_or<std::uint64_t>(block, "seed", 0);
  n.q_decay = get_or<double>(block, "q_decay", 1.1);
  require(n.q_decay > 0.5, "noise.q_decay must exceed 1/2");
  n.amplitude = get_or<double>(block, "amplitude", 1.0);
  require(n.amplitude >= 0.0, "noise.amplitude must be nonnegative");
  n.sigma.kind = sigma_kind(get_or<std::string>(block, "sigma_kind", "tanh"));
  n.sigma.lipschitz = get_or<double>(block, "L_B", 1.0);
  require(n.sigma.lipschitz >= 0.0, "noise.L_B must be nonnegative");
  n.sigma.clip = get_or<double>(block, "clip", 1.0);
  require(n.sigma.clip > 0.0, "noise.clip must be positive");
  n.sigma.offset = get_or<double>(block, "offset", 0.0);
  const json tp = block.contains("time_profile") ? block.at("time_profile") : json::object();
  reject_unknown(tp, "noise.time_profile", {"kind", "value", "amplitude", "frequency"});
  const std::string tk = get_or<std::string>(tp, "kind", "constant");
  require(tk == "constant" || tk == "periodic", "noise.time_profile.kind must be constant or periodic");
  n.profile.kind = tk == "constant" ? TimeProfile::Kind::constant : TimeProfile::Kind::periodic;
  n.profile.value = get_or<double>(tp, "value", 1.0);
  n.profile.amplitude = get_or<double>(tp, "amplitude", 0.0);
  n.profile.frequency = get_or<double>(tp, "frequency", 1.0);
  return n;
}

Scheme parse_scheme(std::string s) {
  for (char& c : s)
    if (c == '-') c = '_';
  if (s == "explicit_drift") return Scheme::explicit_drift;
  if (s == "prox_implicit_reference") return Scheme::prox_implicit_reference;
  throw ConfigError("unknown solver.scheme '" + s + "'", "unknown_kind");
}

SolverConfig parse_solver(const json& block, const Grid& grid) {
  reject_unknown(block, "solver", {"lambda", "epsilon", "m", "tau", "T", "alpha", "picard_tol", "picard_max",
                                   "scheme", "cfl_c", "record_stride"});
  SolverConfig s;
  s.lambda = get_or<double>(block, "lambda", 0.1);
  s.epsilon = get_or<double>(block, "epsilon", 0.0);
  s.m = get_or<int>(block, "m", default_smoothing_exponent(grid.dim()));
  s.T = get_or<double>(block, "T", 0.01);
  s.alpha = get_or<double>(block, "alpha", -1.0);
  s.picard_tol = get_or<double>(block, "picard_tol", 1e-10);
  s.picard_max = get_or<int>(block, "picard_max", 50);
  s.scheme = parse_scheme(get_or<std::string>(block, "scheme", "explicit_drift"));
  s.cfl_c = get_or<double>(block, "cfl_c", 0.25);
  s.record_stride = get_or<std::size_t>(block, "record_stride", 1);
  require(s.lambda > 0.0, "solver.lambda must be positive");
  require(s.epsilon >= 0.0, "solver.epsilon must be nonnegative");
  require(s.m >= 1, "solver.m must be at least 1");
  require(s.T > 0.0, "solver.T must be positive");
  require(s.picard_tol > 0.0, "solver.picard_tol must be positive");
  require(s.picard_max >= 1, "solver.picard_max must be at least 1");
  require(s.cfl_c > 0.0, "solver.cfl_c must be positive");
  require(s.record_stride >= 1, "solver.record_stride must be at least 1");
  if (block.contains("tau")) {
    s.tau = block.at("tau").get<double>();
    require(s.tau > 0.0 && s.tau <= s.T, "solver.tau must lie in (0, T]");
  } else {
    s.tau = s.T;
    s.tau = common_tau(grid, s, s.lambda);
  }
  (void)s.steps();
  return s;
}

InitialSettings parse_initial(const json& block) {
  reject_unknown(block, "initial", {"kind", "mode", "amplitude"});
  InitialSettings i;
  i.kind = get_or<std::string>(block, "kind", "sine");
  require(i.kind == "zero" || i.kind == "sine" || i.kind == "bump", "initial.kind must be zero, sine or bump");
  i.mode = get_or<int>(block, "mode", 1);
  require(i.mode >= 1, "initial.mode must be at least 1");
  i.amplitude = get_or<double>(block, "amplitude", 1.0);
  return i;
}

ExperimentSettings parse_experiment(const json& block) {
  reject_unknown(block, "experiment", {"kind", "paths", "output_dir", "seed", "workers", "snapshot_times", "ladder",
                                       "dump_noise", "eps_grid", "thresholds", "table_radius", "table_points",
                                       "table_lambdas"});
  ExperimentSettings e;
  e.kind = get_or<std::string>(block, "kind", "solve");
  require(e.kind == "solve" || e.kind == "verify" || e.kind == "converge" || e.kind == "potential-table",
          "experiment.kind must be solve, verify, converge or potential-table");
  e.paths = get_or<std::size_t>(block, "paths", 1);
  require(e.paths >= 1, "experiment.paths must be at least 1");
  e.output_dir = get_or<std::string>(block, "output_dir", "mspde_out");
  e.seed = get_or<std::uint64_t>(block, "seed", 0);
  e.workers = get_or<int>(block, "workers", 0);
  require(e.workers >= 0, "experiment.workers must be nonnegative");
  e.snapshot_times = number_list(block, "snapshot_times");
  const json ladder = block.contains("ladder") ? block.at("ladder") : json::object();
  reject_unknown(ladder, "experiment.ladder", {"lambda", "epsilon", "tau"});
  e.ladder.lambda = number_list(ladder, "lambda");
  e.ladder.epsilon = number_list(ladder, "epsilon");
  e.ladder.tau = number_list(ladder, "tau");
  for (const auto* l : {&e.ladder.lambda, &e.ladder.epsilon, &e.ladder.tau})
    for (double v : *l) require(v > 0.0, "ladder entries must be positive");
  e.dump_noise = get_or<bool>(block, "dump_noise", false);
  e.eps_grid = block.contains("eps_grid") ? number_list(block, "eps_grid") : std::vector<double>{0.25, 0.5, 1.0, 2.0};
  e.thresholds = block.contains("thresholds") ? number_list(block, "thresholds") : std::vector<double>{0.5, 1, 2, 4};
  e.table_radius = get_or<double>(block, "table_radius", 3.0);
  require(e.table_radius > 0.0, "experiment.table_radius must be positive");
  e.table_points = get_or<std::size_t>(block, "table_points", 61);
  require(e.table_points >= 2, "experiment.table_points must be at least 2");
  e.table_lambdas = block.contains("table_lambdas") ? number_list(block, "table_lambdas")
                                                    : std::vector<double>{1.0, 0.1, 0.01};
  return e;
}

}  // namespace

std::string scheme_name(Scheme s) {
  return s == Scheme::explicit_drift ? "explicit_drift" : "prox_implicit_reference";
}

RunConfig parse_config(const json& j) {
  try {
    reject_unknown(j, "config", {"grid", "potential", "noise", "solver", "initial", "experiment", "run"});
    RunConfig cfg;
    require(j.contains("grid"), "config needs a 'grid' block");
    cfg.grid = parse_grid(j.at("grid"));
    require(j.contains("potential"), "config needs a 'potential' block");
    cfg.potential = j.at("potential");
    (void)make_potential(cfg.potential, cfg.grid->dim());
    cfg.noise = parse_noise(j.contains("noise") ? j.at("noise") : json::object(), *cfg.grid);
    cfg.solver = parse_solver(j.contains("solver") ? j.at("solver") : json::object(), *cfg.grid);
    cfg.initial = parse_initial(j.contains("initial") ? j.at("initial") : json::object());
    cfg.experiment = parse_experiment(j.contains("experiment") ? j.at("experiment") : json::object());
    const bool noise_seed = j.contains("noise") && j.at("noise").contains("seed");
    const bool exp_seed = j.contains("experiment") && j.at("experiment").contains("seed");
    if (noise_seed && exp_seed && cfg.noise.seed != cfg.experiment.seed)
      throw ConfigError("noise.seed and experiment.seed disagree");
    if (noise_seed && !exp_seed) cfg.experiment.seed = cfg.noise.seed;
    cfg.noise.seed = cfg.experiment.seed;
    if (cfg.solver.alpha < 0.0) {
      const WienerConfig w = build_wiener(cfg);
      cfg.solver.alpha = default_alpha(build_diffusion(cfg, w));
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json emit_config(const RunConfig& cfg) {
  const NoiseSettings& n = cfg.noise;
  const SolverConfig& s = cfg.solver;
  const ExperimentSettings& e = cfg.experiment;
  json out;
  out["grid"] = cfg.grid->to_json();
  out["potential"] = cfg.potential;
  out["noise"] = {{"kind", n.kind},
                  {"modes", n.modes},
                  {"seed", n.seed},
                  {"q_decay", n.q_decay},
                  {"amplitude", n.amplitude},
                  {"sigma_kind", sigma_name(n.sigma.kind)},
                  {"L_B", n.sigma.lipschitz},
                  {"clip", n.sigma.clip},
                  {"offset", n.sigma.offset},
                  {"time_profile",
                   {{"kind", n.profile.kind == TimeProfile::Kind::constant ? "constant" : "periodic"},
                    {"value", n.profile.value},
                    {"amplitude", n.profile.amplitude},
                    {"frequency", n.profile.frequency}}}};
  out["solver"] = {{"lambda", s.lambda},     {"epsilon", s.epsilon},       {"m", s.m},
                   {"tau", s.tau},           {"T", s.T},                   {"alpha", s.alpha},
                   {"picard_tol", s.picard_tol}, {"picard_max", s.picard_max}, {"scheme", scheme_name(s.scheme)},
                   {"cfl_c", s.cfl_c},       {"record_stride", s.record_stride}};
  out["initial"] = {{"kind", cfg.initial.kind}, {"mode", cfg.initial.mode}, {"amplitude", cfg.initial.amplitude}};
  out["experiment"] = {{"kind", e.kind},
                       {"paths", e.paths},
                       {"output_dir", e.output_dir},
                       {"seed", e.seed},
                       {"workers", e.workers},
                       {"snapshot_times", e.snapshot_times},
                       {"ladder", {{"lambda", e.ladder.lambda}, {"epsilon", e.ladder.epsilon}, {"tau", e.ladder.tau}}},
                       {"dump_noise", e.dump_noise},
                       {"eps_grid", e.eps_grid},
                       {"thresholds", e.thresholds},
                       {"table_radius", e.table_radius},
                       {"table_points", e.table_points},
                       {"table_lambdas", e.table_lambdas}};
  return out;
}

Potential build_potential(const RunConfig& cfg) { return make_potential(cfg.potential, cfg.grid->dim()); }

WienerConfig build_wiener(const RunConfig& cfg) { return make_wiener(cfg.grid, cfg.noise.modes, cfg.noise.seed); }

DiffusionOperator build_diffusion(const RunConfig& cfg, const WienerConfig& wiener) {
  const NoiseSettings& n = cfg.noise;
  const double amp = n.kind == "none" ? 0.0 : n.amplitude;
  auto weights = DiffusionOperator::decay_weights(n.modes, n.q_decay, amp);
  if (n.kind == "multiplicative") return DiffusionOperator::multiplicative(wiener, std::move(weights), n.sigma);
  return DiffusionOperator::additive(wiener, std::move(weights), n.profile);
}

Field build_initial(const RunConfig& cfg) {
  const Grid& g = *cfg.grid;
  Field u(cfg.grid);
  if (cfg.initial.kind == "zero") return u;
  for (std::size_t k = 0; k < g.size(); ++k) {
    double value = cfg.initial.amplitude;
    for (int a = 0; a < g.dim(); ++a) {
      const std::size_t i = a == 0 ? k % g.nodes(0) : k / g.nodes(0);
      const double x = static_cast<double>(i + 1) * g.h(a);
      const double L = g.extent(a);
      if (cfg.initial.kind == "sine") {
        value *= std::sin(cfg.initial.mode * std::numbers::pi * x / L);
      } else {
        const double r = (x - 0.5 * L) / (0.25 * L);
        value *= std::abs(r) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0;
      }
    }
    u[k] = value;
  }
  return u;
}

EnsembleSpec build_ensemble(const RunConfig& cfg) {
  const WienerConfig wiener = build_wiener(cfg);
  return EnsembleSpec{build_potential(cfg), build_diffusion(cfg, wiener), build_initial(cfg), cfg.solver, wiener,
                      cfg.experiment.paths, cfg.experiment.workers};
}

}  // namespace mspde
