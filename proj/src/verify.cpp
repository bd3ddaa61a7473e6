#include "mspde/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mspde/ensemble.hpp"
#include "mspde/errors.hpp"

namespace mspde {

namespace {

void require_flux(const SolutionPath& path) {
  if (path.fields.empty()) throw MissingFlux("empty solution path");
  if (path.drift_flux.size() != path.fields.size())
    throw MissingFlux("solution path does not carry the drift flux");
  if (path.stride != 1) throw ConfigError("energy identities need every step recorded (record_stride = 1)");
}

VectorField midpoint_gradient(const Field& a, const Field& b) {
  VectorField g = gradient(a);
  g += gradient(b);
  g *= 0.5;
  return g;
}

}  // namespace

nlohmann::json EnergyLedger::to_json() const {
  return {{"half_norm_sq", half_norm_sq},
          {"half_norm_sq_initial", half_norm_sq_initial},
          {"damping_sum", damping_sum},
          {"flux_sum", flux_sum},
          {"ito_correction", ito_correction},
          {"ito_correction_expected", ito_correction_expected},
          {"martingale_sum", martingale_sum},
          {"residual", residual},
          {"alpha", alpha},
          {"c", c}};
}

std::vector<VectorField> step_fluxes(const SolutionPath& path) {
  require_flux(path);
  const double lambda = path.config.lambda;
  const bool implicit = path.config.scheme == Scheme::prox_implicit_reference;
  std::vector<VectorField> out;
  out.reserve(path.fields.size() - 1);
  for (std::size_t n = 0; n + 1 < path.fields.size(); ++n) {
    VectorField zeta = path.drift_flux[implicit ? n + 1 : n];
    zeta.axpy(lambda, gradient(path.fields[n + 1]));
    out.push_back(std::move(zeta));
  }
  return out;
}

EnergyLedger energy_identity_residual(const SolutionPath& path, const DiffusionOperator& b, double alpha,
                                      double c) {
  require_flux(path);
  if (!path.noise) throw MissingFlux("solution path does not carry its noise increments");
  const DiffusionOperator beff = effective_diffusion(b, path.config);
  const std::vector<VectorField> zeta = step_fluxes(path);
  const double tau = path.config.tau;

  EnergyLedger led;
  led.alpha = alpha;
  led.c = c;
  led.half_norm_sq_initial = 0.5 * inner(path.fields[0], path.fields[0]);
  led.residual_trace.reserve(zeta.size());
  for (std::size_t n = 0; n < zeta.size(); ++n) {
    const Field& u = path.fields[n];
    const Field& next = path.fields[n + 1];
    const Field& state = path.state_for_diffusion(n);
    const double t = path.times[n];
    const double w2 = std::exp(-2.0 * alpha * t);
    const double w2_next = std::exp(-2.0 * alpha * path.times[n + 1]);
    const Field xi = beff.apply(t, state, path.noise->step(n));
    const double next_sq = inner(next, next);

    led.damping_sum += 0.5 * (w2 - w2_next) * next_sq;
    led.flux_sum += w2 * tau * inner(zeta[n], midpoint_gradient(u, next));
    led.ito_correction += 0.5 * w2 * inner(xi, xi);
    led.ito_correction_expected += 0.5 * w2 * tau * beff.hs_norm_sq(t, state);
    led.martingale_sum += w2 * inner(u, xi);
    led.half_norm_sq = 0.5 * w2_next * next_sq;
    led.residual_trace.push_back(led.half_norm_sq + led.damping_sum + led.flux_sum - led.half_norm_sq_initial -
                                 led.ito_correction - led.martingale_sum);
  }
  if (zeta.empty()) led.half_norm_sq = led.half_norm_sq_initial;
  led.residual = led.residual_trace.empty() ? 0.0 : led.residual_trace.back();
  return led;
}

std::vector<Field> forcing_path(const SolutionPath& path, const DiffusionOperator& b) {
  if (!path.noise) throw MissingFlux("solution path does not carry its noise increments");
  if (path.stride != 1) throw ConfigError("forcing path needs every step recorded (record_stride = 1)");
  const DiffusionOperator beff = effective_diffusion(b, path.config);
  std::vector<Field> f;
  f.reserve(path.fields.size());
  f.emplace_back(path.fields[0].grid_ptr());
  for (std::size_t n = 0; n + 1 < path.fields.size(); ++n)
    f.push_back(f.back() + beff.apply(path.times[n], path.state_for_diffusion(n), path.noise->step(n)));
  return f;
}

double deterministic_energy_identity(const std::vector<Field>& y_path, const std::vector<VectorField>& flux_path,
                                     const std::vector<Field>& f_path, double tau) {
  if (y_path.empty()) return 0.0;
  if (f_path.size() != y_path.size() || flux_path.size() + 1 < y_path.size())
    throw ConfigError("deterministic_energy_identity needs aligned y, flux and forcing paths");
  const Field z0 = y_path.front() - f_path.front();
  double flux_sum = 0.0;
  Field z = z0;
  for (std::size_t n = 0; n + 1 < y_path.size(); ++n) {
    Field z_next = y_path[n + 1] - f_path[n + 1];
    flux_sum += tau * inner(flux_path[n], midpoint_gradient(z, z_next));
    z = std::move(z_next);
  }
  return inner(z, z) + 2.0 * flux_sum - inner(z0, z0);
}

bool MaximalEstimateTable::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const MaximalEstimateRow& r) { return r.pass; });
}

nlohmann::json MaximalEstimateTable::to_json() const {
  nlohmann::json j;
  j["c"] = c;
  j["protocol"] = protocol;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"epsilon", r.epsilon},
                         {"lhs", r.lhs},
                         {"op_term", r.op_term},
                         {"hs_term", r.hs_term},
                         {"n_minimal", r.n_minimal},
                         {"n_fitted", r.n_fitted},
                         {"rhs", r.rhs},
                         {"slack", r.slack},
                         {"pass", r.pass}});
  return j;
}

MaximalEstimateTable maximal_estimate_check(const std::vector<Field>& f_path, const DiffusionOperator& g,
                                            const WienerConfig& wiener, const MaximalEstimateConfig& cfg,
                                            std::size_t paths, const std::vector<double>& eps_grid) {
  if (paths < 100) throw ConfigError("maximal_estimate_check needs at least 100 paths");
  if (f_path.size() < cfg.steps) throw ConfigError("F trajectory is shorter than the step count");
  if (wiener.modes != g.modes()) throw ConfigError("Wiener process and operator disagree on modes");
  for (double e : eps_grid)
    if (!(e > 0.0)) throw ConfigError("eps_grid entries must be positive");

  // <F_n, G_n e_j> and the deterministic right-hand-side terms.
  std::vector<std::vector<double>> coupling(cfg.steps);
  double op_term = 0.0;
  double hs_term = 0.0;
  for (std::size_t n = 0; n < cfg.steps; ++n) {
    const double t = static_cast<double>(n) * cfg.tau;
    for (const Field& col : g.components(t, f_path[n])) coupling[n].push_back(inner(f_path[n], col));
    hs_term += cfg.tau * g.hs_norm_sq(t, f_path[n]);
  }
  for (std::size_t n = 0; n < std::min(f_path.size(), cfg.steps + 1); ++n)
    op_term = std::max(op_term, inner(f_path[n], f_path[n]));

  auto batch_lhs = [&](std::uint64_t seed) {
    WienerConfig w = wiener;
    w.seed = seed;
    const auto maxima = run_paths(paths, [&](std::size_t path) {
      const NoisePath noise = sample_increments(w, cfg.steps, cfg.tau, path);
      double s = 0.0, best = 0.0;
      for (std::size_t n = 0; n < cfg.steps; ++n) {
        const auto dw = noise.step(n);
        for (std::size_t j = 0; j < dw.size(); ++j) s += coupling[n][j] * dw[j];
        best = std::max(best, std::abs(s));
      }
      return best;
    });
    double sum = 0.0;
    for (double m : maxima) sum += m;
    return sum / static_cast<double>(paths);
  };

  MaximalEstimateTable table;
  table.protocol =
      "N(eps) = c/eps with c = " + std::to_string(cfg.safety) +
      " x the smallest constant valid on the calibration batch (seed " + std::to_string(cfg.seed) +
      "); evaluated on a fresh batch (seed " + std::to_string(cfg.seed + 1) + ")";
  const double lhs_cal = batch_lhs(cfg.seed);
  std::vector<double> n_min;
  for (double e : eps_grid) {
    const double need = lhs_cal - e * op_term;
    n_min.push_back(hs_term > 0.0 ? std::max(0.0, need / hs_term) : 0.0);
  }
  double c = 0.0;
  for (std::size_t i = 0; i < eps_grid.size(); ++i) c = std::max(c, eps_grid[i] * n_min[i]);
  table.c = cfg.safety * c;

  const double lhs = batch_lhs(cfg.seed + 1);
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    MaximalEstimateRow row;
    row.epsilon = eps_grid[i];
    row.lhs = lhs;
    row.op_term = op_term;
    row.hs_term = hs_term;
    row.n_minimal = n_min[i];
    row.n_fitted = table.c / eps_grid[i];
    row.rhs = row.epsilon * op_term + row.n_fitted * hs_term;
    row.slack = row.rhs - row.lhs;
    row.pass = row.slack >= 0.0;
    table.rows.push_back(row);
  }
  return table;
}

double conjugate_growth(const Potential& p, double radius) {
  if (!(radius > 0.0)) throw ConfigError("conjugate_growth needs a positive radius");
  const int n = p.dim();
  double best = INFINITY;
  if (n == 1) {
    for (double s : {-1.0, 1.0}) best = std::min(best, conjugate(p, vec({s * radius})) / radius);
    return best;
  }
  constexpr int kAngles = 256;
  Vec x = Vec::Zero(n);
  for (int k = 0; k < kAngles; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / kAngles;
    x.setZero();
    x[0] = radius * std::cos(theta);
    x[1] = radius * std::sin(theta);
    best = std::min(best, conjugate(p, x) / radius);
  }
  return best;
}

bool UiReport::holds() const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (tail_mass[i] > majorant[i] * (1.0 + 1e-12)) return false;
    if (i > 0 && thresholds[i] >= thresholds[i - 1] && tail_mass[i] > tail_mass[i - 1]) return false;
  }
  return true;
}

nlohmann::json UiReport::to_json() const {
  return {{"paths", paths},         {"bound", bound},       {"thresholds", thresholds},
          {"tail_mass", tail_mass}, {"majorant", majorant}, {"holds", holds()}};
}

UiAccumulator::UiAccumulator(Potential p, double lambda, std::vector<double> thresholds)
    : p_(std::move(p)), lambda_(lambda), thresholds_(std::move(thresholds)), tail_(thresholds_.size(), 0.0) {}

void UiAccumulator::add(const VectorField& grad, const VectorField& flux, double weight) {
  const Grid& g = grad.grid();
  const double w = weight * g.cell_volume() / g.dim();
  auto visit = [&](const Vec& gamma) {
    kstar_ += w * conjugate(p_, gamma);
    const double norm = gamma.norm();
    for (std::size_t i = 0; i < thresholds_.size(); ++i)
      if (norm > thresholds_[i]) tail_[i] += w * norm;
  };
  if (g.dim() == 1) {
    Vec y(1);
    for (double z : flux.axis(0)) {
      y[0] = z;
      visit(y);
    }
    return;
  }
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t f = 0; f < g.face_count(a); ++f) visit(yosida(p_, lambda_, face_vector(grad, a, f)));
}

void UiAccumulator::merge(const UiAccumulator& other) {
  if (other.thresholds_ != thresholds_) throw ConfigError("cannot merge UI accumulators with different thresholds");
  paths_ += other.paths_;
  kstar_ += other.kstar_;
  for (std::size_t i = 0; i < tail_.size(); ++i) tail_[i] += other.tail_[i];
}

UiReport UiAccumulator::report() const {
  UiReport r;
  r.paths = paths_;
  r.thresholds = thresholds_;
  const double scale = paths_ ? 1.0 / static_cast<double>(paths_) : 0.0;
  r.bound = kstar_ * scale;
  for (std::size_t i = 0; i < thresholds_.size(); ++i) {
    r.tail_mass.push_back(tail_[i] * scale);
    r.majorant.push_back(r.bound / conjugate_growth(p_, thresholds_[i]));
  }
  return r;
}

UiReport uniform_integrability_report(const std::vector<SolutionPath>& ensemble, const Potential& p,
                                      const std::vector<double>& thresholds) {
  const double lambda = ensemble.empty() ? 1.0 : ensemble.front().config.lambda;
  UiAccumulator acc(p, lambda, thresholds);
  for (const SolutionPath& path : ensemble) {
    if (path.drift_flux.size() != path.fields.size())
      throw MissingFlux("solution path does not carry the drift flux");
    for (std::size_t r = 0; r + 1 < path.fields.size(); ++r)
      acc.add(gradient(path.fields[r]), path.drift_flux[r], path.times[r + 1] - path.times[r]);
    acc.end_path();
  }
  return acc.report();
}

nlohmann::json DiagnosticRecord::to_json() const {
  return {{"check_name", check_name}, {"lhs", lhs}, {"rhs", rhs}, {"slack", slack}, {"pass", pass}};
}

}  // namespace mspde
