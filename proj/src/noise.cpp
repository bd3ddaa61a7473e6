#include "mspde/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <tuple>

#include "mspde/ensemble.hpp"
#include "mspde/errors.hpp"

namespace mspde {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform in (0, 1), never 0 so the logarithm below is finite.
constexpr double to_unit(std::uint64_t x) {
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

Field sine_mode(const GridPtr& grid, std::size_t j, std::size_t k) {
  const Grid& g = *grid;
  Field e(grid);
  const double pi = std::numbers::pi;
  const std::size_t nx = g.nodes(0);
  const double ax = std::sqrt(2.0 / g.extent(0));
  if (g.dim() == 1) {
    for (std::size_t i = 0; i < nx; ++i)
      e[i] = ax * std::sin(pi * static_cast<double>(j * (i + 1)) / static_cast<double>(nx + 1));
    return e;
  }
  const std::size_t ny = g.nodes(1);
  const double ay = std::sqrt(2.0 / g.extent(1));
  for (std::size_t jj = 0; jj < ny; ++jj)
    for (std::size_t i = 0; i < nx; ++i)
      e[g.index(i, jj)] =
          ax * std::sin(pi * static_cast<double>(j * (i + 1)) / static_cast<double>(nx + 1)) * ay *
          std::sin(pi * static_cast<double>(k * (jj + 1)) / static_cast<double>(ny + 1));
  return e;
}

double axis_eigenvalue(const Grid& g, int axis, std::size_t j) {
  const double s = std::sin(std::numbers::pi * static_cast<double>(j) /
                            (2.0 * static_cast<double>(g.nodes(axis) + 1)));
  return 4.0 * s * s / (g.h(axis) * g.h(axis));
}

}  // namespace

WienerConfig make_wiener(GridPtr grid, std::size_t modes, std::uint64_t seed) {
  if (modes < 1) throw ConfigError("noise needs at least one mode");
  if (modes > grid->size()) throw ConfigError("noise modes exceed the number of grid nodes");
  WienerConfig cfg;
  cfg.grid = grid;
  cfg.modes = modes;
  cfg.seed = seed;

  // (eigenvalue, j, k) for every discrete sine mode, sorted; ties by index.
  std::vector<std::tuple<double, std::size_t, std::size_t>> all;
  const Grid& g = *grid;
  if (g.dim() == 1) {
    for (std::size_t j = 1; j <= g.nodes(0); ++j) all.emplace_back(axis_eigenvalue(g, 0, j), j, 0);
  } else {
    for (std::size_t k = 1; k <= g.nodes(1); ++k)
      for (std::size_t j = 1; j <= g.nodes(0); ++j)
        all.emplace_back(axis_eigenvalue(g, 0, j) + axis_eigenvalue(g, 1, k), j, k);
  }
  std::stable_sort(all.begin(), all.end());
  for (std::size_t m = 0; m < modes; ++m) {
    const auto& [mu, j, k] = all[m];
    cfg.basis.push_back(sine_mode(grid, j, k));
    cfg.eigenvalues.push_back(mu);
  }
  return cfg;
}

std::size_t default_modes(const Grid& grid) { return std::min<std::size_t>(grid.size(), 16); }

void standard_normals(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::span<double> out) {
  const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ path) ^ step);
  for (std::size_t j = 0; j < out.size(); j += 2) {
    const std::uint64_t pair = j / 2;
    const double u1 = to_unit(splitmix64(key ^ (2 * pair + 1)));
    const double u2 = to_unit(splitmix64(key ^ (2 * pair + 2)));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[j] = r * std::cos(angle);
    if (j + 1 < out.size()) out[j + 1] = r * std::sin(angle);
  }
}

NoisePath sample_increments(const WienerConfig& cfg, std::size_t steps, double tau, std::uint64_t path) {
  if (steps < 1) throw ConfigError("noise path needs at least one step");
  if (!(tau > 0.0)) throw ConfigError("noise path needs tau > 0");
  NoisePath out;
  out.steps = steps;
  out.modes = cfg.modes;
  out.tau = tau;
  out.seed = cfg.seed;
  out.path = path;
  out.increments.resize(steps * cfg.modes);
  const double scale = std::sqrt(tau);
  for (std::size_t n = 0; n < steps; ++n) {
    std::span<double> row(out.increments.data() + n * cfg.modes, cfg.modes);
    standard_normals(cfg.seed, path, n, row);
    for (double& v : row) v *= scale;
  }
  return out;
}

NoisePath coarsen(const NoisePath& fine, std::size_t factor) {
  if (factor < 1 || fine.steps % factor != 0)
    throw ConfigError("coarsening factor must divide the number of steps");
  NoisePath out = fine;
  out.steps = fine.steps / factor;
  out.tau = fine.tau * static_cast<double>(factor);
  out.increments.assign(out.steps * out.modes, 0.0);
  for (std::size_t n = 0; n < fine.steps; ++n) {
    const auto row = fine.step(n);
    double* dst = out.increments.data() + (n / factor) * out.modes;
    for (std::size_t j = 0; j < out.modes; ++j) dst[j] += row[j];
  }
  return out;
}

// ---------------------------------------------------------------------------

double Sigma::operator()(double u) const {
  switch (kind) {
    case Kind::zero:
      return 0.0;
    case Kind::identity_clipped:
      return lipschitz * std::clamp(u, -clip, clip);
    case Kind::tanh:
      return lipschitz * std::tanh(u);
    case Kind::affine:
      return offset + lipschitz * u;
  }
  return 0.0;
}

double TimeProfile::operator()(double t) const {
  if (kind == Kind::constant) return value;
  return value * (1.0 + amplitude * std::sin(2.0 * std::numbers::pi * frequency * t));
}

std::vector<double> DiffusionOperator::decay_weights(std::size_t modes, double decay, double amplitude) {
  std::vector<double> q(modes);
  for (std::size_t j = 0; j < modes; ++j) q[j] = amplitude * std::pow(static_cast<double>(j + 1), -decay);
  return q;
}

DiffusionOperator DiffusionOperator::additive(const WienerConfig& cfg, std::vector<double> weights,
                                              TimeProfile profile) {
  DiffusionOperator b;
  b.kind_ = NoiseKind::additive;
  b.grid_ = cfg.grid;
  b.weights_ = std::move(weights);
  b.profile_ = profile;
  b.basis_ = cfg.basis;
  b.finish_setup();
  return b;
}

DiffusionOperator DiffusionOperator::multiplicative(const WienerConfig& cfg, std::vector<double> weights,
                                                    Sigma sigma) {
  DiffusionOperator b;
  b.kind_ = NoiseKind::multiplicative;
  b.grid_ = cfg.grid;
  b.weights_ = std::move(weights);
  b.sigma_ = sigma;
  b.basis_ = cfg.basis;
  b.finish_setup();
  return b;
}

void DiffusionOperator::finish_setup() {
  if (weights_.size() != basis_.size())
    throw ConfigError("diffusion operator needs one weight per noise mode");
  mode_fields_.clear();
  weight_sq_.assign(grid_->size(), 0.0);
  double c2 = 0.0;
  for (std::size_t j = 0; j < basis_.size(); ++j) {
    Field f = weights_[j] * basis_[j];
    double sup = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      weight_sq_[i] += f[i] * f[i];
      sup = std::max(sup, std::abs(basis_[j][i]));
    }
    c2 += weights_[j] * weights_[j] * sup * sup;
    mode_fields_.push_back(std::move(f));
  }
  c_basis_ = std::sqrt(c2);
}

double DiffusionOperator::lipschitz_hs() const noexcept {
  if (kind_ == NoiseKind::additive) return 0.0;
  return std::abs(sigma_.lipschitz) * c_basis_;
}

bool DiffusionOperator::state_independent() const noexcept {
  if (kind_ == NoiseKind::additive) return true;
  if (sigma_.constant()) return true;
  return std::all_of(weights_.begin(), weights_.end(), [](double q) { return q == 0.0; });
}

std::vector<Field> DiffusionOperator::components(double t, const Field& u) const {
  std::vector<Field> out;
  out.reserve(mode_fields_.size());
  if (kind_ == NoiseKind::additive) {
    const double s = profile_(t);
    for (const auto& f : mode_fields_) out.push_back(s * f);
    return out;
  }
  for (const auto& f : mode_fields_) {
    Field c = f;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= sigma_(u[i]);
    for (const auto& s : smoothing_) c = resolvent_smoother(c, s.epsilon, s.m);
    out.push_back(std::move(c));
  }
  return out;
}

Field DiffusionOperator::apply(double t, const Field& u, std::span<const double> dw) const {
  if (dw.size() != mode_fields_.size()) throw ConfigError("increment count differs from the noise modes");
  Field out(grid_);
  for (std::size_t j = 0; j < mode_fields_.size(); ++j)
    if (dw[j] != 0.0) out.axpy(dw[j], mode_fields_[j]);
  if (kind_ == NoiseKind::additive) {
    out *= profile_(t);
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sigma_(u[i]);
  for (const auto& s : smoothing_) out = resolvent_smoother(out, s.epsilon, s.m);
  return out;
}

double DiffusionOperator::hs_norm_sq(double t, const Field& u) const {
  const double vol = grid_->cell_volume();
  if (kind_ == NoiseKind::additive) {
    double sum = 0.0;
    for (const auto& f : mode_fields_) sum += inner(f, f);
    const double s = profile_(t);
    return s * s * sum;
  }
  if (smoothing_.empty()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < weight_sq_.size(); ++i) {
      const double s = sigma_(u[i]);
      sum += s * s * weight_sq_[i];
    }
    return sum * vol;
  }
  double sum = 0.0;
  for (const auto& c : components(t, u)) sum += inner(c, c);
  return sum;
}

DiffusionOperator DiffusionOperator::mollified(double epsilon, int m) const {
  if (!(epsilon > 0.0)) throw ConfigError("mollification needs epsilon > 0");
  if (m < 1) throw ConfigError("mollification needs m >= 1");
  DiffusionOperator out = *this;
  out.smoothing_.push_back({epsilon, m});
  if (kind_ == NoiseKind::additive)
    for (auto& f : out.mode_fields_) f = resolvent_smoother(f, epsilon, m);
  return out;
}

nlohmann::json DiffusionOperator::describe() const {
  nlohmann::json j;
  j["kind"] = kind_ == NoiseKind::additive ? "additive" : "multiplicative";
  j["modes"] = modes();
  j["c_basis"] = c_basis_;
  j["lipschitz_hs"] = lipschitz_hs();
  nlohmann::json sm = nlohmann::json::array();
  for (const auto& s : smoothing_) sm.push_back({{"epsilon", s.epsilon}, {"m", s.m}});
  j["smoothing"] = sm;
  return j;
}

Field apply_diffusion(const DiffusionOperator& b, double t, const Field& u, std::span<const double> dw) {
  return b.apply(t, u, dw);
}

double hs_norm_sq(const DiffusionOperator& b, double t, const Field& u) { return b.hs_norm_sq(t, u); }

DiffusionOperator mollify(const DiffusionOperator& b, double epsilon, int m) {
  return b.mollified(epsilon, m);
}

ItoIsometry ito_isometry_check(const DiffusionOperator& b, const WienerConfig& cfg, std::size_t paths,
                               std::size_t steps, double tau, const Field& frozen) {
  if (paths < 100) throw ConfigError("Ito isometry check needs at least 100 paths");
  ItoIsometry out;
  for (std::size_t n = 0; n < steps; ++n) out.rhs += tau * b.hs_norm_sq(static_cast<double>(n) * tau, frozen);

  const auto per_path = run_paths(paths, [&](std::size_t p) {
    const NoisePath noise = sample_increments(cfg, steps, tau, p);
    Field sum(cfg.grid);
    for (std::size_t n = 0; n < steps; ++n)
      sum += b.apply(static_cast<double>(n) * tau, frozen, noise.step(n));
    return inner(sum, sum);
  });
  out.lhs = std::accumulate(per_path.begin(), per_path.end(), 0.0) / static_cast<double>(paths);
  out.rel_err = out.rhs == 0.0 ? (out.lhs == 0.0 ? 0.0 : 1.0) : std::abs(out.lhs - out.rhs) / out.rhs;
  return out;
}

ItoIsometry ito_isometry_check(const DiffusionOperator& b, const WienerConfig& cfg, std::size_t paths,
                               std::size_t steps, double tau) {
  Field ones(cfg.grid, std::vector<double>(cfg.grid->size(), 1.0));
  return ito_isometry_check(b, cfg, paths, steps, tau, ones);
}

}  // namespace mspde
