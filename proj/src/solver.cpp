#include "mspde/solver.hpp"

#include <algorithm>
#include <cmath>

#include "mspde/errors.hpp"

namespace mspde {

namespace {

constexpr int kMaxNewton = 50;

void validate(const SolverConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw ConfigError("solver.lambda must be positive");
  if (!(cfg.tau > 0.0)) throw ConfigError("solver.tau must be positive");
  if (!(cfg.T > 0.0)) throw ConfigError("solver.T must be positive");
  if (!(cfg.epsilon >= 0.0)) throw ConfigError("solver.epsilon must be nonnegative");
  if (cfg.m < 0) throw ConfigError("solver.m must be nonnegative");
  if (cfg.record_stride < 1) throw ConfigError("solver.record_stride must be at least 1");
  if (!(cfg.cfl_c > 0.0)) throw ConfigError("solver.cfl_c must be positive");
  if (cfg.picard_max < 1) throw ConfigError("solver.picard_max must be at least 1");
}

/// (I - shift * Laplacian) x = rhs. Tridiagonal elimination in 1D, tight CG otherwise.
Field shifted_solve(const Field& rhs, double shift) {
  const Grid& g = rhs.grid();
  if (g.dim() == 1) {
    const std::size_t n = g.nodes(0);
    const double off = -shift / (g.h(0) * g.h(0));
    const double diag = 1.0 - 2.0 * off;
    std::vector<double> c(n);
    Field x(rhs.grid_ptr());
    double denom = diag;
    x[0] = rhs[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
      c[i - 1] = off / denom;
      denom = diag - off * c[i - 1];
      x[i] = (rhs[i] - off * x[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
    return x;
  }
  CgOptions opts;
  opts.rtol = 1e-14;
  return solve_shifted(rhs, shift, opts);
}

void check_noise(const DiffusionOperator& b, const SolverConfig& cfg, const NoisePath& noise) {
  if (noise.steps < cfg.steps())
    throw ConfigError("noise path has " + std::to_string(noise.steps) + " steps, solver needs " +
                      std::to_string(cfg.steps()));
  if (std::abs(noise.tau - cfg.tau) > 1e-12 * cfg.tau)
    throw ConfigError("noise path time step does not match solver.tau");
  if (noise.modes != b.modes()) throw ConfigError("noise path and diffusion operator disagree on modes");
}

struct StepParts {
  VectorField grad;
  VectorField flux;
  Field noise_term;
};

StepParts step_parts(const Potential& p, const DiffusionOperator& b, const Field& u_n, double t_n,
                     std::span<const double> dw, double lambda, const Field& state) {
  VectorField grad = gradient(u_n);
  VectorField flux = yosida_flux(p, lambda, grad);
  Field noise_term = b.apply(t_n, state, dw);
  return {std::move(grad), std::move(flux), std::move(noise_term)};
}

Field explicit_update(const Field& u_n, const StepParts& parts, const SolverConfig& cfg) {
  Field rhs = u_n;
  rhs.axpy(cfg.tau, divergence(parts.flux));
  rhs += parts.noise_term;
  return shifted_solve(rhs, cfg.tau * cfg.lambda);
}

/// Newton for u - tau div Phi(grad u) = rhs, Phi(g) = gamma_lambda(g) + lambda g.
Field reference_update(const Potential& p, const Field& rhs, const Field& guess, const SolverConfig& cfg) {
  const Grid& g = rhs.grid();
  const GridPtr& gp = rhs.grid_ptr();
  const int n = g.dim();
  const double tau = cfg.tau;
  const double lambda = cfg.lambda;
  const double scale = std::sqrt(inner(rhs, rhs)) + std::sqrt(g.cell_volume() * g.size()) * 1e-300;
  Field u = guess;
  double res_norm = 0.0;
  for (int it = 0; it < kMaxNewton; ++it) {
    const VectorField grad = gradient(u);
    VectorField phi = yosida_flux(p, lambda, grad);
    phi.axpy(lambda, grad);
    Field residual = u - rhs;
    residual.axpy(-tau, divergence(phi));
    res_norm = std::sqrt(inner(residual, residual));
    if (res_norm <= 1e-13 * scale) return u;

    VectorField d(gp);
    for (int a = 0; a < n; ++a) {
      auto da = d.axis(a);
      for (std::size_t f = 0; f < da.size(); ++f) {
        const Vec v = face_vector(grad, a, f);
        da[f] = yosida_jacobian(p, lambda, v)(a, a) + lambda;
      }
    }
    Field diagonal(gp, std::vector<double>(g.size(), 1.0));
    if (n == 1) {
      const double ih2 = 1.0 / (g.h(0) * g.h(0));
      const auto dx = d.axis(0);
      for (std::size_t i = 0; i < g.size(); ++i) diagonal[i] += tau * (dx[i] + dx[i + 1]) * ih2;
    } else {
      const std::size_t nx = g.nodes(0);
      const double ihx2 = 1.0 / (g.h(0) * g.h(0));
      const double ihy2 = 1.0 / (g.h(1) * g.h(1));
      const auto dx = d.axis(0);
      const auto dy = d.axis(1);
      for (std::size_t j = 0; j < g.nodes(1); ++j)
        for (std::size_t i = 0; i < nx; ++i) {
          const std::size_t fx = i + (nx + 1) * j;
          const std::size_t fy = i + nx * j;
          diagonal[g.index(i, j)] += tau * ((dx[fx] + dx[fx + 1]) * ihx2 + (dy[fy] + dy[fy + nx]) * ihy2);
        }
    }
    auto apply = [&](const Field& v, Field& out) {
      VectorField gv = gradient(v);
      for (int a = 0; a < n; ++a) {
        auto ga = gv.axis(a);
        const auto da = d.axis(a);
        for (std::size_t f = 0; f < ga.size(); ++f) ga[f] *= da[f];
      }
      out = v;
      out.axpy(-tau, divergence(gv));
    };
    CgOptions opts;
    opts.rtol = 1e-14;
    Field minus_res = residual;
    minus_res *= -1.0;
    u += conjugate_gradient(apply, minus_res, diagonal, opts);
    if (!u.all_finite()) break;
  }
  throw NonConvergence("implicit reference step did not converge", res_norm);
}

}  // namespace

std::size_t SolverConfig::steps() const {
  const double ratio = T / tau;
  const auto n = static_cast<std::size_t>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-6 * ratio)
    throw ConfigError("solver.T must be a positive multiple of solver.tau");
  return n;
}

double stability_bound(const Grid& grid, const SolverConfig& cfg) {
  return cfg.cfl_c * cfg.lambda * grid.h_min() * grid.h_min() / grid.dim();
}

void check_stability(const Grid& grid, const SolverConfig& cfg) {
  if (cfg.scheme != Scheme::explicit_drift) return;
  const double bound = stability_bound(grid, cfg);
  if (cfg.tau > bound * (1.0 + 1e-12)) throw StabilityViolation(cfg.tau, bound);
}

int smoothing_exponent(const Grid& grid, const SolverConfig& cfg) {
  return cfg.m > 0 ? cfg.m : default_smoothing_exponent(grid.dim());
}

double default_alpha(const DiffusionOperator& b) {
  const double l = b.lipschitz_hs();
  return 4.0 * l * l;
}

DiffusionOperator effective_diffusion(const DiffusionOperator& b, const SolverConfig& cfg) {
  if (cfg.epsilon > 0.0) return b.mollified(cfg.epsilon, smoothing_exponent(*b.grid_ptr(), cfg));
  return b;
}

VectorField yosida_flux_serial(const Potential& p, double lambda, const VectorField& grad) {
  const Grid& g = grad.grid();
  VectorField out(grad.grid_ptr());
  for (int a = 0; a < g.dim(); ++a) {
    auto oa = out.axis(a);
    for (std::size_t f = 0; f < oa.size(); ++f) oa[f] = yosida(p, lambda, face_vector(grad, a, f))[a];
  }
  return out;
}

VectorField yosida_flux(const Potential& p, double lambda, const VectorField& grad) {
  const Grid& g = grad.grid();
  VectorField out(grad.grid_ptr());
  for (int a = 0; a < g.dim(); ++a) {
    auto oa = out.axis(a);
    const long long faces = static_cast<long long>(oa.size());
#pragma omp parallel for schedule(static) if (faces >= 4096)
    for (long long f = 0; f < faces; ++f) {
      const auto face = static_cast<std::size_t>(f);
      oa[face] = yosida(p, lambda, face_vector(grad, a, face))[a];
    }
  }
  return out;
}

Field step_regularized(const Potential& p, const DiffusionOperator& b, const Field& u_n, double t_n,
                       std::span<const double> dw, const SolverConfig& cfg, const Field* diffusion_state) {
  validate(cfg);
  SolverConfig explicit_cfg = cfg;
  explicit_cfg.scheme = Scheme::explicit_drift;
  check_stability(u_n.grid(), explicit_cfg);
  const StepParts parts = step_parts(p, b, u_n, t_n, dw, cfg.lambda, diffusion_state ? *diffusion_state : u_n);
  return explicit_update(u_n, parts, cfg);
}

Field step_reference(const Potential& p, const DiffusionOperator& b, const Field& u_n, double t_n,
                     std::span<const double> dw, const SolverConfig& cfg, const Field* diffusion_state) {
  validate(cfg);
  Field rhs = u_n + b.apply(t_n, diffusion_state ? *diffusion_state : u_n, dw);
  return reference_update(p, rhs, rhs, cfg);
}

SolutionPath integrate(const Potential& p, const DiffusionOperator& b, const Field& u0,
                       const SolverConfig& cfg, std::shared_ptr<const NoisePath> noise,
                       const std::vector<Field>* frozen, const StepObserver& observer) {
  validate(cfg);
  if (!noise) throw ConfigError("integrate needs a noise path");
  if (!(u0.grid() == *b.grid_ptr())) throw ConfigError("initial datum and noise live on different grids");
  if (p.dim() != u0.grid().dim()) throw ConfigError("potential dimension does not match the grid");
  if (!u0.all_finite()) throw ConfigError("initial datum is not finite");
  check_stability(u0.grid(), cfg);
  const std::size_t steps = cfg.steps();
  check_noise(b, cfg, *noise);
  if (frozen && frozen->size() < steps + 1) throw ConfigError("frozen diffusion state is too short");

  SolutionPath path;
  path.config = cfg;
  path.noise = noise;
  path.stride = cfg.record_stride;
  const std::size_t recorded = steps / cfg.record_stride + 1 + (steps % cfg.record_stride ? 1 : 0);
  path.times.reserve(recorded);
  path.fields.reserve(recorded);
  path.drift_flux.reserve(recorded);
  if (frozen) path.diffusion_state.reserve(recorded);

  Field u = u0;
  for (std::size_t n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n) * cfg.tau;
    const Field& state = frozen ? (*frozen)[n] : u;
    StepParts parts = step_parts(p, b, u, t, noise->step(n), cfg.lambda, state);
    Field next = cfg.scheme == Scheme::explicit_drift
                     ? explicit_update(u, parts, cfg)
                     : reference_update(p, u + parts.noise_term, explicit_update(u, parts, cfg), cfg);
    if (!next.all_finite())
      throw NonConvergence("solution blew up at step " + std::to_string(n), INFINITY);
    if (observer) observer(StepView{n, t, u, parts.grad, parts.flux, next, parts.noise_term, state});
    if (n % cfg.record_stride == 0) {
      path.times.push_back(t);
      path.fields.push_back(u);
      path.drift_flux.push_back(std::move(parts.flux));
      if (frozen) path.diffusion_state.push_back(state);
    }
    u = std::move(next);
  }
  path.times.push_back(static_cast<double>(steps) * cfg.tau);
  path.drift_flux.push_back(yosida_flux(p, cfg.lambda, gradient(u)));
  path.fields.push_back(std::move(u));
  if (frozen) path.diffusion_state.push_back((*frozen)[steps]);
  return path;
}

SolutionPath solve_additive(const Potential& p, const DiffusionOperator& b, const Field& u0,
                            const SolverConfig& cfg, std::shared_ptr<const NoisePath> noise,
                            const StepObserver& observer) {
  if (b.kind() != NoiseKind::additive)
    throw ConfigError("solve_additive needs an additive diffusion operator");
  return integrate(p, effective_diffusion(b, cfg), u0, cfg, std::move(noise), nullptr, observer);
}

double e_alpha_distance(const std::vector<Field>& a, const std::vector<Field>& b, double tau, double alpha) {
  if (a.size() != b.size()) throw ConfigError("e_alpha_distance needs paths of equal length");
  double sum = 0.0;
  for (std::size_t n = 1; n < a.size(); ++n) {
    const Field d = a[n] - b[n];
    sum += tau * std::exp(-2.0 * alpha * static_cast<double>(n) * tau) * inner(d, d);
  }
  return std::sqrt(sum);
}

PicardResult solve_multiplicative(const Potential& p, const DiffusionOperator& b, const Field& u0,
                                  const SolverConfig& cfg, std::shared_ptr<const NoisePath> noise,
                                  const std::vector<Field>* initial) {
  if (b.kind() != NoiseKind::multiplicative)
    throw ConfigError("solve_multiplicative needs a multiplicative diffusion operator");
  validate(cfg);
  const DiffusionOperator beff = effective_diffusion(b, cfg);
  SolverConfig inner_cfg = cfg;
  inner_cfg.record_stride = 1;
  const std::size_t steps = cfg.steps();

  PicardResult result;
  result.alpha = cfg.alpha >= 0.0 ? cfg.alpha : default_alpha(b);

  if (beff.state_independent()) {
    result.path = integrate(p, beff, u0, inner_cfg, noise);
    result.picard_iters = 1;
    return result;
  }

  std::vector<Field> v = initial ? *initial : std::vector<Field>(steps + 1, u0);
  if (v.size() != steps + 1) throw ConfigError("Picard initial iterate has the wrong length");

  int bad = 0;
  for (int k = 0; k < cfg.picard_max; ++k) {
    SolutionPath path = integrate(p, beff, u0, inner_cfg, noise, &v);
    const double d = e_alpha_distance(path.fields, v, cfg.tau, result.alpha);
    if (!result.distances.empty()) {
      const double prev = result.distances.back();
      result.contraction_ratios.push_back(prev > 0.0 ? d / prev : 0.0);
      bad = d >= prev ? bad + 1 : 0;
    }
    result.distances.push_back(d);
    result.picard_iters = k + 1;
    if (d <= cfg.picard_tol) {
      result.path = std::move(path);
      return result;
    }
    if (bad >= 3)
      throw PicardDivergence("Picard distance failed to decrease in three consecutive sweeps", result.alpha);
    v = std::move(path.fields);
  }
  throw PicardDivergence("Picard iteration exhausted " + std::to_string(cfg.picard_max) + " sweeps",
                         result.alpha);
}

nlohmann::json KappaDiagnostics::to_json() const {
  return {{"sup_l2_sq", sup_l2_sq},
          {"int_w11", int_w11},
          {"int_abs_gamma", int_abs_gamma},
          {"int_k_plus_kstar", int_k_plus_kstar},
          {"int_k_resolvent_plus_kstar", int_k_resolvent_plus_kstar},
          {"int_pluto_pairing", int_pluto_pairing}};
}

KappaDiagnostics kappa_diagnostics(const SolutionPath& path, const Potential& p) {
  if (path.fields.empty()) throw MissingFlux("empty solution path");
  if (path.drift_flux.size() != path.fields.size())
    throw MissingFlux("solution path does not carry the drift flux");
  KappaDiagnostics out;
  const double lambda = path.config.lambda;
  for (const Field& u : path.fields) out.sup_l2_sq = std::max(out.sup_l2_sq, inner(u, u));
  for (std::size_t r = 0; r + 1 < path.fields.size(); ++r) {
    const double w = path.times[r + 1] - path.times[r];
    const Field& u = path.fields[r];
    const VectorField grad = gradient(u);
    const Grid& g = u.grid();
    double abs_gamma = 0.0, k_plus = 0.0, k_res = 0.0, pairing = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
      for (std::size_t f = 0; f < g.face_count(a); ++f) {
        const Vec v = face_vector(grad, a, f);
        const PlutoTerms t = pluto_terms(p, lambda, v);
        abs_gamma += yosida(p, lambda, v).norm();
        k_plus += p.k(v) + t.conjugate_yosida;
        k_res += t.k_resolvent + t.conjugate_yosida;
        pairing += t.pairing - t.quadratic;
      }
    }
    const double q = w * g.cell_volume() / g.dim();
    out.int_w11 += w * norms(u).w11;
    out.int_abs_gamma += q * abs_gamma;
    out.int_k_plus_kstar += q * k_plus;
    out.int_k_resolvent_plus_kstar += q * k_res;
    out.int_pluto_pairing += q * pairing;
  }
  return out;
}

double conjugate_flux_integral(const Potential& p, double lambda, const VectorField& grad,
                               const VectorField& flux) {
  const Grid& g = grad.grid();
  if (g.dim() == 1) {
    double sum = 0.0;
    Vec y(1);
    for (double z : flux.axis(0)) {
      y[0] = z;
      sum += conjugate(p, y);
    }
    return sum * g.cell_volume();
  }
  return face_quadrature(grad, [&](const Vec& v) { return conjugate(p, yosida(p, lambda, v)); });
}

AprioriAccumulator::AprioriAccumulator(Potential p, const DiffusionOperator& b, double lambda, double tau)
    : p_(std::move(p)), b_(&b), lambda_(lambda), tau_(tau) {}

void AprioriAccumulator::operator()(const StepView& s) {
  if (s.n == 0) {
    terms_.u0_l2_sq = inner(s.u, s.u);
    terms_.sup_l2_sq = terms_.u0_l2_sq;
  }
  terms_.sup_l2_sq = std::max(terms_.sup_l2_sq, inner(s.u_next, s.u_next));
  terms_.grad_l2_sq_int += tau_ * inner(s.grad, s.grad);
  terms_.flux_pairing_int += tau_ * inner(s.flux, s.grad);
  terms_.kstar_int += tau_ * conjugate_flux_integral(p_, lambda_, s.grad, s.flux);
  terms_.hs_int += tau_ * b_->hs_norm_sq(s.t, s.diffusion_state);
}

}  // namespace mspde
