#include "mspde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mspde/ensemble.hpp"
#include "mspde/errors.hpp"

namespace mspde {

namespace {

double max_sq_distance(const std::vector<Field>& a, const std::vector<Field>& b) {
  double best = 0.0;
  for (std::size_t n = 0; n < std::min(a.size(), b.size()); ++n) {
    const Field d = a[n] - b[n];
    best = std::max(best, inner(d, d));
  }
  return best;
}

SolverConfig with_tau(SolverConfig cfg, double tau) {
  cfg.tau = tau;
  cfg.record_stride = 1;
  return cfg;
}

std::vector<double> mean_over_paths(const std::vector<std::vector<double>>& per_path, std::size_t levels) {
  std::vector<double> mean(levels, 0.0);
  for (const auto& row : per_path)
    for (std::size_t i = 0; i < levels; ++i) mean[i] += row[i];
  for (double& m : mean) m /= static_cast<double>(std::max<std::size_t>(per_path.size(), 1));
  return mean;
}

void fill_rows(LadderResult& out, const std::vector<double>& values, const std::vector<double>& metric) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    LadderRow row;
    row.level = i;
    row.value = values[i];
    row.metric = metric[i];
    if (i > 0) row.ratio = metric[i - 1] != 0.0 ? metric[i] / metric[i - 1] : NAN;
    out.rows.push_back(row);
  }
}

void require_ladder(const std::vector<double>& values, const char* name) {
  if (values.empty()) throw ConfigError(std::string(name) + " ladder is empty");
  for (double v : values)
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " ladder entries must be positive");
}

}  // namespace

SolutionPath solve_path(const Potential& p, const DiffusionOperator& b, const Field& u0, const SolverConfig& cfg,
                        std::shared_ptr<const NoisePath> noise) {
  if (b.kind() == NoiseKind::additive) return solve_additive(p, b, u0, cfg, std::move(noise));
  return solve_multiplicative(p, b, u0, cfg, std::move(noise)).path;
}

std::shared_ptr<const NoisePath> path_noise(const EnsembleSpec& spec, std::size_t path, std::size_t steps,
                                            double tau) {
  return std::make_shared<const NoisePath>(sample_increments(spec.wiener, steps, tau, path));
}

double common_tau(const Grid& grid, const SolverConfig& cfg, double lambda_min) {
  double tau = cfg.tau;
  if (cfg.scheme == Scheme::explicit_drift) {
    SolverConfig probe = cfg;
    probe.lambda = lambda_min;
    tau = std::min(tau, stability_bound(grid, probe));
  }
  const double steps = std::ceil(cfg.T / tau * (1.0 - 1e-12));
  return cfg.T / steps;
}

EnsembleResult run_ensemble(const EnsembleSpec& spec, const std::vector<double>& snapshot_times) {
  const std::size_t steps = spec.solver.steps();
  struct PathOut {
    PathSummary summary;
    std::vector<Snapshot> snapshots;
  };
  auto outs = run_paths(
      spec.paths,
      [&](std::size_t path) {
        PathOut out;
        const auto noise = path_noise(spec, path, steps, spec.solver.tau);
        SolutionPath sol;
        if (spec.diffusion.kind() == NoiseKind::additive) {
          sol = solve_additive(spec.potential, spec.diffusion, spec.u0, spec.solver, noise);
          out.summary.picard_iters = 0;
        } else {
          PicardResult pr = solve_multiplicative(spec.potential, spec.diffusion, spec.u0, spec.solver, noise);
          out.summary.picard_iters = pr.picard_iters;
          sol = std::move(pr.path);
          if (spec.solver.record_stride > 1) {
            // Picard needs every step; thin the recorded path afterwards.
            SolutionPath thin;
            thin.config = sol.config;
            thin.noise = sol.noise;
            thin.stride = spec.solver.record_stride;
            for (std::size_t r = 0; r < sol.fields.size(); ++r) {
              if (r % thin.stride != 0 && r + 1 != sol.fields.size()) continue;
              thin.times.push_back(sol.times[r]);
              thin.fields.push_back(sol.fields[r]);
              thin.drift_flux.push_back(sol.drift_flux[r]);
            }
            sol = std::move(thin);
          }
        }
        out.summary.path = path;
        for (const Field& u : sol.fields) out.summary.l2.push_back(std::sqrt(inner(u, u)));
        out.summary.final_l2 = out.summary.l2.back();
        out.summary.kappa = kappa_diagnostics(sol, spec.potential);
        if (path == 0) {
          for (double ts : snapshot_times) {
            std::size_t best = 0;
            for (std::size_t r = 1; r < sol.times.size(); ++r)
              if (std::abs(sol.times[r] - ts) < std::abs(sol.times[best] - ts)) best = r;
            out.snapshots.push_back({sol.times[best], sol.fields[best]});
          }
        }
        return out;
      },
      spec.workers);

  EnsembleResult result;
  if (outs.empty()) return result;
  const std::size_t recorded = outs.front().summary.l2.size();
  std::vector<double> times;
  for (std::size_t n = 0; n <= steps; n += spec.solver.record_stride)
    times.push_back(static_cast<double>(n) * spec.solver.tau);
  if (times.size() < recorded) times.push_back(static_cast<double>(steps) * spec.solver.tau);
  const double count = static_cast<double>(outs.size());
  for (std::size_t r = 0; r < recorded; ++r) {
    double mean = 0.0;
    for (const auto& o : outs) mean += o.summary.l2[r];
    mean /= count;
    double var = 0.0;
    for (const auto& o : outs) var += (o.summary.l2[r] - mean) * (o.summary.l2[r] - mean);
    var = outs.size() > 1 ? var / (count - 1.0) : 0.0;
    result.rows.push_back({times[r], mean, var});
  }
  result.snapshots = std::move(outs.front().snapshots);
  for (auto& o : outs) result.paths.push_back(std::move(o.summary));
  return result;
}

bool LadderResult::strictly_decreasing() const {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!(rows[i].metric < rows[i - 1].metric)) return false;
  return true;
}

nlohmann::json LadderResult::to_json() const {
  nlohmann::json j;
  j["ladder"] = ladder;
  j["metric"] = metric;
  j["tau"] = tau;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"level", r.level}, {"value", r.value}, {"metric", r.metric}};
    row["ratio"] = r.ratio ? nlohmann::json(*r.ratio) : nlohmann::json(nullptr);
    if (r.bound_term) row["bound_term"] = *r.bound_term;
    j["rows"].push_back(row);
  }
  j["strictly_decreasing"] = strictly_decreasing();
  return j;
}

LadderResult lambda_ladder(const EnsembleSpec& spec, const std::vector<double>& lambdas) {
  require_ladder(lambdas, "lambda");
  std::vector<double> all;
  for (double l : lambdas) {
    all.push_back(l);
    all.push_back(0.5 * l);
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  const double tau = common_tau(spec.u0.grid(), spec.solver, all.front());
  const SolverConfig base = with_tau(spec.solver, tau);
  const std::size_t steps = base.steps();

  LadderResult out;
  out.ladder = "lambda";
  out.metric = "E max_n |u_lambda - u_lambda/2|^2";
  out.tau = tau;
  out.per_path = run_paths(
      spec.paths,
      [&](std::size_t path) {
        const auto noise = path_noise(spec, path, steps, tau);
        std::map<double, std::vector<Field>> solved;
        for (double l : all) {
          SolverConfig cfg = base;
          cfg.lambda = l;
          solved[l] = solve_path(spec.potential, spec.diffusion, spec.u0, cfg, noise).fields;
        }
        std::vector<double> row;
        for (double l : lambdas) row.push_back(max_sq_distance(solved[l], solved[0.5 * l]));
        return row;
      },
      spec.workers);
  fill_rows(out, lambdas, mean_over_paths(out.per_path, lambdas.size()));
  return out;
}

LadderResult epsilon_ladder(const EnsembleSpec& spec, const std::vector<double>& epsilons) {
  require_ladder(epsilons, "epsilon");
  std::vector<double> all;
  for (double e : epsilons) {
    all.push_back(e);
    all.push_back(0.5 * e);
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  const SolverConfig base = with_tau(spec.solver, spec.solver.tau);
  const std::size_t steps = base.steps();
  std::map<double, DiffusionOperator> ops;
  for (double e : all) {
    SolverConfig cfg = base;
    cfg.epsilon = e;
    ops.emplace(e, effective_diffusion(spec.diffusion, cfg));
  }
  auto hs_distance = [&](double e, const std::vector<Field>& states) {
    const DiffusionOperator& a = ops.at(e);
    const DiffusionOperator& b = ops.at(0.5 * e);
    double sum = 0.0;
    for (std::size_t n = 0; n < steps; ++n) {
      const double t = static_cast<double>(n) * base.tau;
      const auto ca = a.components(t, states[n]);
      const auto cb = b.components(t, states[n]);
      for (std::size_t j = 0; j < ca.size(); ++j) {
        const Field d = ca[j] - cb[j];
        sum += base.tau * inner(d, d);
      }
    }
    return sum;
  };
  std::vector<double> additive_hs;
  if (spec.diffusion.state_independent()) {
    const std::vector<Field> zero(steps + 1, Field(spec.u0.grid_ptr()));
    for (double e : epsilons) additive_hs.push_back(hs_distance(e, zero));
  }

  LadderResult out;
  out.ladder = "epsilon";
  out.metric = "E max_n |u^eps - u^eps/2|^2";
  out.tau = base.tau;
  const std::size_t levels = epsilons.size();
  out.per_path = run_paths(
      spec.paths,
      [&](std::size_t path) {
        const auto noise = path_noise(spec, path, steps, base.tau);
        std::map<double, std::vector<Field>> solved;
        for (double e : all) {
          SolverConfig cfg = base;
          cfg.epsilon = e;
          solved[e] = solve_path(spec.potential, spec.diffusion, spec.u0, cfg, noise).fields;
        }
        // Metric per level followed by the HS distance per level.
        std::vector<double> row;
        for (double e : epsilons) row.push_back(max_sq_distance(solved[e], solved[0.5 * e]));
        for (std::size_t i = 0; i < levels; ++i)
          row.push_back(additive_hs.empty() ? hs_distance(epsilons[i], solved[epsilons[i]]) : additive_hs[i]);
        return row;
      },
      spec.workers);
  const std::vector<double> mean = mean_over_paths(out.per_path, 2 * levels);
  fill_rows(out, epsilons, std::vector<double>(mean.begin(), mean.begin() + static_cast<long>(levels)));
  for (std::size_t i = 0; i < levels; ++i) out.rows[i].bound_term = mean[levels + i];
  for (auto& row : out.per_path) row.resize(levels);
  return out;
}

LadderResult tau_ladder(const EnsembleSpec& spec, const std::vector<double>& taus, double alpha) {
  require_ladder(taus, "tau");
  const double finest = *std::min_element(taus.begin(), taus.end());
  std::vector<std::size_t> factors;
  for (double t : taus) {
    const double f = t / finest;
    const auto k = static_cast<std::size_t>(std::llround(f));
    if (std::abs(f - static_cast<double>(k)) > 1e-9 * f)
      throw ConfigError("tau ladder entries must be integer multiples of the finest step");
    factors.push_back(k);
  }
  const SolverConfig fine_cfg = with_tau(spec.solver, finest);
  const std::size_t fine_steps = fine_cfg.steps();

  LadderResult out;
  out.ladder = "tau";
  out.metric = "E |energy identity residual|";
  out.tau = finest;
  const std::size_t levels = taus.size();
  out.per_path = run_paths(
      spec.paths,
      [&](std::size_t path) {
        const NoisePath fine = sample_increments(spec.wiener, fine_steps, finest, path);
        std::vector<double> row;
        for (std::size_t i = 0; i < levels; ++i) {
          auto noise = std::make_shared<const NoisePath>(coarsen(fine, factors[i]));
          const SolverConfig cfg = with_tau(spec.solver, noise->tau);
          const SolutionPath sol = solve_path(spec.potential, spec.diffusion, spec.u0, cfg, noise);
          row.push_back(energy_identity_residual(sol, spec.diffusion, alpha).residual);
        }
        return row;
      },
      spec.workers);
  std::vector<double> mean(levels, 0.0);
  for (const auto& row : out.per_path)
    for (std::size_t i = 0; i < levels; ++i) mean[i] += std::abs(row[i]);
  for (double& m : mean) m /= static_cast<double>(std::max<std::size_t>(spec.paths, 1));
  fill_rows(out, taus, mean);
  return out;
}

double AprioriStudy::n_spread() const {
  double lo = INFINITY, hi = 0.0;
  for (const auto& l : levels) {
    lo = std::min(lo, l.n_fit);
    hi = std::max(hi, l.n_fit);
  }
  return levels.empty() ? 1.0 : hi / lo;
}

double AprioriStudy::ui_spread() const {
  double lo = INFINITY, hi = 0.0;
  for (const auto& l : levels) {
    lo = std::min(lo, l.ui_bound);
    hi = std::max(hi, l.ui_bound);
  }
  return levels.empty() ? 1.0 : hi / lo;
}

nlohmann::json AprioriStudy::to_json() const {
  nlohmann::json j;
  j["tau"] = tau;
  j["n_spread"] = n_spread();
  j["ui_spread"] = ui_spread();
  j["levels"] = nlohmann::json::array();
  for (const auto& l : levels)
    j["levels"].push_back({{"lambda", l.lambda},
                           {"sup_l2_sq", l.mean.sup_l2_sq},
                           {"grad_l2_sq_int", l.mean.grad_l2_sq_int},
                           {"flux_pairing_int", l.mean.flux_pairing_int},
                           {"kstar_int", l.mean.kstar_int},
                           {"u0_l2_sq", l.mean.u0_l2_sq},
                           {"hs_int", l.mean.hs_int},
                           {"lhs", l.lhs},
                           {"rhs", l.rhs},
                           {"n_fit", l.n_fit},
                           {"ui_bound", l.ui_bound}});
  return j;
}

AprioriStudy apriori_study(const EnsembleSpec& spec, const std::vector<double>& lambdas) {
  require_ladder(lambdas, "lambda");
  const double lambda_min = *std::min_element(lambdas.begin(), lambdas.end());
  AprioriStudy study;
  study.tau = common_tau(spec.u0.grid(), spec.solver, lambda_min);
  const SolverConfig base = with_tau(spec.solver, study.tau);
  const std::size_t steps = base.steps();
  const std::size_t levels = lambdas.size();

  const auto per_path = run_paths(
      spec.paths,
      [&](std::size_t path) {
        const auto noise = path_noise(spec, path, steps, study.tau);
        std::vector<AprioriTerms> row;
        for (double l : lambdas) {
          SolverConfig cfg = base;
          cfg.lambda = l;
          const DiffusionOperator beff = effective_diffusion(spec.diffusion, cfg);
          const SolutionPath sol = solve_path(spec.potential, spec.diffusion, spec.u0, cfg, noise);
          AprioriAccumulator acc(spec.potential, beff, l, study.tau);
          const Field unused(spec.u0.grid_ptr());
          for (std::size_t n = 0; n < steps; ++n) {
            const VectorField grad = gradient(sol.fields[n]);
            acc(StepView{n, sol.times[n], sol.fields[n], grad, sol.drift_flux[n], sol.fields[n + 1], unused,
                         sol.state_for_diffusion(n)});
          }
          row.push_back(acc.terms());
        }
        return row;
      },
      spec.workers);

  for (std::size_t i = 0; i < levels; ++i) {
    AprioriLevel level;
    level.lambda = lambdas[i];
    AprioriTerms& m = level.mean;
    for (const auto& row : per_path) {
      m.u0_l2_sq += row[i].u0_l2_sq;
      m.sup_l2_sq += row[i].sup_l2_sq;
      m.grad_l2_sq_int += row[i].grad_l2_sq_int;
      m.flux_pairing_int += row[i].flux_pairing_int;
      m.kstar_int += row[i].kstar_int;
      m.hs_int += row[i].hs_int;
    }
    const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(per_path.size(), 1));
    m.u0_l2_sq *= scale;
    m.sup_l2_sq *= scale;
    m.grad_l2_sq_int *= scale;
    m.flux_pairing_int *= scale;
    m.kstar_int *= scale;
    m.hs_int *= scale;
    level.lhs = std::sqrt(m.sup_l2_sq) + std::sqrt(level.lambda * m.grad_l2_sq_int) + m.flux_pairing_int;
    level.rhs = m.u0_l2_sq + m.hs_int + 1.0;
    level.n_fit = level.lhs / level.rhs;
    level.ui_bound = m.kstar_int;
    study.levels.push_back(level);
  }
  return study;
}

nlohmann::json LipschitzStudy::to_json() const {
  nlohmann::json j;
  j["slope"] = slope;
  j["constant"] = constant;
  j["alphas"] = alphas;
  j["points"] = nlohmann::json::array();
  for (const auto& p : points)
    j["points"].push_back({{"delta", p.delta}, {"input", p.input}, {"output", p.output}, {"weighted", p.weighted}});
  return j;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope needs at least two points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

LipschitzStudy lipschitz_study(const EnsembleSpec& spec, const Field& direction, const std::vector<double>& deltas,
                               const std::vector<double>& alphas) {
  require_ladder(deltas, "delta");
  const double dnorm = std::sqrt(inner(direction, direction));
  if (!(dnorm > 0.0)) throw ConfigError("perturbation direction must be nonzero");
  const SolverConfig cfg = with_tau(spec.solver, spec.solver.tau);
  const std::size_t steps = cfg.steps();
  const std::size_t k = deltas.size();
  const std::size_t na = alphas.size();

  // Per path: output per delta, then weighted sums per (delta, alpha).
  const auto per_path = run_paths(
      spec.paths,
      [&](std::size_t path) {
        const auto noise = path_noise(spec, path, steps, cfg.tau);
        const std::vector<Field> base = solve_path(spec.potential, spec.diffusion, spec.u0, cfg, noise).fields;
        std::vector<double> row(k * (1 + na), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
          Field u02 = spec.u0;
          u02.axpy(deltas[i] / dnorm, direction);
          const std::vector<Field> other = solve_path(spec.potential, spec.diffusion, u02, cfg, noise).fields;
          row[i] = max_sq_distance(base, other);
          for (std::size_t n = 1; n <= steps; ++n) {
            const Field d = base[n] - other[n];
            const double dd = inner(d, d);
            for (std::size_t a = 0; a < na; ++a)
              row[k + i * na + a] += cfg.tau * std::exp(-2.0 * alphas[a] * static_cast<double>(n) * cfg.tau) * dd;
          }
        }
        return row;
      },
      spec.workers);

  const std::vector<double> mean = mean_over_paths(per_path, k * (1 + na));
  LipschitzStudy study;
  study.alphas = alphas;
  std::vector<double> in, outv;
  for (std::size_t i = 0; i < k; ++i) {
    LipschitzPoint pt;
    pt.delta = deltas[i];
    pt.input = deltas[i] * deltas[i];
    pt.output = mean[i];
    for (std::size_t a = 0; a < na; ++a) pt.weighted.push_back(mean[k + i * na + a] / pt.input);
    in.push_back(pt.input);
    outv.push_back(pt.output);
    study.constant = std::max(study.constant, pt.output / pt.input);
    study.points.push_back(pt);
  }
  study.slope = k >= 2 ? loglog_slope(in, outv) : 1.0;
  return study;
}

}  // namespace mspde
