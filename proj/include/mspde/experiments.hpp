#pragma once

// Monte Carlo studies over coupled noise: solve ensembles, refinement ladders
// in lambda / epsilon / tau, the a priori bound study and the Lipschitz
// dependence study. Every study runs paths through run_paths and reduces in
// path order.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspde/noise.hpp"
#include "mspde/potential.hpp"
#include "mspde/solver.hpp"
#include "mspde/verify.hpp"

namespace mspde {

struct EnsembleSpec {
  Potential potential;
  DiffusionOperator diffusion;
  Field u0;
  SolverConfig solver;
  WienerConfig wiener;
  std::size_t paths = 1;
  int workers = 0;
};

/// Additive operators go through solve_additive, multiplicative ones through
/// the Picard loop.
SolutionPath solve_path(const Potential& p, const DiffusionOperator& b, const Field& u0, const SolverConfig& cfg,
                        std::shared_ptr<const NoisePath> noise);

std::shared_ptr<const NoisePath> path_noise(const EnsembleSpec& spec, std::size_t path, std::size_t steps,
                                            double tau);

/// Largest tau <= min(requested, stability bound at lambda_min) dividing T.
double common_tau(const Grid& grid, const SolverConfig& cfg, double lambda_min);

struct PathSummary {
  std::size_t path = 0;
  double final_l2 = 0.0;
  int picard_iters = 0;
  KappaDiagnostics kappa;
  std::vector<double> l2;  // |u(t_r)| at recorded times
};

struct EnsembleRow {
  double time = 0.0;
  double mean_l2 = 0.0;
  double var_l2 = 0.0;
};

struct Snapshot {
  double time = 0.0;
  Field field;
};

struct EnsembleResult {
  std::vector<PathSummary> paths;
  std::vector<EnsembleRow> rows;
  std::vector<Snapshot> snapshots;  // of path 0
};

EnsembleResult run_ensemble(const EnsembleSpec& spec, const std::vector<double>& snapshot_times = {});

struct LadderRow {
  std::size_t level = 0;
  double value = 0.0;
  double metric = 0.0;
  std::optional<double> ratio;
  /// Optional companion quantity (the HS distance for the epsilon ladder).
  std::optional<double> bound_term;
};

struct LadderResult {
  std::string ladder;
  std::string metric;
  double tau = 0.0;
  std::vector<LadderRow> rows;
  /// Per-path metric values, [path][level].
  std::vector<std::vector<double>> per_path;

  bool strictly_decreasing() const;
  nlohmann::json to_json() const;
};

/// For each lambda in the ladder: E max_n |u_lambda - u_{lambda/2}|^2 on shared noise
/// and a common time step.
LadderResult lambda_ladder(const EnsembleSpec& spec, const std::vector<double>& lambdas);

/// For each epsilon in the ladder: E max_n |u^eps - u^{eps/2}|^2, with
/// bound_term = E sum tau |G^eps - G^{eps/2}|_HS^2.
LadderResult epsilon_ladder(const EnsembleSpec& spec, const std::vector<double>& epsilons);

/// Energy-identity residuals at dyadically refined tau on coupled increments
/// (sampled at the finest step and summed). Metric: E |residual|.
LadderResult tau_ladder(const EnsembleSpec& spec, const std::vector<double>& taus, double alpha = 0.0);

struct AprioriLevel {
  double lambda = 0.0;
  AprioriTerms mean;
  double lhs = 0.0;  // sqrt(E sup|u|^2) + sqrt(lambda E sum tau |grad u|^2) + E sum tau int gamma.grad u
  double rhs = 0.0;  // E|u0|^2 + E sum tau |G|_HS^2 + 1
  double n_fit = 0.0;
  double ui_bound = 0.0;  // E sum tau int k*(gamma_lambda(grad u))
};

struct AprioriStudy {
  double tau = 0.0;
  std::vector<AprioriLevel> levels;
  double n_spread() const;   // max N / min N
  double ui_spread() const;  // max bound / min bound
  nlohmann::json to_json() const;
};

AprioriStudy apriori_study(const EnsembleSpec& spec, const std::vector<double>& lambdas);

struct LipschitzPoint {
  double delta = 0.0;
  double input = 0.0;   // E|u01 - u02|^2
  double output = 0.0;  // E max_n |u1 - u2|^2
  std::vector<double> weighted;  // E sum tau e^{-2 alpha t_n}|u1 - u2|^2 / input, per alpha
};

struct LipschitzStudy {
  std::vector<double> alphas;
  std::vector<LipschitzPoint> points;
  double slope = 0.0;  // least-squares log-log slope of output vs input
  double constant = 0.0;  // max output / input
  nlohmann::json to_json() const;
};

/// Coupled pairs u01 = spec.u0, u02 = u0 + delta * direction / |direction|.
LipschitzStudy lipschitz_study(const EnsembleSpec& spec, const Field& direction, const std::vector<double>& deltas,
                               const std::vector<double>& alphas = {});

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mspde
