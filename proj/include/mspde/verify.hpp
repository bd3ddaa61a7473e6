#pragma once

// Discrete analogues of the energy identities, the maximal inequality for
// stochastic integrals, and the de la Vallee Poussin uniform-integrability
// diagnostic, evaluated on recorded solution paths.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspde/noise.hpp"
#include "mspde/solver.hpp"

namespace mspde {

/// Terms of
///   1/2|y_N|^2 + damping + sum tau <zeta, grad y> - 1/2|y_0|^2 - ito - sum <y_n, C_n dW_n> = residual
/// for y_n = e^{-alpha t_n} u_n. The flux is the full discrete flux
/// zeta_n = gamma_lambda(grad u_n) + lambda grad u_{n+1}, paired with the
/// midpoint gradient; the Ito term is the realized quadratic variation.
struct EnergyLedger {
  double half_norm_sq = 0.0;
  double half_norm_sq_initial = 0.0;
  double damping_sum = 0.0;
  double flux_sum = 0.0;
  double ito_correction = 0.0;           // 1/2 sum |C_n dW_n|^2
  double ito_correction_expected = 0.0;  // 1/2 sum tau |C_n|_HS^2
  double martingale_sum = 0.0;
  double residual = 0.0;
  double alpha = 0.0;
  double c = 1.0;
  /// Cumulative residual after each step.
  std::vector<double> residual_trace;

  nlohmann::json to_json() const;
};

/// Full discrete flux zeta_n used by the scheme in step n -> n+1.
std::vector<VectorField> step_fluxes(const SolutionPath& path);

EnergyLedger energy_identity_residual(const SolutionPath& path, const DiffusionOperator& b,
                                      double alpha = 0.0, double c = 1.0);

/// Residual of |y_N - f_N|^2 + 2 sum tau <zeta_n, grad(y - f)_{n+1/2}> - |y_0 - f_0|^2
/// for a path y_{n+1} = y_n + tau div zeta_n + (f_{n+1} - f_n).
double deterministic_energy_identity(const std::vector<Field>& y_path, const std::vector<VectorField>& flux_path,
                                     const std::vector<Field>& f_path, double tau);

/// Forcing trajectory f_n = sum_{k<n} C_k dW_k of a recorded path.
std::vector<Field> forcing_path(const SolutionPath& path, const DiffusionOperator& b);

struct MaximalEstimateRow {
  double epsilon = 0.0;
  double lhs = 0.0;           // E max_n |sum_{k<n} <F_k, G_k dW_k>|
  double op_term = 0.0;       // E max_n |F_n|^2
  double hs_term = 0.0;       // E sum tau |G_n|_HS^2
  double n_minimal = 0.0;     // smallest N(eps) valid on the calibration batch
  double n_fitted = 0.0;      // c / eps
  double rhs = 0.0;
  double slack = 0.0;
  bool pass = false;
};

struct MaximalEstimateConfig {
  std::size_t steps = 100;
  double tau = 1e-3;
  std::uint64_t seed = 0;  // calibration batch; evaluation uses seed + 1
  double safety = 1.25;
};

struct MaximalEstimateTable {
  double c = 0.0;  // N(eps) = c / eps
  std::string protocol;
  std::vector<MaximalEstimateRow> rows;

  bool all_pass() const;
  nlohmann::json to_json() const;
};

/// F is a deterministic field trajectory (length >= steps); G_n = G(t_n, F_n).
MaximalEstimateTable maximal_estimate_check(const std::vector<Field>& f_path, const DiffusionOperator& g,
                                            const WienerConfig& wiener, const MaximalEstimateConfig& cfg,
                                            std::size_t paths, const std::vector<double>& eps_grid);

struct UiReport {
  std::size_t paths = 0;
  double bound = 0.0;
  std::vector<double> thresholds;
  std::vector<double> tail_mass;
  std::vector<double> majorant;  // bound / min_{|x|=R} k*(x)/|x|

  bool holds() const;
  nlohmann::json to_json() const;
};

/// Streaming version of uniform_integrability_report; one instance per path,
/// merged in path order.
class UiAccumulator {
 public:
  UiAccumulator(Potential p, double lambda, std::vector<double> thresholds);

  void add(const VectorField& grad, const VectorField& flux, double weight);
  void end_path() { ++paths_; }
  void merge(const UiAccumulator& other);
  UiReport report() const;

 private:
  Potential p_;
  double lambda_;
  std::vector<double> thresholds_;
  std::size_t paths_ = 0;
  double kstar_ = 0.0;
  std::vector<double> tail_;
};

UiReport uniform_integrability_report(const std::vector<SolutionPath>& ensemble, const Potential& p,
                                      const std::vector<double>& thresholds);

/// min over the sphere |x| = radius of k*(x)/|x| (sampled in 2D).
double conjugate_growth(const Potential& p, double radius);

struct DiagnosticRecord {
  std::string check_name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
};

}  // namespace mspde
