#pragma once

// Time integration of the regularized equation
//   du - div gamma_lambda(grad u) dt - lambda Laplacian u dt = B(t, u) dW
// with the Yosida drift explicit and lambda*Laplacian implicit, the mollified
// additive layer, and the Picard loop for multiplicative noise.

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include <json.hpp>

#include "mspde/grid.hpp"
#include "mspde/noise.hpp"
#include "mspde/potential.hpp"

namespace mspde {

enum class Scheme { explicit_drift, prox_implicit_reference };

struct SolverConfig {
  double lambda = 0.1;
  double epsilon = 0.0;  // 0 disables noise mollification
  int m = 0;             // smoothing exponent; 0 selects the dimension default
  double tau = 1e-5;
  double T = 0.01;
  double alpha = -1.0;  // E_alpha weight; negative selects 4 L_B^2 c_basis^2
  double picard_tol = 1e-10;
  int picard_max = 50;
  Scheme scheme = Scheme::explicit_drift;
  double cfl_c = 0.25;
  std::size_t record_stride = 1;

  std::size_t steps() const;
};

/// Largest admissible tau for the explicit drift: cfl_c * lambda * h_min^2 / n.
double stability_bound(const Grid& grid, const SolverConfig& cfg);
/// Throws StabilityViolation when the explicit scheme would be unstable.
void check_stability(const Grid& grid, const SolverConfig& cfg);
int smoothing_exponent(const Grid& grid, const SolverConfig& cfg);
double default_alpha(const DiffusionOperator& b);
/// The operator the solver actually uses: mollified when cfg.epsilon > 0.
DiffusionOperator effective_diffusion(const DiffusionOperator& b, const SolverConfig& cfg);

/// gamma_lambda applied to the face gradients; axis-a output is the a-th
/// component at the a-faces.
VectorField yosida_flux(const Potential& p, double lambda, const VectorField& grad);
/// Single-threaded reference for yosida_flux.
VectorField yosida_flux_serial(const Potential& p, double lambda, const VectorField& grad);

/// One step of the explicit-drift scheme:
/// (I - tau lambda Laplacian) u_{n+1} = u_n + tau div gamma_lambda(grad u_n) + B(t_n, s_n) dW_n,
/// with s_n = u_n unless a frozen diffusion state is supplied.
Field step_regularized(const Potential& p, const DiffusionOperator& b, const Field& u_n, double t_n,
                       std::span<const double> dw, const SolverConfig& cfg,
                       const Field* diffusion_state = nullptr);

/// One backward-Euler step on the full regularized flux, solved by Newton:
/// u_{n+1} - tau div(gamma_lambda(grad u_{n+1}) + lambda grad u_{n+1}) = u_n + B(t_n, s_n) dW_n.
Field step_reference(const Potential& p, const DiffusionOperator& b, const Field& u_n, double t_n,
                     std::span<const double> dw, const SolverConfig& cfg,
                     const Field* diffusion_state = nullptr);

struct SolutionPath {
  SolverConfig config;
  std::vector<double> times;
  std::vector<Field> fields;
  /// gamma_lambda(grad u) at each recorded time.
  std::vector<VectorField> drift_flux;
  /// Argument of B at each recorded time when it differs from `fields`
  /// (Picard iterates); empty otherwise.
  std::vector<Field> diffusion_state;
  std::shared_ptr<const NoisePath> noise;
  std::size_t stride = 1;

  const Field& state_for_diffusion(std::size_t r) const {
    return diffusion_state.empty() ? fields[r] : diffusion_state[r];
  }
  double recorded_dt() const { return config.tau * static_cast<double>(stride); }
};

/// Everything a streaming diagnostic may need about step n -> n+1.
struct StepView {
  std::size_t n;
  double t;
  const Field& u;
  const VectorField& grad;
  const VectorField& flux;  // gamma_lambda(grad u_n)
  const Field& u_next;
  const Field& noise_term;  // B(t_n, s_n) dW_n
  const Field& diffusion_state;
};

using StepObserver = std::function<void(const StepView&)>;

/// Runs the configured scheme over [0, T]. `frozen` (length steps+1), when
/// given, replaces u_n as the argument of B. Used by the additive and Picard
/// drivers; exposed for ladder experiments.
SolutionPath integrate(const Potential& p, const DiffusionOperator& b, const Field& u0,
                       const SolverConfig& cfg, std::shared_ptr<const NoisePath> noise,
                       const std::vector<Field>* frozen = nullptr, const StepObserver& observer = {});

SolutionPath solve_additive(const Potential& p, const DiffusionOperator& b, const Field& u0,
                            const SolverConfig& cfg, std::shared_ptr<const NoisePath> noise,
                            const StepObserver& observer = {});

struct PicardResult {
  SolutionPath path;
  int picard_iters = 0;
  double alpha = 0.0;
  std::vector<double> distances;  // E_alpha distance between successive iterates
  std::vector<double> contraction_ratios;
};

/// Picard iteration v -> Gamma(u0, v) on a fixed noise path, started from
/// `initial` (defaults to u0 held constant in time).
PicardResult solve_multiplicative(const Potential& p, const DiffusionOperator& b, const Field& u0,
                                  const SolverConfig& cfg, std::shared_ptr<const NoisePath> noise,
                                  const std::vector<Field>* initial = nullptr);

/// Pathwise E_alpha distance (sum_n tau e^{-2 alpha t_n} |a_n - b_n|^2)^{1/2}, n >= 1.
double e_alpha_distance(const std::vector<Field>& a, const std::vector<Field>& b, double tau, double alpha);

struct KappaDiagnostics {
  double sup_l2_sq = 0.0;
  double int_w11 = 0.0;
  double int_abs_gamma = 0.0;
  double int_k_plus_kstar = 0.0;
  /// sum tau int k(J_lambda grad u) + k*(gamma_lambda(grad u)) ...
  double int_k_resolvent_plus_kstar = 0.0;
  /// ... which equals sum tau int gamma_lambda.grad u - lambda |gamma_lambda|^2.
  double int_pluto_pairing = 0.0;

  nlohmann::json to_json() const;
};

KappaDiagnostics kappa_diagnostics(const SolutionPath& path, const Potential& p);

/// Pointwise integrals of the Yosida flux at one time: int k*(gamma_lambda(grad u)).
double conjugate_flux_integral(const Potential& p, double lambda, const VectorField& grad,
                               const VectorField& flux);

/// Streaming terms of the a priori bound and the uniform-integrability
/// surrogate for one path.
struct AprioriTerms {
  double u0_l2_sq = 0.0;
  double sup_l2_sq = 0.0;
  double grad_l2_sq_int = 0.0;    // sum tau |grad u|^2
  double flux_pairing_int = 0.0;  // sum tau int gamma_lambda(grad u).grad u
  double kstar_int = 0.0;         // sum tau int k*(gamma_lambda(grad u))
  double hs_int = 0.0;            // sum tau |B|_HS^2
};

class AprioriAccumulator {
 public:
  AprioriAccumulator(Potential p, const DiffusionOperator& b, double lambda, double tau);
  void operator()(const StepView& step);
  const AprioriTerms& terms() const { return terms_; }

 private:
  Potential p_;
  const DiffusionOperator* b_;
  double lambda_;
  double tau_;
  AprioriTerms terms_;
};

}  // namespace mspde
