#pragma once

// Truncated cylindrical Wiener process on the discrete sine basis and
// Hilbert-Schmidt diffusion operators (additive and Lipschitz-multiplicative),
// including the mollified operators (I - eps*Laplacian)^{-m} B.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspde/grid.hpp"

namespace mspde {

/// First `modes` Dirichlet-Laplacian eigenfunctions of the grid, L^2-orthonormal.
struct WienerConfig {
  GridPtr grid;
  std::size_t modes = 0;
  std::uint64_t seed = 0;
  std::vector<Field> basis;
  std::vector<double> eigenvalues;  // of -Laplacian, ascending
};

WienerConfig make_wiener(GridPtr grid, std::size_t modes, std::uint64_t seed);
std::size_t default_modes(const Grid& grid);

/// Brownian increments dW_{n,j} ~ N(0, tau), row-major (step, mode).
struct NoisePath {
  std::size_t steps = 0;
  std::size_t modes = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t path = 0;
  std::vector<double> increments;

  std::span<const double> step(std::size_t n) const {
    return std::span<const double>(increments).subspan(n * modes, modes);
  }
};

/// Standard normals keyed by (seed, path, step); out[j] is mode j. Pure
/// function of its arguments.
void standard_normals(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                      std::span<double> out);

NoisePath sample_increments(const WienerConfig& cfg, std::size_t steps, double tau,
                            std::uint64_t path = 0);

/// Sums groups of `factor` consecutive increments: the same Brownian path
/// observed on a time grid `factor` times coarser.
NoisePath coarsen(const NoisePath& fine, std::size_t factor);

enum class NoiseKind { additive, multiplicative };

/// Scalar Lipschitz nonlinearity of the multiplicative family
/// (B(u) e_j)(x) = sigma(u(x)) q_j e_j(x).
struct Sigma {
  enum class Kind { zero, identity_clipped, tanh, affine };
  Kind kind = Kind::tanh;
  double lipschitz = 1.0;  // L_B
  double clip = 1.0;       // identity_clipped: sigma(u) = L_B clamp(u, -clip, clip)
  double offset = 0.0;     // affine: sigma(u) = offset + L_B u

  double operator()(double u) const;
  bool constant() const { return kind == Kind::zero || lipschitz == 0.0; }
};

/// Scalar modulation of an additive operator, G(t) = profile(t) G.
struct TimeProfile {
  enum class Kind { constant, periodic };
  Kind kind = Kind::constant;
  double value = 1.0;
  double amplitude = 0.0;
  double frequency = 1.0;

  double operator()(double t) const;
};

struct Smoothing {
  double epsilon = 0.0;
  int m = 1;
};

class DiffusionOperator {
 public:
  static DiffusionOperator additive(const WienerConfig& cfg, std::vector<double> weights,
                                    TimeProfile profile = {});
  static DiffusionOperator multiplicative(const WienerConfig& cfg, std::vector<double> weights,
                                          Sigma sigma);

  /// q_j = amplitude * j^{-decay}, j = 1..modes.
  static std::vector<double> decay_weights(std::size_t modes, double decay, double amplitude = 1.0);

  NoiseKind kind() const noexcept { return kind_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Sigma& sigma() const noexcept { return sigma_; }
  const TimeProfile& time_profile() const noexcept { return profile_; }
  const std::vector<Smoothing>& smoothing() const noexcept { return smoothing_; }
  std::size_t modes() const noexcept { return weights_.size(); }
  const GridPtr& grid_ptr() const noexcept { return grid_; }

  /// sqrt(sum_j q_j^2 |e_j|_inf^2): the HS-Lipschitz factor of the basis.
  double c_basis() const noexcept { return c_basis_; }
  /// Lipschitz constant of u -> B(u) from L^2 to HS (0 when additive).
  double lipschitz_hs() const noexcept;
  bool state_independent() const noexcept;

  /// The fields B(t, u) e_j, j = 1..M.
  std::vector<Field> components(double t, const Field& u) const;
  Field apply(double t, const Field& u, std::span<const double> dw) const;
  double hs_norm_sq(double t, const Field& u) const;

  DiffusionOperator mollified(double epsilon, int m) const;

  nlohmann::json describe() const;

 private:
  DiffusionOperator() = default;
  void finish_setup();

  NoiseKind kind_ = NoiseKind::additive;
  GridPtr grid_;
  std::vector<double> weights_;
  Sigma sigma_;
  TimeProfile profile_;
  std::vector<Smoothing> smoothing_;
  std::vector<Field> basis_;
  std::vector<Field> mode_fields_;  // q_j e_j, already smoothed when additive
  std::vector<double> weight_sq_;   // sum_j (q_j e_j(x))^2
  double c_basis_ = 0.0;
};

Field apply_diffusion(const DiffusionOperator& b, double t, const Field& u, std::span<const double> dw);
double hs_norm_sq(const DiffusionOperator& b, double t, const Field& u);
DiffusionOperator mollify(const DiffusionOperator& b, double epsilon, int m);

struct ItoIsometry {
  double lhs = 0.0;
  double rhs = 0.0;
  double rel_err = 0.0;
};

/// Monte Carlo E|sum_n B(t_n, u) dW_n|^2 against sum_n tau |B(t_n, u)|_HS^2
/// with the state frozen at `frozen`.
ItoIsometry ito_isometry_check(const DiffusionOperator& b, const WienerConfig& cfg, std::size_t paths,
                               std::size_t steps, double tau, const Field& frozen);
ItoIsometry ito_isometry_check(const DiffusionOperator& b, const WienerConfig& cfg, std::size_t paths,
                               std::size_t steps, double tau);

}  // namespace mspde
