#pragma once

// Convex-analysis kernel: superlinear convex potentials k on R^n, their
// gradients gamma = grad k, conjugates k*, resolvents (I + lambda*gamma)^{-1},
// Yosida approximations, Moreau envelopes and radial truncation.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mspde {

inline constexpr int kMaxDim = 4;

/// Point of R^n with n <= kMaxDim; stored inline, never allocates.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

/// Even convex scalar profile phi on [0, inf) with phi(0) = 0 and phi'(0) = 0.
/// Radial potentials are k(x) = phi(|x|); anisotropic ones sum phi_i(|x_i|).
struct Profile {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  std::function<double(double)> value;
  std::function<double(double)> slope;
  std::function<double(double)> curvature;
  /// Optional closed-form phi*(t), t >= 0.
  std::function<double(double)> conjugate;
  /// Optional closed-form root s of s + lambda*phi'(s) = r, r >= 0.
  std::function<double(double, double)> resolvent;
};

Profile p_power_profile(double p);
Profile cosh_profile();
Profile exp_profile();

struct ResolventOptions {
  double rtol = 1e-10;
  int max_newton = 100;
  int max_bisection = 200;
};

/// Root s in [0, r] of s + lambda*phi'(s) = r.
double profile_resolvent(const Profile& phi, double lambda, double r,
                         const ResolventOptions& opts = {});
/// phi*(t) for t >= 0; closed form when the profile has one.
double profile_conjugate(const Profile& phi, double t);
/// phi*(t) by solving phi'(s) = t, ignoring any closed form.
double profile_conjugate_numeric(const Profile& phi, double t);

/// Field set describing a potential. Only `k` and `gamma` are mandatory.
struct PotentialSpec {
  std::string name;
  int dim = 1;
  std::function<double(const Vec&)> k;
  std::function<Vec(const Vec&)> gamma;
  std::function<double(const Vec&)> conjugate_closed_form;
  std::function<Vec(const Vec&, double)> resolvent_closed_form;
  std::function<Mat(const Vec&)> hessian;
  /// Bound on limsup k(-x)/k(x).
  double asymmetry_bound = 1.0;
  nlohmann::json params = nlohmann::json::object();
};

/// Immutable handle to a convex potential; cheap to copy and safe to share
/// between threads.
class Potential {
 public:
  explicit Potential(PotentialSpec spec);

  int dim() const noexcept { return spec_->dim; }
  const std::string& name() const noexcept { return spec_->name; }
  const PotentialSpec& spec() const noexcept { return *spec_; }
  double asymmetry_bound() const noexcept { return spec_->asymmetry_bound; }

  double k(const Vec& x) const { return spec_->k(x); }
  Vec gamma(const Vec& x) const { return spec_->gamma(x); }

  bool has_conjugate_closed_form() const noexcept {
    return static_cast<bool>(spec_->conjugate_closed_form);
  }
  bool has_resolvent_closed_form() const noexcept {
    return static_cast<bool>(spec_->resolvent_closed_form);
  }
  bool has_hessian() const noexcept { return static_cast<bool>(spec_->hessian); }

  /// Analytic Hessian when available, central differences of gamma otherwise.
  Mat hessian(const Vec& x) const;

  nlohmann::json describe() const;

 private:
  std::shared_ptr<const PotentialSpec> spec_;
};

Potential p_power_potential(int dim, double p);
Potential cosh_potential(int dim);
Potential exp_potential(int dim);
Potential radial_potential(int dim, Profile phi);
Potential anisotropic_potential(std::vector<Profile> axes);

// Registry: potentials selectable by {"kind": ..., params...}.
using PotentialFactory = std::function<Potential(const nlohmann::json& params, int dim)>;

/// Registers (or replaces) a named potential kind. Thread-safe.
void register_potential(const std::string& kind, PotentialFactory factory);
Potential make_potential(const nlohmann::json& block, int dim);
std::vector<std::string> registered_potentials();

// Operations.

Vec resolvent(const Potential& p, double lambda, const Vec& x, const ResolventOptions& opts = {});
Vec yosida(const Potential& p, double lambda, const Vec& x);
double moreau(const Potential& p, double lambda, const Vec& x);
/// Jacobian of the Yosida map, H (I + lambda H)^{-1} with H the Hessian at J_lambda x.
Mat yosida_jacobian(const Potential& p, double lambda, const Vec& x);

double conjugate(const Potential& p, const Vec& y);
/// Conjugate by Newton on gamma(r) = y, bypassing any closed form.
double conjugate_numeric(const Potential& p, const Vec& y);

double fenchel_young_gap(const Potential& p, const Vec& y, const Vec& r);

/// The four terms of k(J x) + k*(gamma_l(x)) = gamma_l(x).x - lambda|gamma_l(x)|^2.
struct PlutoTerms {
  double k_resolvent = 0.0;
  double conjugate_yosida = 0.0;
  double pairing = 0.0;    // gamma_l(x).x
  double quadratic = 0.0;  // lambda |gamma_l(x)|^2

  double residual() const { return k_resolvent + conjugate_yosida - (pairing - quadratic); }
  /// pairing - (k(Jx) + k*(gamma_l x)); nonnegative.
  double inequality_slack() const { return pairing - (k_resolvent + conjugate_yosida); }
};

PlutoTerms pluto_terms(const Potential& p, double lambda, const Vec& x);
double pluto_identity_residual(const Potential& p, double lambda, const Vec& x);

Vec truncate(double radius, const Vec& x);

/// Sampled checks of the structural assumptions on a (user) potential.
struct PotentialAudit {
  int samples = 0;
  int nonzero_at_origin = 0;
  int negative_values = 0;
  int convexity_violations = 0;
  int monotonicity_violations = 0;
  int superlinearity_violations = 0;

  bool ok() const {
    return nonzero_at_origin + negative_values + convexity_violations +
               monotonicity_violations + superlinearity_violations ==
           0;
  }
};

PotentialAudit audit_potential(const Potential& p, int samples, std::uint64_t seed,
                               double radius = 3.0);

}  // namespace mspde
