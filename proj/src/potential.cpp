#include "mspde/potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <random>

#include <boost/math/special_functions/lambert_w.hpp>

#include "mspde/errors.hpp"

namespace mspde {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kHuge = 1e300;

// Safeguarded Newton-bisection for an increasing f on [lo, hi] with
// f(lo) <= 0 <= f(hi). Newton steps that leave the bracket, or whose
// derivative is unusable, fall back to bisection.
template <class F, class DF>
double monotone_root(F&& f, DF&& df, double lo, double hi, double guess, double accept_tol,
                     const ResolventOptions& opts, const char* what) {
  double x = std::clamp(guess, lo, hi);
  double fx = f(x);
  const double target = 4.0 * kEps * (1.0 + std::max(std::abs(lo), std::abs(hi)));
  auto done = [&](double fv) { return std::abs(fv) <= target; };

  for (int it = 0; it < opts.max_newton && !done(fx); ++it) {
    if (fx < 0.0)
      lo = x;
    else
      hi = x;
    const double d = df(x);
    double next = x - fx / d;
    if (!std::isfinite(d) || d <= 0.0 || !std::isfinite(next) || next <= lo || next >= hi)
      next = 0.5 * (lo + hi);
    if (next == x) break;
    x = next;
    fx = f(x);
  }
  for (int it = 0; it < opts.max_bisection && !done(fx) && hi - lo > kEps * std::abs(x); ++it) {
    if (fx < 0.0)
      lo = x;
    else
      hi = x;
    x = 0.5 * (lo + hi);
    fx = f(x);
  }
  if (!(std::abs(fx) <= accept_tol)) throw NonConvergence(what, std::abs(fx));
  return x;
}

double sgn(double v) { return v < 0.0 ? -1.0 : 1.0; }

Mat clamp_finite(Mat m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (!std::isfinite(v)) v = std::isnan(v) ? kHuge : std::copysign(kHuge, v);
    v = std::clamp(v, -kHuge, kHuge);
  }
  return m;
}

Profile profile_from_json(const nlohmann::json& block) {
  const std::string kind = block.at("kind").get<std::string>();
  if (kind == "p_power") return p_power_profile(block.at("p").get<double>());
  if (kind == "cosh") return cosh_profile();
  if (kind == "exp") return exp_profile();
  throw ConfigError("unknown profile kind '" + kind + "'", "unknown_kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// Profiles

Profile p_power_profile(double p) {
  if (!(p > 1.0) || !std::isfinite(p))
    throw ConfigError("p_power potential needs p > 1, got " + std::to_string(p));
  Profile phi;
  phi.name = "p_power";
  phi.params = {{"p", p}};
  phi.value = [p](double s) { return std::pow(s, p) / p; };
  phi.slope = [p](double s) { return std::pow(s, p - 1.0); };
  phi.curvature = [p](double s) {
    if (s == 0.0) return p > 2.0 ? 0.0 : (p == 2.0 ? 1.0 : std::numeric_limits<double>::infinity());
    return (p - 1.0) * std::pow(s, p - 2.0);
  };
  const double q = p / (p - 1.0);
  phi.conjugate = [q](double t) { return std::pow(t, q) / q; };
  if (p == 2.0) {
    phi.resolvent = [](double lambda, double r) { return r / (1.0 + lambda); };
  } else if (p == 3.0) {
    // s + lambda s^2 = r, rationalized root.
    phi.resolvent = [](double lambda, double r) {
      return 2.0 * r / (1.0 + std::sqrt(1.0 + 4.0 * lambda * r));
    };
  }
  return phi;
}

Profile cosh_profile() {
  Profile phi;
  phi.name = "cosh";
  phi.value = [](double s) {
    const double h = std::sinh(0.5 * s);
    return 2.0 * h * h;
  };
  phi.slope = [](double s) { return std::sinh(s); };
  phi.curvature = [](double s) { return std::cosh(s); };
  phi.conjugate = [](double t) {
    return t * std::asinh(t) - t * t / (1.0 + std::sqrt(1.0 + t * t));
  };
  return phi;
}

Profile exp_profile() {
  Profile phi;
  phi.name = "exp";
  phi.value = [](double s) { return std::expm1(0.5 * s * s); };
  phi.slope = [](double s) { return s * std::exp(0.5 * s * s); };
  phi.curvature = [](double s) { return (1.0 + s * s) * std::exp(0.5 * s * s); };
  // phi'(s) = t  <=>  s^2 e^{s^2} = t^2  <=>  s^2 = W0(t^2).
  phi.conjugate = [](double t) {
    if (t == 0.0) return 0.0;
    const double s = std::sqrt(boost::math::lambert_w0(t * t));
    return t * s - std::expm1(0.5 * s * s);
  };
  return phi;
}

double profile_resolvent(const Profile& phi, double lambda, double r, const ResolventOptions& opts) {
  if (r == 0.0) return 0.0;
  if (phi.resolvent) return phi.resolvent(lambda, r);
  const double c0 = phi.curvature(0.0);
  const double guess = std::isfinite(c0) ? r / (1.0 + lambda * c0) : 0.5 * r;
  return monotone_root([&](double s) { return s + lambda * phi.slope(s) - r; },
                       [&](double s) { return 1.0 + lambda * phi.curvature(s); }, 0.0, r, guess,
                       opts.rtol * (1.0 + r), opts, "resolvent: Newton-bisection budget exhausted");
}

double profile_conjugate_numeric(const Profile& phi, double t) {
  if (t == 0.0) return 0.0;
  if (!std::isfinite(t)) throw NonConvergence("conjugate: argument not finite", t);
  double hi = 1.0;
  int doublings = 0;
  while (!(phi.slope(hi) >= t)) {
    hi *= 2.0;
    if (++doublings > 1100 || !std::isfinite(hi))
      throw NonConvergence("conjugate: gamma(r) = y has no representable root", t);
  }
  const ResolventOptions opts{};
  const double s = monotone_root([&](double v) { return phi.slope(v) - t; },
                                 [&](double v) { return phi.curvature(v); }, 0.0, hi, 0.5 * hi,
                                 1e-9 * (1.0 + t), opts, "conjugate: Newton-bisection budget exhausted");
  const double out = t * s - phi.value(s);
  if (!std::isfinite(out)) throw NonConvergence("conjugate: value overflows", t);
  return out;
}

double profile_conjugate(const Profile& phi, double t) {
  if (phi.conjugate) return phi.conjugate(t);
  return profile_conjugate_numeric(phi, t);
}

// ---------------------------------------------------------------------------
// Potential

Potential::Potential(PotentialSpec spec) {
  if (spec.dim < 1 || spec.dim > kMaxDim)
    throw ConfigError("potential dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  if (!spec.k || !spec.gamma) throw ConfigError("potential needs both k and gamma");
  if (!(spec.asymmetry_bound >= 1.0)) throw ConfigError("asymmetry_bound must be >= 1");
  spec_ = std::make_shared<const PotentialSpec>(std::move(spec));
}

Mat Potential::hessian(const Vec& x) const {
  if (spec_->hessian) return spec_->hessian(x);
  const int n = dim();
  const double step = 1e-6 * (1.0 + x.norm());
  Mat h(n, n);
  for (int j = 0; j < n; ++j) {
    Vec xp = x, xm = x;
    xp[j] += step;
    xm[j] -= step;
    h.col(j) = (gamma(xp) - gamma(xm)) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

nlohmann::json Potential::describe() const {
  nlohmann::json out = spec_->params;
  out["kind"] = spec_->name;
  return out;
}

Potential radial_potential(int dim, Profile phi) {
  auto shared = std::make_shared<const Profile>(std::move(phi));
  PotentialSpec spec;
  spec.name = shared->name;
  spec.params = shared->params;
  spec.dim = dim;
  spec.k = [shared](const Vec& x) { return shared->value(x.norm()); };
  spec.gamma = [shared](const Vec& x) -> Vec {
    const double s = x.norm();
    if (s == 0.0) return Vec::Zero(x.size());
    return (shared->slope(s) / s) * x;
  };
  if (shared->conjugate)
    spec.conjugate_closed_form = [shared](const Vec& y) { return shared->conjugate(y.norm()); };
  spec.resolvent_closed_form = [shared](const Vec& x, double lambda) -> Vec {
    const double r = x.norm();
    if (r == 0.0) return Vec::Zero(x.size());
    return (profile_resolvent(*shared, lambda, r) / r) * x;
  };
  spec.hessian = [shared](const Vec& x) -> Mat {
    const int n = static_cast<int>(x.size());
    const double s = x.norm();
    if (s == 0.0) return shared->curvature(0.0) * Mat::Identity(n, n);
    const Vec u = x / s;
    const Mat radial = u * u.transpose();
    return shared->curvature(s) * radial + (shared->slope(s) / s) * (Mat::Identity(n, n) - radial);
  };
  return Potential(std::move(spec));
}

Potential p_power_potential(int dim, double p) { return radial_potential(dim, p_power_profile(p)); }
Potential cosh_potential(int dim) { return radial_potential(dim, cosh_profile()); }
Potential exp_potential(int dim) { return radial_potential(dim, exp_profile()); }

Potential anisotropic_potential(std::vector<Profile> axes) {
  if (axes.empty()) throw ConfigError("anisotropic potential needs at least one axis profile");
  auto shared = std::make_shared<const std::vector<Profile>>(std::move(axes));
  PotentialSpec spec;
  spec.name = "anisotropic";
  spec.dim = static_cast<int>(shared->size());
  nlohmann::json axes_json = nlohmann::json::array();
  for (const auto& phi : *shared) {
    nlohmann::json a = phi.params;
    a["kind"] = phi.name;
    axes_json.push_back(a);
  }
  spec.params = {{"axes", axes_json}};
  spec.k = [shared](const Vec& x) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) sum += (*shared)[i].value(std::abs(x[i]));
    return sum;
  };
  spec.gamma = [shared](const Vec& x) -> Vec {
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = sgn(x[i]) * (*shared)[i].slope(std::abs(x[i]));
    return g;
  };
  spec.conjugate_closed_form = [shared](const Vec& y) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) sum += profile_conjugate((*shared)[i], std::abs(y[i]));
    return sum;
  };
  spec.resolvent_closed_form = [shared](const Vec& x, double lambda) -> Vec {
    Vec y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      y[i] = sgn(x[i]) * profile_resolvent((*shared)[i], lambda, std::abs(x[i]));
    return y;
  };
  spec.hessian = [shared](const Vec& x) -> Mat {
    Mat h = Mat::Zero(x.size(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) h(i, i) = (*shared)[i].curvature(std::abs(x[i]));
    return h;
  };
  return Potential(std::move(spec));
}

// ---------------------------------------------------------------------------
// Registry

namespace {

struct Registry {
  std::mutex mutex;
  std::map<std::string, PotentialFactory> factories;

  Registry() {
    factories["p_power"] = [](const nlohmann::json& params, int dim) {
      return p_power_potential(dim, params.at("p").get<double>());
    };
    factories["cosh"] = [](const nlohmann::json&, int dim) { return cosh_potential(dim); };
    factories["exp"] = [](const nlohmann::json&, int dim) { return exp_potential(dim); };
    factories["anisotropic"] = [](const nlohmann::json& params, int dim) {
      std::vector<Profile> axes;
      for (const auto& a : params.at("axes")) axes.push_back(profile_from_json(a));
      if (static_cast<int>(axes.size()) != dim)
        throw ConfigError("anisotropic potential needs one profile per grid axis");
      return anisotropic_potential(std::move(axes));
    };
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_potential(const std::string& kind, PotentialFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.factories[kind] = std::move(factory);
}

Potential make_potential(const nlohmann::json& block, int dim) {
  if (!block.is_object() || !block.contains("kind"))
    throw ConfigError("potential block needs a 'kind'");
  const std::string kind = block.at("kind").get<std::string>();
  PotentialFactory factory;
  {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    auto it = r.factories.find(kind);
    if (it == r.factories.end())
      throw ConfigError("unknown potential kind '" + kind + "'", "unknown_kind");
    factory = it->second;
  }
  try {
    return factory(block, dim);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("potential '" + kind + "': " + e.what());
  }
}

std::vector<std::string> registered_potentials() {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  std::vector<std::string> out;
  for (const auto& [name, _] : r.factories) out.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------
// Operations

Vec resolvent(const Potential& p, double lambda, const Vec& x, const ResolventOptions& opts) {
  if (!(lambda > 0.0)) throw ConfigError("resolvent needs lambda > 0");
  if (p.has_resolvent_closed_form()) return p.spec().resolvent_closed_form(x, lambda);

  // Damped Newton on y + lambda*gamma(y) = x, i.e. on the gradient of the
  // strongly convex merit |y|^2/2 + lambda*k(y) - x.y.
  const int n = p.dim();
  auto merit = [&](const Vec& y) { return 0.5 * y.squaredNorm() + lambda * p.k(y) - x.dot(y); };
  const double accept = opts.rtol * (1.0 + x.norm());
  Vec y = x;
  Vec f = y + lambda * p.gamma(y) - x;
  for (int it = 0; it < opts.max_newton && f.norm() > 1e-3 * accept; ++it) {
    const Mat jac = Mat::Identity(n, n) + lambda * clamp_finite(p.hessian(y));
    Vec d = -jac.ldlt().solve(f);
    if (!d.allFinite()) d = -f;
    const double m0 = merit(y);
    double t = 1.0;
    int halvings = 0;
    while (!(merit(y + t * d) <= m0 + 1e-4 * t * f.dot(d)) && halvings < opts.max_bisection) {
      t *= 0.5;
      ++halvings;
    }
    if (halvings == opts.max_bisection) break;
    y += t * d;
    f = y + lambda * p.gamma(y) - x;
  }
  if (!(f.norm() <= accept)) throw NonConvergence("resolvent: damped Newton did not converge", f.norm());
  return y;
}

Vec yosida(const Potential& p, double lambda, const Vec& x) {
  return (x - resolvent(p, lambda, x)) / lambda;
}

double moreau(const Potential& p, double lambda, const Vec& x) {
  const Vec j = resolvent(p, lambda, x);
  return p.k(j) + (x - j).squaredNorm() / (2.0 * lambda);
}

Mat yosida_jacobian(const Potential& p, double lambda, const Vec& x) {
  const int n = p.dim();
  const Mat h = clamp_finite(p.hessian(resolvent(p, lambda, x)));
  const Mat a = Mat::Identity(n, n) + lambda * h;
  return a.ldlt().solve(h);
}

double conjugate(const Potential& p, const Vec& y) {
  if (p.has_conjugate_closed_form()) return p.spec().conjugate_closed_form(y);
  return conjugate_numeric(p, y);
}

double conjugate_numeric(const Potential& p, const Vec& y) {
  if (y.norm() == 0.0) return 0.0;
  if (!y.allFinite()) throw NonConvergence("conjugate: argument not finite", y.norm());
  const int n = p.dim();
  // Minimize the convex objective k(r) - y.r; its stationarity condition is gamma(r) = y.
  auto objective = [&](const Vec& r) { return p.k(r) - y.dot(r); };
  const double tol = 1e-13 * (1.0 + y.norm());
  Vec r = y;
  Vec g = p.gamma(r) - y;
  for (int it = 0; it < 200 && g.norm() > tol; ++it) {
    Mat h = clamp_finite(p.hessian(r));
    h += 1e-14 * (1.0 + h.norm()) * Mat::Identity(n, n);
    Vec d = -h.ldlt().solve(g);
    if (!d.allFinite() || g.dot(d) >= 0.0) d = -g;
    Vec next = r + d;
    if (!((p.gamma(next) - y).norm() < g.norm())) {
      const double f0 = objective(r);
      double t = 1.0;
      int halvings = 0;
      while (!(objective(r + t * d) <= f0 + 1e-4 * t * g.dot(d)) && halvings < 200) {
        t *= 0.5;
        ++halvings;
      }
      if (halvings == 200) break;
      next = r + t * d;
    }
    if (next == r) break;
    r = next;
    g = p.gamma(r) - y;
  }
  if (!(g.norm() <= 1e-8 * (1.0 + y.norm())))
    throw NonConvergence("conjugate: gamma(r) = y not solvable within budget", g.norm());
  const double out = y.dot(r) - p.k(r);
  if (!std::isfinite(out)) throw NonConvergence("conjugate: value overflows", y.norm());
  return out;
}

double fenchel_young_gap(const Potential& p, const Vec& y, const Vec& r) {
  return p.k(y) + conjugate(p, r) - r.dot(y);
}

PlutoTerms pluto_terms(const Potential& p, double lambda, const Vec& x) {
  const Vec j = resolvent(p, lambda, x);
  const Vec g = (x - j) / lambda;
  PlutoTerms t;
  t.k_resolvent = p.k(j);
  t.conjugate_yosida = conjugate(p, g);
  t.pairing = g.dot(x);
  t.quadratic = lambda * g.squaredNorm();
  return t;
}

double pluto_identity_residual(const Potential& p, double lambda, const Vec& x) {
  return pluto_terms(p, lambda, x).residual();
}

Vec truncate(double radius, const Vec& x) {
  if (!(radius > 0.0)) throw ConfigError("truncation radius must be positive");
  const double s = x.norm();
  if (s <= radius) return x;
  return (radius / s) * x;
}

PotentialAudit audit_potential(const Potential& p, int samples, std::uint64_t seed, double radius) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-radius, radius);
  const int n = p.dim();
  auto draw = [&] {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = coord(rng);
    return v;
  };

  PotentialAudit audit;
  audit.samples = samples;
  if (std::abs(p.k(Vec::Zero(n))) > 1e-14) ++audit.nonzero_at_origin;
  for (int s = 0; s < samples; ++s) {
    const Vec x = draw();
    const Vec y = draw();
    const double kx = p.k(x), ky = p.k(y);
    if (kx < 0.0 || ky < 0.0) ++audit.negative_values;
    const double mid = p.k(0.5 * (x + y));
    if (mid > 0.5 * (kx + ky) + 1e-12 * (1.0 + std::abs(kx) + std::abs(ky))) ++audit.convexity_violations;
    const double mono = (p.gamma(x) - p.gamma(y)).dot(x - y);
    const double scale = 1.0 + x.norm() + y.norm();
    if (mono < -1e-12 * scale * scale) ++audit.monotonicity_violations;

    if (x.norm() > 0.0) {
      const Vec dir = x / x.norm();
      double first = 0.0, prev = 0.0;
      bool ok = true;
      for (double r = 1.0; r <= 1024.0; r *= 2.0) {
        const double ratio = p.k(r * dir) / r;
        if (!std::isfinite(ratio)) break;  // overflow: growth is beyond any slope
        if (r == 1.0) first = ratio;
        if (ratio < prev * (1.0 - 1e-12)) ok = false;
        prev = ratio;
      }
      if (!ok || (std::isfinite(prev) && prev < 1.25 * first)) ++audit.superlinearity_violations;
    }
  }
  return audit;
}

}  // namespace mspde
