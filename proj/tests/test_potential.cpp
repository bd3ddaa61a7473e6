#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mspde/errors.hpp"
#include "mspde/potential.hpp"

using namespace mspde;

namespace {

// Root of s + lambda*sinh(s) = r by plain bisection.
double cosh_resolvent_oracle(double lambda, double r) {
  double lo = 0.0, hi = r;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid + lambda * std::sinh(mid) < r ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// sup_r (y r - k(r)) on a ray by golden-section search.
double ray_conjugate_oracle(const Potential& p, const Vec& y, double r_max) {
  const Vec dir = y / y.norm();
  auto f = [&](double t) { return y.dot(t * dir) - p.k(t * dir); };
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = 0.0, b = r_max;
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int i = 0; i < 200; ++i) {
    if (f(c) > f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  return f(0.5 * (a + b));
}

std::vector<Potential> library(int dim) {
  std::vector<Potential> out;
  for (double p : {1.5, 2.0, 3.0, 4.0}) out.push_back(p_power_potential(dim, p));
  out.push_back(cosh_potential(dim));
  out.push_back(exp_potential(dim));
  if (dim == 2) out.push_back(anisotropic_potential({p_power_profile(3.0), cosh_profile()}));
  return out;
}

Vec random_vec(std::mt19937_64& rng, int dim, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = u(rng);
  return v;
}

}  // namespace

TEST_CASE("quadratic potential closed forms") {
  const Potential q = p_power_potential(2, 2.0);
  const Vec x = vec({2.0, 0.0});
  CHECK((resolvent(q, 1.0, x) - vec({1.0, 0.0})).norm() < 1e-12);
  CHECK((yosida(q, 1.0, x) - vec({1.0, 0.0})).norm() < 1e-12);
  CHECK(moreau(q, 1.0, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(conjugate(q, vec({1.0, 1.0})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(fenchel_young_gap(q, vec({1.0, 0.0}), vec({1.0, 0.0}))) < 1e-14);
  CHECK(fenchel_young_gap(q, vec({1.0, 0.0}), vec({0.0, 1.0})) == doctest::Approx(1.0));
  CHECK(std::abs(pluto_identity_residual(q, 1.0, x)) < 1e-12);
}

TEST_CASE("origin is fixed by every operation") {
  for (int dim : {1, 2})
    for (const Potential& p : library(dim)) {
      const Vec zero = Vec::Zero(dim);
      for (double lam : {1.0, 0.1}) {
        CHECK(resolvent(p, lam, zero).norm() == 0.0);
        CHECK(yosida(p, lam, zero).norm() == 0.0);
        CHECK(moreau(p, lam, zero) == 0.0);
        CHECK(pluto_identity_residual(p, lam, zero) == 0.0);
      }
      CHECK(conjugate(p, zero) == 0.0);
    }
}

TEST_CASE("cosh potential against a bisection oracle") {
  const Potential c = cosh_potential(2);
  const double s = cosh_resolvent_oracle(0.5, 1.0);
  CHECK(s == doctest::Approx(0.65101).epsilon(1e-4));
  const Vec x = vec({1.0, 0.0});
  const Vec j = resolvent(c, 0.5, x);
  CHECK(std::abs(j[0] - s) < 1e-9);
  CHECK(std::abs(j[1]) < 1e-15);
  const Vec y = yosida(c, 0.5, x);
  CHECK(std::abs(y[0] - (1.0 - s) / 0.5) < 1e-8);
  CHECK(y[0] == doctest::Approx(0.69798).epsilon(1e-4));
  CHECK(moreau(c, 0.5, x) == doctest::Approx(std::cosh(s) - 1.0 + (1.0 - s) * (1.0 - s)).epsilon(1e-9));
  CHECK(std::abs(pluto_identity_residual(c, 0.5, x)) < 1e-8);
  CHECK(std::abs(fenchel_young_gap(c, x, c.gamma(x))) < 1e-10);
}

TEST_CASE("cosh conjugate: closed form and direct maximization") {
  const Potential c = cosh_potential(2);
  const Vec y = vec({2.0, 0.0});
  const double closed = 2.0 * std::asinh(2.0) - std::sqrt(5.0) + 1.0;
  CHECK(closed == doctest::Approx(1.65120).epsilon(1e-4));
  CHECK(conjugate(c, y) == doctest::Approx(closed).epsilon(1e-12));
  CHECK(ray_conjugate_oracle(c, y, 5.0) == doctest::Approx(closed).epsilon(1e-9));
  CHECK(conjugate_numeric(c, y) == doctest::Approx(closed).epsilon(1e-9));
}

TEST_CASE("truncation") {
  CHECK((truncate(1.0, vec({3.0, 4.0})) - vec({0.6, 0.8})).norm() < 1e-15);
  CHECK((truncate(10.0, vec({3.0, 4.0})) - vec({3.0, 4.0})).norm() == 0.0);
  CHECK(truncate(1.0, vec({0.0, 0.0})).norm() == 0.0);
}

TEST_CASE("sampled monotonicity, domination and Moreau ordering") {
  std::mt19937_64 rng(11);
  for (int dim : {1, 2})
    for (const Potential& p : library(dim)) {
      for (int i = 0; i < 200; ++i) {
        const Vec x = random_vec(rng, dim, 3.0);
        const Vec z = random_vec(rng, dim, 3.0);
        const double scale = 1.0 + x.norm() + z.norm();
        CHECK((p.gamma(x) - p.gamma(z)).dot(x - z) >= -1e-12 * scale * scale);
        double prev = -1.0;
        for (double lam : {1.0, 0.5, 0.1, 0.01}) {
          const Vec jx = resolvent(p, lam, x);
          const Vec gl = yosida(p, lam, x);
          const Vec gj = p.gamma(jx);
          CHECK((gl - gj).norm() <= 1e-8 * (1.0 + gj.norm()));
          CHECK(gl.norm() <= p.gamma(x).norm() + 1e-8);
          const double m = moreau(p, lam, x);
          CHECK(m <= p.k(x) + 1e-12 * (1.0 + p.k(x)));
          CHECK(m >= prev - 1e-12 * (1.0 + m));
          prev = m;
        }
      }
    }
}

TEST_CASE("Yosida map is monotone and 1/lambda-Lipschitz") {
  std::mt19937_64 rng(5);
  const Potential p = p_power_potential(2, 3.0);
  for (double lam : {1.0, 0.1}) {
    for (int i = 0; i < 300; ++i) {
      const Vec x = random_vec(rng, 2, 4.0);
      const Vec z = random_vec(rng, 2, 4.0);
      const Vec d = yosida(p, lam, x) - yosida(p, lam, z);
      CHECK(d.dot(x - z) >= -1e-12);
      CHECK(d.norm() <= (x - z).norm() / lam * (1.0 + 1e-10));
    }
  }
}

TEST_CASE("numeric conjugate matches closed forms") {
  std::mt19937_64 rng(3);
  std::vector<Potential> ps;
  for (double p : {1.5, 2.0, 3.0, 4.0}) ps.push_back(p_power_potential(2, p));
  ps.push_back(cosh_potential(2));
  for (const Potential& p : ps) {
    REQUIRE(p.has_conjugate_closed_form());
    for (int i = 0; i < 100; ++i) {
      const Vec y = random_vec(rng, 2, 5.0);
      const double closed = conjugate(p, y);
      CHECK(std::abs(conjugate_numeric(p, y) - closed) <= 1e-6 * std::max(1.0, std::abs(closed)));
    }
  }
}

TEST_CASE("closed-form p=3 resolvent agrees with the generic scalar solver") {
  Profile phi = p_power_profile(3.0);
  Profile generic = phi;
  generic.resolvent = nullptr;
  for (double lam : {1.0, 0.1, 0.01})
    for (double r : {0.0, 1e-6, 0.3, 1.0, 7.0, 100.0}) {
      const double a = profile_resolvent(phi, lam, r);
      const double b = profile_resolvent(generic, lam, r);
      CHECK(std::abs(a - b) <= 1e-10 * (1.0 + r));
      CHECK(std::abs(a + lam * phi.slope(a) - r) <= 1e-10 * (1.0 + r));
    }
}

TEST_CASE("anisotropic potential acts axis by axis") {
  const Potential a = anisotropic_potential({p_power_profile(2.0), cosh_profile()});
  const Vec x = vec({2.0, 1.0});
  const Vec y = yosida(a, 0.5, x);
  CHECK(y[0] == doctest::Approx(2.0 / 1.5).epsilon(1e-10));
  const double s = cosh_resolvent_oracle(0.5, 1.0);
  CHECK(y[1] == doctest::Approx((1.0 - s) / 0.5).epsilon(1e-8));
  CHECK(std::abs(pluto_identity_residual(a, 0.5, x)) < 1e-8);
}

TEST_CASE("registry builds, rejects and accepts user potentials") {
  const Potential p = make_potential({{"kind", "p_power"}, {"p", 3.0}}, 1);
  CHECK(p.name() == "p_power");
  CHECK(p.k(vec({3.0})) == doctest::Approx(9.0));
  CHECK_THROWS_AS(make_potential({{"kind", "nope"}}, 1), ConfigError);
  CHECK_THROWS_AS(make_potential({{"p", 2.0}}, 1), ConfigError);

  register_potential("test_quadratic", [](const nlohmann::json&, int dim) {
    PotentialSpec spec;
    spec.name = "test_quadratic";
    spec.dim = dim;
    spec.k = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
    spec.gamma = [](const Vec& x) -> Vec { return x; };
    return Potential(spec);
  });
  const Potential u = make_potential({{"kind", "test_quadratic"}}, 2);
  const Vec x = vec({2.0, -1.0});
  CHECK((resolvent(u, 0.25, x) - x / 1.25).norm() < 1e-9);
  CHECK(conjugate(u, x) == doctest::Approx(2.5).epsilon(1e-9));
  CHECK((yosida_jacobian(u, 0.25, x) - Mat::Identity(2, 2) / 1.25).norm() < 1e-5);
}

TEST_CASE("audit flags a nonconvex user potential") {
  for (const Potential& p : library(2)) CHECK(audit_potential(p, 200, 1).ok());
  PotentialSpec spec;
  spec.name = "wiggle";
  spec.dim = 1;
  spec.k = [](const Vec& x) { return x.squaredNorm() + 0.8 * std::sin(3.0 * x[0]) * x[0]; };
  spec.gamma = [](const Vec& x) -> Vec {
    return vec({2.0 * x[0] + 0.8 * (std::sin(3.0 * x[0]) + 3.0 * x[0] * std::cos(3.0 * x[0]))});
  };
  CHECK_FALSE(audit_potential(Potential(spec), 500, 1).ok());
}

TEST_CASE("conjugate outside the reachable range fails loudly") {
  const Potential e = exp_potential(1);
  CHECK_THROWS_AS((void)conjugate_numeric(e, vec({1e300})), NonConvergence);
}
