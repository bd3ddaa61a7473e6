#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "mspde/errors.hpp"
#include "mspde/grid.hpp"

using namespace mspde;

namespace {

Field random_field(const GridPtr& g, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Field f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(rng);
  return f;
}

VectorField random_vector_field(const GridPtr& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorField z(g);
  for (int a = 0; a < g->dim(); ++a)
    for (double& v : z.axis(a)) v = u(rng);
  return z;
}

// Dense matrix of a linear field map, column by column.
Eigen::MatrixXd dense(const GridPtr& g, const std::function<Field(const Field&)>& op) {
  const std::size_t n = g->size();
  Eigen::MatrixXd m(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    Field e(g);
    e[j] = 1.0;
    const Field col = op(e);
    for (std::size_t i = 0; i < n; ++i) m(i, j) = col[i];
  }
  return m;
}

}  // namespace

TEST_CASE("gradient by hand") {
  const GridPtr g = Grid::line(1.0, 3);
  CHECK(g->h(0) == doctest::Approx(0.25));
  const VectorField d = gradient(Field(g, {0.0, 1.0, 0.0}));
  const std::vector<double> expect{0.0, 4.0, -4.0, 0.0};
  REQUIRE(d.axis(0).size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(d.axis(0)[i] == doctest::Approx(expect[i]));

  const GridPtr g2 = Grid::line(1.0, 2);
  const VectorField d2 = gradient(Field(g2, {1.0, 1.0}));
  CHECK(d2.axis(0)[0] == doctest::Approx(3.0));
  CHECK(std::abs(d2.axis(0)[1]) < 1e-14);
  CHECK(d2.axis(0)[2] == doctest::Approx(-3.0));

  const VectorField z = gradient(Field(Grid::rect(1.0, 2.0, 4, 5)));
  for (int a = 0; a < 2; ++a)
    for (double v : z.axis(a)) CHECK(v == 0.0);
}

TEST_CASE("divergence is the negative adjoint of the gradient") {
  std::mt19937_64 rng(1);
  for (const GridPtr& g : {Grid::line(1.0, 4), Grid::line(3.0, 50), Grid::rect(1.0, 2.0, 7, 5)}) {
    for (int k = 0; k < 20; ++k) {
      const Field f = random_field(g, rng);
      const VectorField z = random_vector_field(g, rng);
      const VectorField df = gradient(f);
      const double lhs = inner(divergence(z), f) + inner(z, df);
      CHECK(std::abs(lhs) <= 1e-12 * std::sqrt(inner(z, z) * inner(df, df)));
    }
  }
  VectorField c(Grid::line(1.0, 5));
  for (double& v : c.axis(0)) v = 2.5;
  const Field dc = divergence(c);
  for (std::size_t i = 0; i < dc.size(); ++i) CHECK(std::abs(dc[i]) < 1e-13);
}

TEST_CASE("Laplacian stencil and symmetry") {
  const GridPtr g = Grid::line(1.0, 3);
  const Field l = laplacian(Field(g, {0.0, 1.0, 0.0}));
  CHECK(l[0] == doctest::Approx(16.0));
  CHECK(l[1] == doctest::Approx(-32.0));
  CHECK(l[2] == doctest::Approx(16.0));

  std::mt19937_64 rng(2);
  for (const GridPtr& gg : {Grid::line(2.0, 17), Grid::rect(1.0, 1.0, 6, 9)}) {
    const Field f = random_field(gg, rng), h = random_field(gg, rng);
    const double a = inner(laplacian(f), h), b = inner(f, laplacian(h));
    CHECK(std::abs(a - b) <= 1e-12 * (std::abs(a) + 1.0));
    CHECK(inner(laplacian(f), f) == doctest::Approx(-inner(gradient(f), gradient(f))).epsilon(1e-12));
  }
}

TEST_CASE("smallest Dirichlet eigenvalue matches the sine mode") {
  for (std::size_t n : {8u, 31u, 64u}) {
    const double extent = 2.0;
    const GridPtr g = Grid::line(extent, n);
    const double h = g->h(0);
    const Eigen::MatrixXd a = -dense(g, [](const Field& f) { return laplacian(f); });
    const double mu = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().minCoeff();
    const double analytic = 2.0 / (h * h) * (1.0 - std::cos(M_PI * h / extent));
    CHECK(std::abs(mu - analytic) <= 1e-10 * analytic);
  }
}

TEST_CASE("resolvent smoother by hand") {
  const GridPtr g = Grid::line(1.0, 3);
  const Field s = resolvent_smoother(Field(g, {0.0, 1.0, 0.0}), 1.0 / 16.0, 1);
  CHECK(s[0] == doctest::Approx(1.0 / 7.0).epsilon(1e-10));
  CHECK(s[1] == doctest::Approx(3.0 / 7.0).epsilon(1e-10));
  CHECK(s[2] == doctest::Approx(1.0 / 7.0).epsilon(1e-10));
  const Field z = resolvent_smoother(Field(g), 0.3, 2);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("smoother matches a dense inverse and is sub-Markovian") {
  std::mt19937_64 rng(3);
  const GridPtr g = Grid::rect(1.0, 1.5, 6, 5);
  const double delta = 0.01;
  const Eigen::MatrixXd m =
      Eigen::MatrixXd::Identity(g->size(), g->size()) - delta * dense(g, [](const Field& f) { return laplacian(f); });
  const Eigen::MatrixXd inv = m.inverse();
  CHECK(inv.minCoeff() >= -1e-14);
  CHECK((inv.rowwise().sum().array() <= 1.0 + 1e-12).all());
  const Field f = random_field(g, rng, 0.0, 2.0);
  const Field s = resolvent_smoother(f, delta, 2);
  Eigen::VectorXd fv(g->size());
  for (std::size_t i = 0; i < g->size(); ++i) fv[i] = f[i];
  const Eigen::VectorXd ref = inv * (inv * fv);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(std::abs(s[i] - ref[i]) <= 1e-10);
}

TEST_CASE("smoother contraction, positivity and maximum principle") {
  std::mt19937_64 rng(4);
  for (const GridPtr& g : {Grid::line(1.0, 40), Grid::rect(1.0, 1.0, 12, 10)}) {
    for (int m : {1, 2, 3}) {
      const Field f = random_field(g, rng, 0.0, 1.0);
      const Field s = resolvent_smoother(f, 0.005, m);
      CHECK(norms(s).l2 <= norms(f).l2 * (1.0 + 1e-12));
      double fmax = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) fmax = std::max(fmax, f[i]);
      for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s[i] >= -1e-12);
        CHECK(s[i] <= fmax + 1e-12);
      }
      const Field sf = resolvent_smoother(random_field(g, rng), 0.005, m);
      CHECK(sf.all_finite());
    }
  }
}

TEST_CASE("Jensen inequality for the smoother") {
  std::mt19937_64 rng(5);
  const Potential k = cosh_potential(1);
  const GridPtr g = Grid::line(1.0, 30);
  for (int trial = 0; trial < 5; ++trial) {
    const Field f = random_field(g, rng, 0.0, 3.0);
    Field kf(g);
    for (std::size_t i = 0; i < f.size(); ++i) kf[i] = k.k(vec({f[i]}));
    const Field s = resolvent_smoother(f, 0.01, 2);
    const Field ks = resolvent_smoother(kf, 0.01, 2);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(k.k(vec({s[i]})) <= ks[i] + 1e-10);
  }
}

TEST_CASE("smoother converges monotonically as delta shrinks") {
  std::mt19937_64 rng(6);
  const GridPtr g = Grid::line(1.0, 64);
  const Field f = random_field(g, rng);
  double prev = INFINITY;
  for (double delta = 0.1; delta > 1e-7; delta *= 0.5) {
    const double err = norms(resolvent_smoother(f, delta, 1) - f).l2;
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-2 * norms(f).l2);
}

TEST_CASE("norms") {
  const GridPtr g = Grid::line(1.0, 3);
  const Field f(g, {0.0, 1.0, 0.0});
  const Norms n = norms(f);
  CHECK(n.l2 == doctest::Approx(0.5));
  CHECK(n.linf == doctest::Approx(1.0));
  CHECK(n.h10 == doctest::Approx(std::sqrt(32.0 * 0.25)));
  CHECK(n.w11 == doctest::Approx(0.25 + 8.0 * 0.25));
  const Norms s = norms(-3.0 * f);
  CHECK(s.l2 == doctest::Approx(3.0 * n.l2));
  CHECK(s.h10 == doctest::Approx(3.0 * n.h10));
  CHECK(s.linf == doctest::Approx(3.0 * n.linf));
  const Norms z = norms(Field(g));
  CHECK(z.l2 + z.w11 + z.h10 + z.linf == 0.0);
}

TEST_CASE("face quadrature of a constant-gradient integrand") {
  const GridPtr g = Grid::line(1.0, 3);
  const VectorField d = gradient(Field(g, {0.0, 1.0, 0.0}));
  const double q = face_quadrature(d, [](const Vec& v) { return v.squaredNorm(); });
  CHECK(q == doctest::Approx(inner(d, d)));
}

TEST_CASE("grid validation and conjugate gradient failure") {
  CHECK_THROWS_AS(Grid::line(1.0, 1), ConfigError);
  CHECK_THROWS_AS(Grid::line(-1.0, 4), ConfigError);
  const GridPtr g = Grid::line(1.0, 8);
  Field rhs(g);
  rhs[3] = 1.0;
  Field diag(g);
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = 1.0;
  // Indefinite operator: CG cannot reach the acceptance tolerance in 2 iterations.
  auto apply = [](const Field& x, Field& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (i % 2 ? -1.0 : 1.0) * x[i] * (1.0 + i);
  };
  CgOptions opts;
  opts.max_iter = 2;
  CHECK_THROWS_AS(conjugate_gradient(apply, rhs + Field(g, std::vector<double>(8, 1.0)), diag, opts),
                  LinearSolveFailure);
}

TEST_CASE("grid json round trip") {
  const GridPtr g = Grid::rect(1.0, 2.0, 7, 5);
  CHECK(*Grid::from_json(g->to_json()) == *g);
  CHECK(g->face_count(0) == 8 * 5);
  CHECK(g->face_count(1) == 7 * 6);
}
