#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "mspde/errors.hpp"
#include "mspde/ensemble.hpp"
#include "mspde/solver.hpp"

using namespace mspde;

namespace {

Field random_field(const GridPtr& g, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Field f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(rng);
  return f;
}

std::shared_ptr<const NoisePath> noise_for(const WienerConfig& w, const SolverConfig& cfg, std::uint64_t path = 0) {
  return std::make_shared<const NoisePath>(sample_increments(w, cfg.steps(), cfg.tau, path));
}

DiffusionOperator silent(const WienerConfig& w) {
  return DiffusionOperator::additive(w, std::vector<double>(w.modes, 0.0));
}

// Scalar Yosida map of k(x) = |x|^3/3 in 1D, from the quadratic s + lambda s^2 = |g|.
double yosida_p3(double lambda, double g) {
  const double s = (-1.0 + std::sqrt(1.0 + 4.0 * lambda * std::abs(g))) / (2.0 * lambda);
  return (g - std::copysign(s, g)) / lambda;
}

}  // namespace

TEST_CASE("zero data is a fixed point") {
  const GridPtr g = Grid::rect(1.0, 1.0, 6, 6);
  const WienerConfig w = make_wiener(g, 4, 1);
  SolverConfig cfg;
  cfg.lambda = 0.1;
  cfg.tau = 1e-4;
  cfg.T = 1e-3;
  const Field zero(g);
  const std::vector<double> dw(4, 0.0);
  const Potential p = cosh_potential(2);
  CHECK(norms(step_regularized(p, silent(w), zero, 0.0, dw, cfg)).linf == 0.0);
  const SolutionPath path = solve_additive(p, silent(w), zero, cfg, noise_for(w, cfg));
  REQUIRE(path.fields.size() == cfg.steps() + 1);
  for (const Field& f : path.fields) CHECK(norms(f).linf == 0.0);
}

TEST_CASE("single step against a dense 3x3 solve") {
  const GridPtr g = Grid::line(1.0, 3);
  const double h = 0.25, lam = 0.2, tau = 1e-3;
  const WienerConfig w = make_wiener(g, 3, 1);
  const std::vector<double> q{0.5, 0.3, 0.1};
  const DiffusionOperator b = DiffusionOperator::additive(w, q);
  SolverConfig cfg;
  cfg.lambda = lam;
  cfg.tau = tau;
  cfg.T = tau;
  const std::vector<double> u0{0.3, -0.7, 0.4};
  const std::vector<double> dw{0.01, -0.02, 0.005};

  std::vector<double> ext{0.0, u0[0], u0[1], u0[2], 0.0};
  std::vector<double> flux(4);
  for (int f = 0; f < 4; ++f) flux[f] = yosida_p3(lam, (ext[f + 1] - ext[f]) / h);
  Eigen::Vector3d rhs;
  for (int i = 0; i < 3; ++i) {
    double noise = 0.0;
    for (int j = 0; j < 3; ++j) noise += q[j] * w.basis[j][i] * dw[j];
    rhs[i] = u0[i] + tau * (flux[i + 1] - flux[i]) / h + noise;
  }
  Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
  const double c = tau * lam / (h * h);
  for (int i = 0; i < 3; ++i) {
    a(i, i) += 2.0 * c;
    if (i > 0) a(i, i - 1) -= c;
    if (i < 2) a(i, i + 1) -= c;
  }
  const Eigen::Vector3d expect = a.lu().solve(rhs);
  const Field got = step_regularized(p_power_potential(1, 3.0), b, Field(g, u0), 0.0, dw, cfg);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(got[i] - expect[i]) < 1e-12);
}

TEST_CASE("noise-free quadratic steps do not increase the L2 norm") {
  std::mt19937_64 rng(2);
  const GridPtr g = Grid::rect(1.0, 1.0, 12, 10);
  const WienerConfig w = make_wiener(g, 4, 1);
  SolverConfig cfg;
  cfg.lambda = 0.05;
  cfg.tau = 0.9 * stability_bound(*g, cfg);
  Field u = random_field(g, rng);
  const std::vector<double> dw(4, 0.0);
  for (int n = 0; n < 50; ++n) {
    const Field next = step_regularized(p_power_potential(2, 2.0), silent(w), u, 0.0, dw, cfg);
    CHECK(norms(next).l2 <= norms(u).l2 * (1.0 + 1e-14));
    u = next;
  }
}

TEST_CASE("stability check refuses oversized steps") {
  const GridPtr g = Grid::line(1.0, 31);
  SolverConfig cfg;
  cfg.lambda = 0.1;
  const double bound = stability_bound(*g, cfg);
  CHECK(bound == doctest::Approx(0.25 * 0.1 * g->h(0) * g->h(0)));
  cfg.tau = 1.01 * bound;
  cfg.T = 100 * cfg.tau;
  CHECK_THROWS_AS(check_stability(*g, cfg), StabilityViolation);
  cfg.scheme = Scheme::prox_implicit_reference;
  CHECK_NOTHROW(check_stability(*g, cfg));
  cfg.T = 1.5 * cfg.tau;
  CHECK_THROWS_AS((void)cfg.steps(), ConfigError);
}

TEST_CASE("quadratic potential without noise follows the first-mode decay") {
  const GridPtr g = Grid::line(1.0, 31);
  const WienerConfig w = make_wiener(g, 1, 1);
  const double lam = 0.1;
  const double mu = w.eigenvalues[0];
  const double rate = mu * (1.0 / (1.0 + lam) + lam);
  double prev_err = 0.0;
  for (int level = 0; level < 3; ++level) {
    SolverConfig cfg;
    cfg.lambda = lam;
    cfg.T = 0.05;
    cfg.tau = 2e-5 / (1 << level);
    const SolutionPath path = solve_additive(p_power_potential(1, 2.0), silent(w), w.basis[0], cfg, noise_for(w, cfg));
    double err = 0.0;
    for (std::size_t n = 0; n < path.fields.size(); ++n) {
      const Field exact = std::exp(-rate * path.times[n]) * w.basis[0];
      err = std::max(err, norms(path.fields[n] - exact).l2);
    }
    CHECK(err < 5e-3);
    if (level > 0) CHECK(err / prev_err == doctest::Approx(0.5).epsilon(0.05));
    prev_err = err;
  }
  CHECK(std::abs(mu - M_PI * M_PI) < 0.02 * M_PI * M_PI);
}

TEST_CASE("explicit and reference schemes agree to first order") {
  std::mt19937_64 rng(3);
  const GridPtr g = Grid::line(1.0, 15);
  const WienerConfig w = make_wiener(g, 8, 9);
  const DiffusionOperator b = DiffusionOperator::additive(w, DiffusionOperator::decay_weights(8, 1.1, 0.3));
  const Field u0 = random_field(g, rng, 0.5);
  double prev = 0.0;
  for (int level = 0; level < 3; ++level) {
    SolverConfig cfg;
    cfg.lambda = 0.2;
    cfg.T = 0.01;
    cfg.tau = 1e-4 / (1 << level);
    auto noise = noise_for(make_wiener(g, 8, 9), cfg);
    const Potential p = p_power_potential(1, 2.0);
    const SolutionPath a = solve_additive(p, b, u0, cfg, noise);
    cfg.scheme = Scheme::prox_implicit_reference;
    const SolutionPath r = solve_additive(p, b, u0, cfg, noise);
    const double d = norms(a.fields.back() - r.fields.back()).l2;
    if (level > 0) CHECK(d / prev == doctest::Approx(0.5).epsilon(0.1));
    prev = d;
  }
}

TEST_CASE("reference step solves its nonlinear equation") {
  std::mt19937_64 rng(4);
  const GridPtr g = Grid::rect(1.0, 1.0, 8, 7);
  const WienerConfig w = make_wiener(g, 4, 2);
  SolverConfig cfg;
  cfg.lambda = 0.05;
  cfg.tau = 1e-3;
  cfg.T = 1e-3;
  cfg.scheme = Scheme::prox_implicit_reference;
  const Potential p = p_power_potential(2, 3.0);
  const Field u = random_field(g, rng);
  const std::vector<double> dw(4, 0.0);
  const Field next = step_reference(p, silent(w), u, 0.0, dw, cfg);
  VectorField phi = yosida_flux_serial(p, cfg.lambda, gradient(next));
  phi.axpy(cfg.lambda, gradient(next));
  const Field residual = next - cfg.tau * divergence(phi) - u;
  CHECK(norms(residual).l2 < 1e-9 * norms(u).l2);
}

TEST_CASE("parallel and serial Yosida flux agree exactly") {
  std::mt19937_64 rng(5);
  const GridPtr g = Grid::rect(1.0, 1.0, 80, 70);
  const VectorField d = gradient(random_field(g, rng, 0.2));
  for (const Potential& p : {cosh_potential(2), p_power_potential(2, 3.0)}) {
    const VectorField a = yosida_flux(p, 0.1, d);
    const VectorField b = yosida_flux_serial(p, 0.1, d);
    for (int ax = 0; ax < 2; ++ax)
      for (std::size_t i = 0; i < a.axis(ax).size(); ++i) CHECK(a.axis(ax)[i] == b.axis(ax)[i]);
  }
}

TEST_CASE("same seed gives bit-identical paths") {
  std::mt19937_64 rng(6);
  const GridPtr g = Grid::line(1.0, 20);
  const WienerConfig w = make_wiener(g, 8, 12);
  const DiffusionOperator b = DiffusionOperator::additive(w, DiffusionOperator::decay_weights(8, 1.1));
  SolverConfig cfg;
  cfg.tau = 1e-5;
  cfg.T = 1e-3;
  cfg.epsilon = 1e-3;
  const Field u0 = random_field(g, rng);
  const SolutionPath a = solve_additive(cosh_potential(1), b, u0, cfg, noise_for(w, cfg, 3));
  const SolutionPath c = solve_additive(cosh_potential(1), b, u0, cfg, noise_for(w, cfg, 3));
  for (std::size_t n = 0; n < a.fields.size(); ++n)
    for (std::size_t i = 0; i < u0.size(); ++i) CHECK(a.fields[n][i] == c.fields[n][i]);
}

TEST_CASE("record stride thins the stored trajectory") {
  const GridPtr g = Grid::line(1.0, 20);
  const WienerConfig w = make_wiener(g, 4, 1);
  SolverConfig cfg;
  cfg.tau = 1e-5;
  cfg.T = 1e-3;
  cfg.record_stride = 10;
  const SolutionPath path = solve_additive(cosh_potential(1), silent(w), w.basis[0], cfg, noise_for(w, cfg));
  CHECK(path.fields.size() == 11);
  CHECK(path.times.back() == doctest::Approx(1e-3));
  CHECK(path.recorded_dt() == doctest::Approx(1e-4));
}

TEST_CASE("Picard: state-independent diffusion needs one sweep") {
  const GridPtr g = Grid::line(1.0, 16);
  const WienerConfig w = make_wiener(g, 8, 4);
  Sigma zero;
  zero.kind = Sigma::Kind::zero;
  const DiffusionOperator b = DiffusionOperator::multiplicative(w, DiffusionOperator::decay_weights(8, 1.1), zero);
  SolverConfig cfg;
  cfg.tau = 1e-4;
  cfg.T = 0.01;
  cfg.lambda = 0.5;
  auto noise = noise_for(w, cfg);
  const PicardResult r = solve_multiplicative(cosh_potential(1), b, w.basis[0], cfg, noise);
  CHECK(r.picard_iters == 1);
  const SolutionPath det = solve_additive(cosh_potential(1), silent(w), w.basis[0], cfg, noise);
  CHECK(norms(r.path.fields.back() - det.fields.back()).linf < 1e-14);
}

TEST_CASE("Picard: geometric contraction and a unique fixed point") {
  std::mt19937_64 rng(7);
  const GridPtr g = Grid::line(1.0, 16);
  const WienerConfig w = make_wiener(g, 8, 4);
  Sigma s;
  s.kind = Sigma::Kind::tanh;
  s.lipschitz = 0.5;
  const DiffusionOperator b = DiffusionOperator::multiplicative(w, DiffusionOperator::decay_weights(8, 1.1, 0.5), s);
  SolverConfig cfg;
  cfg.tau = 1e-4;
  cfg.T = 0.02;
  cfg.lambda = 0.5;
  auto noise = noise_for(w, cfg);
  const Field u0 = random_field(g, rng);
  const PicardResult r = solve_multiplicative(p_power_potential(1, 3.0), b, u0, cfg, noise);
  CHECK(r.alpha == doctest::Approx(default_alpha(b)));
  CHECK(r.picard_iters >= 2);
  REQUIRE(!r.contraction_ratios.empty());
  for (double q : r.contraction_ratios) CHECK(q < 1.0);
  CHECK(r.distances.back() <= cfg.picard_tol);

  std::vector<Field> start(cfg.steps() + 1, random_field(g, rng, 3.0));
  const PicardResult other = solve_multiplicative(p_power_potential(1, 3.0), b, u0, cfg, noise, &start);
  CHECK(e_alpha_distance(r.path.fields, other.path.fields, cfg.tau, r.alpha) <= 10.0 * cfg.picard_tol);
}

TEST_CASE("Picard: exhausted budget raises divergence") {
  const GridPtr g = Grid::line(1.0, 16);
  const WienerConfig w = make_wiener(g, 8, 4);
  Sigma s;
  s.lipschitz = 2.0;
  const DiffusionOperator b = DiffusionOperator::multiplicative(w, DiffusionOperator::decay_weights(8, 1.1, 2.0), s);
  SolverConfig cfg;
  cfg.tau = 1e-4;
  cfg.T = 0.01;
  cfg.lambda = 0.5;
  cfg.picard_max = 2;
  CHECK_THROWS_AS(solve_multiplicative(cosh_potential(1), b, w.basis[0], cfg, noise_for(w, cfg)), PicardDivergence);
}

TEST_CASE("E_alpha distance by hand") {
  const GridPtr g = Grid::line(1.0, 3);
  const Field zero(g), one(g, {1.0, 1.0, 1.0});
  const std::vector<Field> a{zero, one, one}, b{zero, zero, zero};
  const double vol = 0.25 * 3.0;
  const double expect = std::sqrt(0.1 * vol * (std::exp(-2.0 * 0.1) + std::exp(-4.0 * 0.1)));
  CHECK(e_alpha_distance(a, b, 0.1, 1.0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("kappa diagnostics") {
  const GridPtr g = Grid::line(1.0, 24);
  const WienerConfig w = make_wiener(g, 8, 4);
  SolverConfig cfg;
  cfg.tau = 1e-5;
  cfg.T = 2e-3;
  cfg.lambda = 0.1;
  const KappaDiagnostics zero = kappa_diagnostics(solve_additive(cosh_potential(1), silent(w), Field(g), cfg, noise_for(w, cfg)), cosh_potential(1));
  CHECK(zero.sup_l2_sq + zero.int_w11 + zero.int_abs_gamma + zero.int_k_plus_kstar == 0.0);

  const DiffusionOperator b = DiffusionOperator::additive(w, DiffusionOperator::decay_weights(8, 1.1, 0.2));
  for (const Potential& p : {p_power_potential(1, 2.0), cosh_potential(1)}) {
    const KappaDiagnostics full = kappa_diagnostics(solve_additive(p, b, w.basis[0], cfg, noise_for(w, cfg)), p);
    SolverConfig half = cfg;
    half.T = cfg.T / 2;
    const KappaDiagnostics part = kappa_diagnostics(solve_additive(p, b, w.basis[0], half, noise_for(w, half)), p);
    CHECK(part.sup_l2_sq <= full.sup_l2_sq);
    CHECK(part.int_w11 <= full.int_w11);
    CHECK(part.int_abs_gamma <= full.int_abs_gamma);
    CHECK(part.int_k_plus_kstar <= full.int_k_plus_kstar);
    CHECK(full.int_k_resolvent_plus_kstar ==
          doctest::Approx(full.int_pluto_pairing).epsilon(1e-8));
    CHECK(std::isfinite(full.int_k_plus_kstar));
  }
}

TEST_CASE("parallel ensemble execution matches the serial reference") {
  const GridPtr g = Grid::line(1.0, 16);
  const WienerConfig w = make_wiener(g, 8, 3);
  const DiffusionOperator b = DiffusionOperator::additive(w, DiffusionOperator::decay_weights(8, 1.1));
  SolverConfig cfg;
  cfg.tau = 1e-4;
  cfg.T = 5e-3;
  cfg.lambda = 0.5;
  auto fn = [&](std::size_t k) {
    return solve_additive(cosh_potential(1), b, w.basis[0], cfg, noise_for(w, cfg, k)).fields.back();
  };
  const auto serial = run_paths_serial(6, fn);
  const auto parallel = run_paths(6, fn, 3);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t i = 0; i < g->size(); ++i) CHECK(serial[k][i] == parallel[k][i]);
  CHECK_THROWS_AS(run_paths(4, [](std::size_t k) -> int { if (k == 2) throw NonConvergence("boom", 1.0); return 0; }, 2),
                  NonConvergence);
}
