#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "homlab/metric.hpp"

using namespace homlab;

namespace {

constexpr double kPi = std::numbers::pi;

// Adaptive Simpson quadrature of 1/(2 + sin(2 pi s)) on [0, t].
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb, double tol,
               int depth) {
  const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm), right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
  return simpson(f, a, m, fa, flm, fm, tol / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, tol / 2, depth - 1);
}

// Unit pieces so that the periodic integrand cannot fool the error estimate.
double quad(const std::function<double(double)>& f, double a, double b) {
  double s = 0.0;
  for (double x = a; x < b; x += 1.0) {
    const double y = std::min(x + 1.0, b);
    s += simpson(f, x, y, f(x), f(0.5 * (x + y)), f(y), 1e-13, 50);
  }
  return s;
}

CoefficientField random_field(std::mt19937_64& rng, int dim, bool viscous) {
  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_real_distribution<double> U(0, 1);
  const DiffusionKind diff = viscous ? DiffusionKind::Isotropic : DiffusionKind::None;
  const double strength = viscous ? 0.1 + 0.2 * U(rng) : 0.0;
  switch (pick(rng)) {
    case 0: return sample_poisson_bump_field(rng(), 0.5 + 1.5 * U(rng), 1.0 + U(rng), 1.0 + U(rng), dim, diff, strength);
    case 1: {
      FieldDescriptor d;
      d.kind = FieldKind::CheckerboardSmoothed;
      d.dim = dim;
      d.seed = rng();
      d.base = 0.8 + U(rng);
      d.amplitude = 1.5 * U(rng);
      d.diffusion = diff;
      d.diffusion_strength = strength;
      return CoefficientField(d);
    }
    default:
      return make_periodic_field(2.0, {TrigTerm{0.8 * U(rng), {1, dim > 1 ? 1 : 0, 0}, U(rng)}}, 1.0 + U(rng), dim,
                                 diff, strength);
  }
}

bool away_from_box(const Grid& g, std::size_t i, int margin) {
  auto m = g.multi(i);
  for (int a = 0; a < g.dim(); ++a)
    if (m[a] < margin || m[a] > g.extents()[a] - 1 - margin) return false;
  return true;
}

}  // namespace

TEST_CASE("constant field planar solution is linear") {
  auto f = make_constant_field(2.0, 2);
  const double h = 1.0 / 16;
  for (Vec e : {Vec{1, 0, 0}, Vec{0.6, 0.8, 0}}) {
    auto g = planar_grid(2, h, e, 0.0, 3.0, 6.0);
    auto sol = solve_planar_metric(f, 1.0, e, 0.0, g);
    CHECK(sol.residual_norm <= 1e-6);
    // Axis-aligned slabs have no staircase boundary, so the supersolution
    // start descends everywhere.
    if (e[1] == 0.0) CHECK(sol.monotone_descent);
    double worst = 0;
    for (std::size_t i = 0; i < g->size(); ++i) worst = std::max(worst, std::abs(sol.m[i] - 0.5 * std::max(0.0, dot(g->coords(i), e, 2))));
    CHECK(worst <= 2 * h);
    auto c = calibrate_constants(sol);
    CHECK(c.l_est == doctest::Approx(0.5).epsilon(0.03));
    if (e[1] == 0.0)
      CHECK(c.L_est == doctest::Approx(0.5).epsilon(0.03));
    else  // the staircase side walls carry a thin state-constraint layer
      CHECK(c.L_est <= 0.5 * 1.3);
  }
}

TEST_CASE("planar symmetry for constant fields") {
  auto f = make_constant_field(1.3, 2);
  const Vec e = normalized({1, 2, 0}, 2);
  const double h = 1.0 / 16;
  auto g = planar_grid(2, h, e, 0.5, 4.0, 8.0);
  auto sol = solve_planar_metric(f, 1.0, e, 0.5, g);
  // Compare values at points sharing x.e inside the slab.
  const Vec perp{-e[1], e[0], 0};
  double worst = 0;
  for (double t : {0.5, 1.5, 3.0})
    for (double q : {-3.0, -1.0, 0.0, 2.0, 3.5}) {
      Vec a{t * e[0], t * e[1], 0}, b{t * e[0] + q * perp[0], t * e[1] + q * perp[1], 0};
      worst = std::max(worst, std::abs(value_at(sol, a) - value_at(sol, b)));
    }
  CHECK(worst <= 2 * h);
}

TEST_CASE("one-dimensional harmonic mean oracle") {
  auto f = make_periodic_field(2.0, {TrigTerm{1.0, {1, 0, 0}, 0.0}}, 1.0, 1);
  const double h = 1.0 / 64;
  auto g = planar_grid(1, h, {1, 0, 0}, 0.0, 12.0, 0.0);
  auto sol = solve_planar_metric(f, 1.0, {1, 0, 0}, 0.0, g);
  const double oracle = quad([](double s) { return 1.0 / (2.0 + std::sin(2 * kPi * s)); }, 0.0, 10.0);
  CHECK(oracle == doctest::Approx(10 / std::sqrt(3.0)).epsilon(1e-9));
  CHECK(value_at(sol, {10, 0, 0}) == doctest::Approx(oracle).epsilon(0.01));
}

TEST_CASE("growth sandwich on random configurations") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0, 1);
  for (int k = 0; k < 6; ++k) {
    const bool viscous = k % 3 == 2;
    auto f = random_field(rng, 2, viscous);
    const double mu = 0.5 + 1.5 * U(rng);
    const Vec e = normalized({std::cos(2 * kPi * U(rng)), std::sin(2 * kPi * U(rng)), 0}, 2);
    const double h = viscous ? 0.25 : 0.125;
    auto g = planar_grid(2, h, e, 0.0, viscous ? 4.0 : 6.0, 0.0);
    auto sol = solve_planar_metric(f, mu, e, 0.0, g);
    const auto c = calibrate_constants(sol);
    const double lo = std::pow(mu / f.bounds().C0, 1.0 / f.p()), hi = std::pow(mu / f.bounds().c0, 1.0 / f.p());
    int bad = 0;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (g->kind(i) == NodeKind::Exterior) continue;
      const double dist = std::max(0.0, dot(g->coords(i), e, 2));
      if (sol.m[i] < lo * dist - 3 * h * c.L_est || sol.m[i] > hi * dist + 3 * h * c.L_est) ++bad;
    }
    CHECK(bad == 0);
    CHECK(c.sandwich_violation <= 3 * h * c.L_est);
  }
}

TEST_CASE("ordering in mu and the ratio bound") {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 3; ++k) {
    auto f = random_field(rng, 2, k == 2);
    auto g = planar_grid(2, 0.25, {1, 0, 0}, 0.0, 4.0, 0.0);
    SolverConfig cfg;
    auto s1 = solve_planar_metric(f, 0.8, {1, 0, 0}, 0.0, g, cfg);
    auto s2 = solve_planar_metric(f, 1.6, {1, 0, 0}, 0.0, g, cfg);
    for (std::size_t i = 0; i < g->size(); ++i) {
      CHECK(s1.m[i] <= s2.m[i] + cfg.tol);
      CHECK(s2.m[i] <= 2.0 * s1.m[i] + cfg.tol);
    }
  }
}

TEST_CASE("sublevel sets") {
  auto f = sample_poisson_bump_field(5, 1.0, 1.0, 1.0, 2);
  auto g = planar_grid(2, 0.125, {1, 0, 0}, 0.0, 6.0, 0.0);
  auto sol = solve_planar_metric(f, 1.0, {1, 0, 0}, 0.0, g);
  auto s0 = sublevel_set(sol, 0.0);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(bool(s0[i]) == (sol.m.grid->kind(i) == NodeKind::Dirichlet));
  auto s1 = sublevel_set(sol, 1.0), s2 = sublevel_set(sol, 2.5);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK((!s1[i] || s2[i]));
}

TEST_CASE("calibrated constants scale with mu for first-order problems") {
  auto f = sample_poisson_bump_field(9, 1.5, 1.0, 1.0, 2);
  auto g = planar_grid(2, 0.125, {1, 0, 0}, 0.0, 6.0, 0.0);
  auto a = calibrate_constants(solve_planar_metric(f, 1.0, {1, 0, 0}, 0.0, g));
  auto b = calibrate_constants(solve_planar_metric(f, 2.0, {1, 0, 0}, 0.0, g));
  CHECK(b.l_est == doctest::Approx(2 * a.l_est).epsilon(0.02));
  CHECK(b.L_est == doctest::Approx(2 * a.L_est).epsilon(0.02));
}

TEST_CASE("larger targets give smaller solutions") {
  auto f = sample_poisson_bump_field(12, 1.0, 1.0, 1.0, 2, DiffusionKind::Isotropic, 0.2);
  auto g = std::make_shared<const Grid>(Grid::box(2, 0.25, {33, 33, 1}, {-4, -4, 0}));
  auto small = solve_metric(f, 1.0, TargetSet::ball_union({Vec{0, 0, 0}}, 1.0), g);
  auto big = solve_metric(f, 1.0, TargetSet::ball_union({Vec{0, 0, 0}, Vec{1.5, 0.5, 0}}, 1.25), g);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(big.m[i] <= small.m[i] + 1e-6);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(small.m[i] >= 0.0);
}

TEST_CASE("target continuity for shifted ball unions") {
  auto f = sample_poisson_bump_field(13, 1.0, 1.0, 1.0, 2);
  auto g = std::make_shared<const Grid>(Grid::box(2, 0.125, {65, 65, 1}, {-4, -4, 0}));
  auto s = solve_metric(f, 1.0, TargetSet::ball_union({Vec{-1, 0, 0}, Vec{1, 0.5, 0}}, 1.0), g);
  const double shift = 0.3;
  auto t = solve_metric(f, 1.0, TargetSet::ball_union({Vec{-1 + shift, 0, 0}, Vec{1 + shift, 0.5, 0}}, 1.0), g);
  const double L = std::max(calibrate_constants(s).L_est, calibrate_constants(t).L_est);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(std::abs(s.m[i] - t.m[i]) <= L * (shift + 2 * g->h()));
}

TEST_CASE("Lipschitz estimate does not blow up under refinement") {
  auto f = make_periodic_field(2.0, {TrigTerm{0.7, {1, 1, 0}, 0.3}}, 2.0, 2);
  std::vector<double> lips;
  for (double h : {0.25, 0.125, 0.0625}) {
    auto g = planar_grid(2, h, {0.6, 0.8, 0}, 0.0, 3.0, 0.0);
    lips.push_back(solve_planar_metric(f, 1.0, {0.6, 0.8, 0}, 0.0, g).lip_est);
  }
  const double cap = 1.0 / f.a_min();
  for (double l : lips) CHECK(l <= 1.5 * cap);
  CHECK(lips[2] <= 1.2 * lips[0]);
}

TEST_CASE("converged solutions are genuine fixed points") {
  auto f = sample_poisson_bump_field(4, 1.0, 1.0, 1.0, 2, DiffusionKind::Isotropic, 0.2);
  auto g = planar_grid(2, 0.25, {1, 0, 0}, 0.0, 3.0, 0.0);
  SolverConfig cfg;
  auto sol = solve_planar_metric(f, 1.0, {1, 0, 0}, 0.0, g, cfg);
  CHECK(sol.residual_norm <= cfg.tol);
  SchemeOperator op(f, sol.m.grid);
  const std::size_t node = sol.m.grid->nearest({1.5, 0.0, 0});
  CHECK(away_from_box(*sol.m.grid, node, 2));
  GridFunction bumped = sol.m;
  bumped[node] += 0.05;
  auto r = scheme_residual(bumped, op, 1.0);
  CHECK(r[node] > 10 * cfg.tol);
}

TEST_CASE("pseudo-time and sweeping reach the same fixed point") {
  auto f = sample_poisson_bump_field(21, 1.0, 1.0, 1.0, 2, DiffusionKind::CurvatureProjection, 0.2);
  auto g = planar_grid(2, 0.25, {0.6, 0.8, 0}, 0.0, 3.0, 0.0);
  SolverConfig a, b;
  a.method = SolverMethod::PseudoTime;
  a.tol = b.tol = 1e-8;
  b.method = SolverMethod::Sweeping;
  auto sa = solve_planar_metric(f, 1.0, {0.6, 0.8, 0}, 0.0, g, a);
  auto sb = solve_planar_metric(f, 1.0, {0.6, 0.8, 0}, 0.0, g, b);
  CHECK_FALSE(sa.swept);
  CHECK(sb.swept);
  double worst = 0;
  for (std::size_t i = 0; i < g->size(); ++i) worst = std::max(worst, std::abs(sa.m[i] - sb.m[i]));
  CHECK(worst < 1e-5);
}

TEST_CASE("argument checks and non-convergence") {
  auto f = make_periodic_field(2.0, {TrigTerm{1.0, {1, 1, 0}, 0.0}}, 1.0, 2);
  auto g = planar_grid(2, 0.25, {1, 0, 0}, 0.0, 3.0, 0.0);
  CHECK_THROWS_AS(solve_planar_metric(f, -1.0, {1, 0, 0}, 0.0, g), Error);
  CHECK_THROWS_AS(TargetSet::ball_union({Vec{}}, 0.5), Error);
  SolverConfig cfg;
  cfg.max_iters = 1;
  try {
    solve_planar_metric(f, 1.0, {1, 0, 0}, 0.0, g, cfg);
    FAIL("expected non-convergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonConvergence);
    CHECK(std::string(e.what()).find("residual history") != std::string::npos);
  }
}

TEST_CASE("metric solutions persist with a sidecar") {
  auto f = sample_poisson_bump_field(3, 1.0, 1.0, 1.0, 2);
  auto g = planar_grid(2, 0.25, {1, 0, 0}, 0.0, 3.0, 0.0);
  auto sol = solve_planar_metric(f, 1.2, {1, 0, 0}, 0.0, g);
  const auto stem = std::filesystem::temp_directory_path() / "homlab_metric_test";
  save_metric(sol, stem);
  auto back = load_metric(stem);
  CHECK(back.m.values == sol.m.values);
  CHECK(back.mu == sol.mu);
  CHECK(back.field == sol.field);
  CHECK(back.m.grid->count(NodeKind::Dirichlet) == sol.m.grid->count(NodeKind::Dirichlet));
  std::filesystem::remove(stem.string() + ".bin");
  std::filesystem::remove(stem.string() + ".json");
}
