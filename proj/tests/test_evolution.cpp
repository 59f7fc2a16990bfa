#include <doctest.h>

#include <cmath>
#include <random>

#include "homlab/evolution.hpp"

using namespace homlab;

namespace {

const double kSqrt3 = std::sqrt(3.0);

InitialCondition plane(const Vec& e, double offset = 0.0) {
  InitialCondition g;
  g.kind = InitialCondition::Kind::Plane;
  g.e = e;
  g.offset = offset;
  return g;
}

InitialCondition cone() {
  InitialCondition g;
  g.kind = InitialCondition::Kind::Cone;
  return g;
}

InitialCondition smooth_cone(double r, Vec c = {}) {
  InitialCondition g;
  g.kind = InitialCondition::Kind::SmoothCone;
  g.radius = r;
  g.center = c;
  return g;
}

double max_deviation(const EvolutionRun& run, const std::function<double(const Vec&, double)>& exact) {
  double worst = 0.0;
  for (std::size_t k = 0; k < run.snapshots.size(); ++k) {
    const auto& s = run.snapshots[k];
    for (std::size_t i = 0; i < s.size(); ++i)
      worst = std::max(worst, std::abs(s[i] - exact(s.grid->coords(i), run.times[k])));
  }
  return worst;
}

EffectiveHamiltonianEstimate sampled(int dim, const std::function<double(const Vec&)>& H, int ndir, double rmax) {
  EffectiveHamiltonianEstimate est;
  est.dim = dim;
  const int nd = dim == 1 ? 2 : ndir;
  for (int k = 0; k < nd; ++k) {
    const double ang = 2 * std::numbers::pi * k / nd;
    for (int j = 1; j <= 8; ++j) {
      const double r = rmax * j / 8;
      const Vec xi = dim == 1 ? Vec{k == 0 ? r : -r, 0, 0} : Vec{r * std::cos(ang), r * std::sin(ang), 0};
      est.points.push_back({xi, H(xi), 0.0, Route::Corrector, 1});
    }
  }
  return est;
}

}  // namespace

TEST_CASE("initial conditions") {
  CHECK(plane({0.6, 0.8, 0}, 1.0)({1, 1, 0}, 2) == doctest::Approx(2.4));
  CHECK(cone()({3, 4, 0}, 2) == doctest::Approx(5.0));
  CHECK(smooth_cone(1.0)({0, 0, 0}, 2) == doctest::Approx(1.0));
  CHECK(std::isinf(cone().second_derivative_bound(2)));
  InitialCondition w;
  w.kind = InitialCondition::Kind::Wave;
  w.amplitude = 0.5;
  w.wavelength = 2.0;
  CHECK(w.lipschitz(1) == doctest::Approx(0.5 * std::numbers::pi));
  for (const auto& g : {plane({0.6, 0.8, 0}, 1.0), cone(), smooth_cone(0.3, {1, 2, 0}), w}) {
    const auto back = initial_condition_from_json(to_json(g, 2));
    CHECK(back(Vec{0.3, -0.7, 0}, 2) == doctest::Approx(g(Vec{0.3, -0.7, 0}, 2)));
  }
  auto j = to_json(cone(), 2);
  j["radius"] = 1.0;
  CHECK_THROWS_AS(initial_condition_from_json(j), Error);
}

TEST_CASE("traveling plane and zero data are exact") {
  const auto f = make_constant_field(1.0, 2);
  EvolutionConfig cfg;
  cfg.h = 1.0 / 16;
  const Vec e{0.6, 0.8, 0};
  const auto run = solve_oscillatory(f, 0.5, plane(e), 0.5, 1.0, cfg);
  CHECK(max_deviation(run, [&](const Vec& x, double t) { return dot(x, e, 2) - t; }) < 1e-12);
  CHECK(run.times.back() == doctest::Approx(0.5));
  CHECK(run.snapshots.size() == 11);

  const auto zero = solve_oscillatory(sample_poisson_bump_field(3, 1.0, 1.0, 1.0, 2, DiffusionKind::Isotropic, 0.2),
                                      0.25, InitialCondition{}, 0.5, 1.0, cfg);
  CHECK(max_deviation(zero, [](const Vec&, double) { return 0.0; }) == 0.0);
  // Constants are stationary for every field, viscous included.
  const auto flat = solve_oscillatory(make_constant_field(2.0, 2, 1.0, DiffusionKind::CurvatureProjection, 0.3), 0.5,
                                      plane({0, 0, 0}, 1.25), 0.5, 1.0, cfg);
  CHECK(max_deviation(flat, [](const Vec&, double) { return 1.25; }) == 0.0);
}

TEST_CASE("cone under H = |p| follows the Hopf formula") {
  const auto f = make_constant_field(1.0, 1);
  for (double h : {1.0 / 64, 1.0 / 128}) {
    EvolutionConfig cfg;
    cfg.h = h;
    const auto run = solve_oscillatory(f, 1.0, cone(), 1.0, 2.0, cfg);
    CHECK(max_deviation(run, [](const Vec& x, double t) { return std::max(std::abs(x[0]) - t, 0.0); }) <= 2 * h);
  }
  EvolutionConfig cfg;
  cfg.h = 1.0 / 32;
  const auto run2 = solve_oscillatory(make_constant_field(1.0, 2), 1.0, cone(), 0.5, 1.0, cfg);
  CHECK(max_deviation(run2, [](const Vec& x, double t) { return std::max(norm(x, 2) - t, 0.0); }) <= 4 * cfg.h);

  HbarInterpolant H(1, [](const Vec& x) { return std::abs(x[0]); }, 2.0);
  cfg.h = 1.0 / 64;
  const auto hom = solve_homogenized(H, cone(), 1.0, 2.0, cfg);
  CHECK(max_deviation(hom, [](const Vec& x, double t) { return std::max(std::abs(x[0]) - t, 0.0); }) <= 2 * cfg.h);
}

TEST_CASE("interpolated constant-field H translates planes at speed a0") {
  const auto est = sampled(2, [](const Vec& x) { return 1.5 * norm(x, 2); }, 16, 2.0);
  const HbarInterpolant H(est);
  CHECK(H.coverage() == doctest::Approx(2.0));
  CHECK(H({0.3, 0.4, 0}) == doctest::Approx(0.75).epsilon(1e-2));
  CHECK(H(Vec{}) == 0.0);
  CHECK_THROWS_AS(H({3.0, 0, 0}), Error);
  EvolutionConfig cfg;
  cfg.h = 1.0 / 32;
  const auto run = solve_homogenized(H, plane({1, 0, 0}), 0.5, 1.0, cfg);
  CHECK(max_deviation(run, [](const Vec& x, double t) { return x[0] - 1.5 * t; }) < 1e-9);

  const HbarInterpolant one(sampled(1, [](const Vec& x) { return 1.5 * std::abs(x[0]); }, 2, 1.0));
  CHECK_THROWS_AS(solve_homogenized(one, plane({2, 0, 0}), 0.5, 1.0, cfg), Error);
  EffectiveHamiltonianEstimate half;
  half.dim = 1;
  half.points.push_back({{1, 0, 0}, 1.0, 0.0, Route::Metric, 1});
  CHECK_THROWS_AS(HbarInterpolant{half}, Error);
}

TEST_CASE("non coordinate-monotone H falls back to Lax-Friedrichs") {
  // Strongly anisotropic: cheap along the diagonals.
  auto Hf = [](const Vec& x) {
    const double r = norm(x, 2), c = std::cos(2 * std::atan2(x[1], x[0]));
    return r * (1.0 + 0.9 * c * c);
  };
  const HbarInterpolant H(sampled(2, Hf, 32, 1.5));
  CHECK_FALSE(H.coordinate_monotone());
  EvolutionConfig cfg;
  cfg.h = 1.0 / 32;
  const auto a = solve_homogenized(H, smooth_cone(0.5), 0.25, 0.5, cfg);
  InitialCondition g2 = smooth_cone(0.6);
  const auto b = solve_homogenized(H, g2, 0.25, 0.5, cfg);
  for (std::size_t k = 0; k < a.snapshots.size(); ++k)
    for (std::size_t i = 0; i < a.snapshots[k].size(); ++i) CHECK(a.snapshots[k][i] <= b.snapshots[k][i] + 1e-12);
}

TEST_CASE("1D oracle: front speeds and decreasing homogenization error") {
  const auto f = make_periodic_field(2.0, {TrigTerm{1.0, {1, 0, 0}, 0.0}}, 1.0, 1);
  const HbarInterpolant H(sampled(1, [](const Vec& x) { return kSqrt3 * std::abs(x[0]); }, 2, 2.0));
  EvolutionConfig cfg;
  cfg.h = 1.0 / 256;
  cfg.cells_per_period = 16;
  const auto g = plane({1, 0, 0});
  const auto hom = solve_homogenized(H, g, 1.0, 1.0, cfg);
  CHECK(std::abs(front_speed(hom, -1.0) - kSqrt3) / kSqrt3 < 0.03);
  std::vector<EvolutionRun> osc;
  for (double eps : {1.0 / 4, 1.0 / 8, 1.0 / 16}) osc.push_back(solve_oscillatory(f, eps, g, 1.0, 1.0, cfg));
  CHECK(std::abs(front_speed(osc.back(), -1.0) - kSqrt3) / kSqrt3 < 0.03);
  const auto table = homogenization_error(osc, hom);
  CHECK(table.strictly_decreasing);
  CHECK(table.alpha > 0.0);
  // Lipschitz bound (C0/c0) |Dg| is uniform in epsilon.
  for (const auto& r : osc) CHECK(r.lip <= 3.0 + 1e-9);
  // Time regularity follows from the measured bound.
  for (const auto& r : osc)
    for (std::size_t k = 1; k < r.snapshots.size(); ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < r.snapshots[k].size(); ++i)
        d = std::max(d, std::abs(r.snapshots[k][i] - r.snapshots[0][i]));
      CHECK(d <= r.lip * r.times[k] + 1e-12);
    }
}

TEST_CASE("constant field: homogenization is exact up to scheme error") {
  const auto f = make_constant_field(1.5, 1);
  const HbarInterpolant H(1, [](const Vec& x) { return 1.5 * std::abs(x[0]); }, 2.0);
  EvolutionConfig cfg;
  cfg.h = 1.0 / 64;
  const auto g = smooth_cone(0.5);
  const auto hom = solve_homogenized(H, g, 0.5, 1.0, cfg);
  for (double eps : {0.5, 0.25, 0.125}) CHECK(sup_error(solve_oscillatory(f, eps, g, 0.5, 1.0, cfg), hom) <= cfg.h);
}

TEST_CASE("comparison: ordered data stay ordered") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0, 1);
  EvolutionConfig cfg;
  cfg.h = 1.0 / 16;
  for (int k = 0; k < 4; ++k) {
    const auto f = sample_poisson_bump_field(rng(), 1.0, 1.0, 1.0, 2,
                                             k % 2 ? DiffusionKind::CurvatureProjection : DiffusionKind::Isotropic, 0.3);
    const Vec c{U(rng) - 0.5, U(rng) - 0.5, 0};
    const double r1 = 0.2 + 0.5 * U(rng);
    const auto a = solve_oscillatory(f, 0.5, smooth_cone(r1, c), 0.25, 1.0, cfg);
    const auto b = solve_oscillatory(f, 0.5, smooth_cone(r1 + 0.1, c), 0.25, 1.0, cfg);
    for (std::size_t s = 0; s < a.snapshots.size(); ++s)
      for (std::size_t i = 0; i < a.snapshots[s].size(); ++i) CHECK(a.snapshots[s][i] <= b.snapshots[s][i] + 1e-12);
  }
}

TEST_CASE("padding is invisible inside the observation ball") {
  EvolutionConfig cfg;
  cfg.h = 1.0 / 32;
  const auto f = make_periodic_field(2.0, {TrigTerm{0.8, {1, 1, 0}, 0.0}}, 1.0, 2);
  CHECK(padding_agreement(f, 0.25, smooth_cone(0.5), 0.5, 1.0, cfg) == 0.0);
  const auto v = make_periodic_field(2.0, {TrigTerm{0.8, {1, 1, 0}, 0.0}}, 1.0, 2, DiffusionKind::Isotropic, 0.2);
  cfg.h = 1.0 / 16;
  CHECK(padding_agreement(v, 0.25, smooth_cone(0.5), 0.5, 1.0, cfg) <= 1e-6);
}

TEST_CASE("forced curvature flow keeps planes flat") {
  const auto f = make_constant_field(2.0, 2, 1.0, DiffusionKind::CurvatureProjection, 1.0);
  EvolutionConfig cfg;
  cfg.h = 1.0 / 16;
  const Vec e{0.8, -0.6, 0};
  const auto run = solve_oscillatory(f, 0.5, plane(e), 0.5, 1.0, cfg);
  // Not exact: the mirrored boundary ghost leaks in through the diffusion, damped by the padding.
  CHECK(max_deviation(run, [&](const Vec& x, double t) { return dot(x, e, 2) - 2.0 * t; }) < 1e-6);
}

TEST_CASE("argument checks") {
  const auto f = make_constant_field(1.0, 1);
  CHECK_THROWS_AS(solve_oscillatory(f, 0.0, cone(), 1.0, 1.0), Error);
  CHECK_THROWS_AS(solve_oscillatory(f, 1.5, cone(), 1.0, 1.0), Error);
  CHECK_THROWS_AS(solve_oscillatory(f, 0.5, cone(), -1.0, 1.0), Error);
  CHECK_THROWS_AS(solve_oscillatory(make_constant_field(1.0, 3), 0.5, cone(), 1.0, 1.0), Error);
  EvolutionConfig cfg;
  cfg.h = 1.0 / 16;
  const auto a = solve_oscillatory(f, 0.5, cone(), 0.5, 1.0, cfg);
  const auto b = solve_oscillatory(f, 0.5, smooth_cone(0.5), 0.5, 1.0, cfg);
  CHECK_THROWS_AS(sup_error(a, b), Error);
  CHECK(sup_error(a, a) == 0.0);
}
