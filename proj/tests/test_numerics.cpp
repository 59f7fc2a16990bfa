#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "homlab/numerics.hpp"

using namespace homlab;

namespace {

std::shared_ptr<const Grid> box2(double h, int n, double lo) {
  return std::make_shared<const Grid>(Grid::box(2, h, {n, n, 1}, {lo, lo, 0}));
}

template <class F>
GridFunction sample(std::shared_ptr<const Grid> g, F f) {
  GridFunction u(g);
  for (std::size_t i = 0; i < g->size(); ++i) u[i] = f(g->coords(i));
  return u;
}

bool interior_2(const Grid& g, std::size_t i, int margin = 1) {
  auto m = g.multi(i);
  for (int a = 0; a < g.dim(); ++a)
    if (m[a] < margin || m[a] > g.extents()[a] - 1 - margin) return false;
  return true;
}

}  // namespace

TEST_CASE("half-space grid marks exactly the nodes below the plane") {
  const Vec e = normalized({1, 2, 0}, 2);
  auto g = Grid::half_space(2, 0.1, {41, 41, 1}, {-2, -2, 0}, e, -0.3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool below = dot(g.coords(i), e, 2) <= -0.3 + 1e-12;
    CHECK((g.kind(i) == NodeKind::Dirichlet) == below);
  }
}

TEST_CASE("torus neighbors wrap and boxes report missing neighbors") {
  auto t = Grid::torus(2, 0.5, {8, 6, 1}, {-2, -1.5, 0});
  CHECK(t.neighbor(t.index({0, 3, 0}), 0, -1) == std::ptrdiff_t(t.index({7, 3, 0})));
  CHECK(t.neighbor(t.index({4, 5, 0}), 1, +1) == std::ptrdiff_t(t.index({4, 0, 0})));
  CHECK(t.count(NodeKind::Interior) == t.size());
  auto b = Grid::box(2, 0.5, {8, 6, 1}, {0, 0, 0});
  CHECK(b.neighbor(b.index({0, 3, 0}), 0, -1) == Grid::npos);
  CHECK(b.kind(b.index({0, 3, 0})) == NodeKind::Outflow);
  CHECK(b.kind(b.index({3, 3, 0})) == NodeKind::Interior);
}

TEST_CASE("multilinear interpolation reproduces affine functions") {
  auto g = box2(0.25, 17, -2);
  auto u = sample(g, [](const Vec& x) { return 1.5 * x[0] - 0.5 * x[1] + 2; });
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-2, 2);
  for (int i = 0; i < 100; ++i) {
    Vec x{U(rng), U(rng), 0};
    CHECK(interpolate(u, x) == doctest::Approx(1.5 * x[0] - 0.5 * x[1] + 2).epsilon(1e-12));
  }
  CHECK_THROWS_AS(interpolate(u, {2.5, 0, 0}), Error);
}

TEST_CASE("grid dumps round-trip bit-exactly") {
  auto g = std::make_shared<const Grid>(Grid::half_space(2, 0.2, {11, 7, 1}, {-1, 0, 0}, {1, 0, 0}, -0.5));
  auto u = sample(g, [](const Vec& x) { return std::sin(3 * x[0]) + x[1] / 3; });
  const auto stem = std::filesystem::temp_directory_path() / "homlab_dump_test";
  write_dump(u, stem, {{"note", "x"}});
  auto v = read_dump(stem);
  CHECK(v.values == u.values);
  CHECK(v.grid->header() == g->header());
  std::filesystem::remove(stem.string() + ".bin");
  std::filesystem::remove(stem.string() + ".json");
}

TEST_CASE("distance transform matches brute force") {
  auto g = Grid::box(2, 0.5, {23, 17, 1}, {0, 0, 0});
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> set(g.size(), 0);
  for (int k = 0; k < 7; ++k) set[rng() % g.size()] = 1;
  auto d = distance_transform(g, set);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double best = INFINITY;
    for (std::size_t j = 0; j < g.size(); ++j)
      if (set[j]) {
        const Vec a = g.coords(i), b = g.coords(j);
        best = std::min(best, std::hypot(a[0] - b[0], a[1] - b[1]));
      }
    CHECK(d[i] == doctest::Approx(best).epsilon(1e-12));
  }
  std::vector<std::uint8_t> none(g.size(), 0);
  CHECK(std::isinf(distance_transform(g, none)[0]));
}

TEST_CASE("hausdorff distance of nested discs") {
  auto g = Grid::box(2, 0.1, {61, 61, 1}, {-3, -3, 0});
  std::vector<std::uint8_t> a(g.size()), b(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = norm(g.coords(i), 2);
    a[i] = r <= 1.0;
    b[i] = r <= 2.0;
  }
  CHECK(hausdorff_distance(g, a, b) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(hausdorff_distance(g, a, a) == 0.0);
}

TEST_CASE("upwind gradient of linear and constant functions") {
  auto g = box2(1.0 / 16, 33, -1);
  auto u = sample(g, [](const Vec& x) { return 3 * x[0]; });
  auto c = sample(g, [](const Vec&) { return 1.25; });
  for (std::size_t i = 0; i < g->size(); ++i) {
    if (!interior_2(*g, i)) continue;
    Vec p = upwind_gradient(u, i);
    CHECK(p[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(p[1] == 0.0);
    Vec q = upwind_gradient(c, i);
    CHECK(q[0] == 0.0);
    CHECK(q[1] == 0.0);
  }
}

TEST_CASE("upwind gradient at a kink") {
  auto g = box2(0.125, 17, -1);
  auto v = sample(g, [](const Vec& x) { return std::abs(x[0]); });
  auto w = sample(g, [](const Vec& x) { return -std::abs(x[0]); });
  // One cell off the kink the one-sided slopes agree.
  const std::size_t off = g->index({9, 8, 0});
  CHECK(upwind_gradient(v, off)[0] == doctest::Approx(1.0));
  // At a concave kink both one-sided slopes have magnitude 1 and one of them is picked.
  const std::size_t at = g->index({8, 8, 0});
  CHECK(std::abs(upwind_gradient(w, at)[0]) == doctest::Approx(1.0));
  // At a convex kink (a local minimum) the selection is 0.
  CHECK(upwind_gradient(v, at)[0] == 0.0);
}

TEST_CASE("diffusion term examples") {
  auto g = box2(0.05, 41, -1);
  auto curv = make_constant_field(1.0, 2, 1.0, DiffusionKind::CurvatureProjection, 1.0);
  auto paraboloid = sample(g, [](const Vec& x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); });
  auto slab = sample(g, [](const Vec& x) { return 0.5 * x[0] * x[0]; });
  const std::size_t node = g->index({30, 25, 0});
  CHECK(diffusion_term(paraboloid, curv, node, g->h()) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(diffusion_term(slab, curv, node, g->h()) == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
  auto first = make_constant_field(1.0, 2);
  CHECK(diffusion_term(paraboloid, first, node, g->h()) == 0.0);
}

TEST_CASE("envelope rule near vanishing gradient") {
  auto g = box2(0.05, 41, -1);
  auto curv = make_constant_field(1.0, 2, 1.0, DiffusionKind::CurvatureProjection, 1.0);
  // u = x1^2/2: Hessian diag(1,0). Over the direction net, tr((I-ee)D^2u) = 1 - e1^2
  // ranges over [0,1], so the midpoint is 1/2 and the envelopes are 0 and 1.
  auto u = sample(g, [](const Vec& x) { return 0.5 * x[0] * x[0]; });
  const std::size_t origin = g->index({20, 20, 0});
  SchemeOptions o;
  SchemeOperator mid(curv, g, o);
  CHECK(mid.diffusion_term(u.values, origin) == doctest::Approx(0.5));
  o.envelope = EnvelopeRule::Lower;
  CHECK(SchemeOperator(curv, g, o).diffusion_term(u.values, origin) == doctest::Approx(0.0));
  o.envelope = EnvelopeRule::Upper;
  CHECK(SchemeOperator(curv, g, o).diffusion_term(u.values, origin) == doctest::Approx(1.0));
  CHECK(mid.direction_net().size() == 8);
}

TEST_CASE("scheme residual examples") {
  const Vec e{0.6, 0.8, 0};
  auto g = std::make_shared<const Grid>(Grid::half_space(2, 0.1, {21, 21, 1}, {-1, -1, 0}, e, 0.0));
  auto f = make_constant_field(2.0, 2);
  auto u = sample(g, [&](const Vec& x) { return 0.5 * dot(x, e, 2); });
  auto r = scheme_residual(u, f, 1.0, g->h());
  for (std::size_t i = 0; i < g->size(); ++i)
    if (interior_2(*g, i)) CHECK(r[i] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  auto zero = GridFunction(g, 0.0);
  auto r0 = scheme_residual(zero, f, 1.0, g->h());
  for (std::size_t i = 0; i < g->size(); ++i)
    CHECK(r0[i] == (g->kind(i) == NodeKind::Dirichlet ? 0.0 : -1.0));
}

namespace {

// Finite-difference probe: raising any single neighbor value must not raise
// the operator at the center node.
void probe_monotone(const CoefficientField& f, std::uint64_t seed, Vec shift = {}) {
  auto g = box2(0.25, 9, -1);
  SchemeOptions o;
  o.shift = shift;
  SchemeOperator op(f, g, o);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1, 1);
  const std::size_t c = g->index({4, 4, 0});
  int violations = 0, probes = 0;
  for (int trial = 0; trial < 300; ++trial) {
    GridFunction u(g);
    for (auto& v : u.values) v = U(rng);
    const double base = op.apply(u.values, c);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        if (!dx && !dy) continue;
        GridFunction w = u;
        w[g->index({4 + dx, 4 + dy, 0})] += 1e-3;
        ++probes;
        if (op.apply(w.values, c) > base + 1e-12) ++violations;
      }
  }
  CHECK(probes == 2400);
  CHECK(violations == 0);
}

}  // namespace

TEST_CASE("residual is nonincreasing in every neighbor value") {
  SUBCASE("first order") { probe_monotone(sample_poisson_bump_field(3, 2.0, 1.0, 1.0, 2), 1); }
  SUBCASE("first order, p = 2, shifted") {
    probe_monotone(make_periodic_field(2, {TrigTerm{1, {1, 1, 0}, 0}}, 1, 2, DiffusionKind::None, 0, 2.0), 2,
                   {0.7, -0.3, 0});
  }
  SUBCASE("isotropic diffusion") {
    probe_monotone(make_constant_field(1.5, 2, 1.0, DiffusionKind::Isotropic, 0.8), 3);
  }
}

TEST_CASE("diagonally dominant matrices use a monotone stencil") {
  auto g = box2(0.25, 9, -1);
  auto f = make_constant_field(1.0, 2);
  SchemeOperator op(f, g);
  const Mat M{{{1.0, -0.4, 0}, {-0.4, 0.7, 0}, {0, 0, 0}}};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1, 1);
  const std::size_t c = g->index({4, 4, 0});
  for (int trial = 0; trial < 100; ++trial) {
    GridFunction u(g);
    for (auto& v : u.values) v = U(rng);
    const double base = op.trace_term(M, u.values, c);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        if (!dx && !dy) continue;
        GridFunction w = u;
        w[g->index({4 + dx, 4 + dy, 0})] += 1e-3;
        CHECK(op.trace_term(M, w.values, c) >= base - 1e-12);
      }
  }
  // Still consistent: exact on quadratics.
  auto q = sample(g, [](const Vec& x) { return 0.5 * x[0] * x[0] + 2 * x[0] * x[1] - x[1] * x[1]; });
  CHECK(op.trace_term(M, q.values, c) == doctest::Approx(1.0 * 1 + 2 * (-0.4) * 2 + 0.7 * (-2)));
}

TEST_CASE("residual is first-order consistent away from critical points") {
  // u = x.(1, 0.5) + 0.3|x|^2 on [-0.5, 0.5]^2 never has Du = 0.
  auto f = make_constant_field(1.3, 2, 1.0, DiffusionKind::CurvatureProjection, 0.4);
  auto exact = [&](const Vec& x) {
    const Vec g{1 + 0.6 * x[0], 0.5 + 0.6 * x[1], 0};
    const double n = norm(g, 2);
    // tr((I - gg/|g|^2) 0.6 I) = 0.6 (d - 1)
    return -0.4 * 0.6 + 1.3 * n;
  };
  std::vector<double> errs;
  for (int n : {21, 41, 81}) {
    const double h = 1.0 / (n - 1);
    auto g = box2(h, n, -0.5);
    auto u = sample(g, [](const Vec& x) { return x[0] + 0.5 * x[1] + 0.3 * (x[0] * x[0] + x[1] * x[1]); });
    auto r = scheme_residual(u, f, 0.0, h);
    double err = 0;
    for (std::size_t i = 0; i < g->size(); ++i)
      if (interior_2(*g, i)) err = std::max(err, std::abs(r[i] - exact(g->coords(i))));
    errs.push_back(err);
  }
  CHECK(errs[0] / errs[1] > 1.8);
  CHECK(errs[1] / errs[2] > 1.8);
}

TEST_CASE("center coefficient bound dominates the actual sensitivity") {
  auto g = box2(0.1, 11, -0.5);
  auto f = make_periodic_field(2, {TrigTerm{0.5, {1, 0, 0}, 0}}, 1, 2, DiffusionKind::CurvatureProjection, 0.3, 1.0);
  SchemeOperator op(f, g);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> U(-0.2, 0.2);
  const std::size_t c = g->index({5, 5, 0});
  const double bound = op.center_coefficient_bound(1.0);
  for (int t = 0; t < 100; ++t) {
    GridFunction u(g);
    for (auto& v : u.values) v = U(rng);
    GridFunction w = u;
    w[c] += 1e-6;
    const double slope = (op.apply(w.values, c) - op.apply(u.values, c)) / 1e-6;
    CHECK(slope <= bound * (1 + 1e-6));
  }
}
