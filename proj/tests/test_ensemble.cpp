#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "homlab/ensemble.hpp"

using namespace homlab;

namespace {

FieldFamily poisson(int dim, DiffusionKind diff = DiffusionKind::None, double strength = 0.0) {
  FieldFamily f;
  f.base.kind = FieldKind::PoissonBump;
  f.base.dim = dim;
  f.base.intensity = 1.0;
  f.base.amplitude = 1.0;
  f.base.base = 1.0;
  f.base.diffusion = diff;
  f.base.diffusion_strength = strength;
  f.seed_base = 7;
  f.experiment_id = "unit";
  return f;
}

FieldFamily periodic_1d() {
  FieldFamily f;
  f.base.kind = FieldKind::PeriodicTrig;
  f.base.dim = 1;
  f.base.base = 2.0;
  f.base.terms = {TrigTerm{1.0, {1, 0, 0}, 0.0}};
  f.experiment_id = "unit-periodic";
  return f;
}

}  // namespace

TEST_CASE("replicate seeds") {
  const auto a = replicate_seed(1, "exp", 0), b = replicate_seed(1, "exp", 1);
  CHECK(a != b);
  CHECK(replicate_seed(1, "exp", 0) == a);
  CHECK(replicate_seed(2, "exp", 0) != a);
  CHECK(replicate_seed(1, "other", 0) != a);
  const auto fam = poisson(2);
  CHECK(fam.realization(3).descriptor().seed == fam.seed(3));
}

TEST_CASE("tail check") {
  SplitMix rng(11);
  std::vector<double> g;
  for (int i = 0; i < 2000; ++i) {
    const double u1 = rng.uniform(), u2 = rng.uniform();
    g.push_back(std::sqrt(-2 * std::log(1 - u1)) * std::cos(2 * std::numbers::pi * u2));
  }
  const auto tc = tail_check(g);
  CHECK(tc.decreasing);
  CHECK(tc.convex);
  CHECK(tc.log_tail.front() == doctest::Approx(std::log(1999.0 / 2000)));
  const auto flat = tail_check(std::vector<double>(10, 1.0));
  CHECK_FALSE(flat.decreasing);
  CHECK_FALSE(flat.convex);
}

TEST_CASE("fluctuations: periodic is deterministic, 1D Poisson follows the CLT") {
  PlanarSetup ps;
  ps.h = 1.0 / 16;
  const auto per = run_fluctuation_experiment(periodic_1d(), 1.0, {1, 0, 0}, {8, 16, 32}, 32, ps);
  for (double v : per.variance) CHECK(v == 0.0);
  CHECK(std::isnan(per.beta));

  const auto r = run_fluctuation_experiment(poisson(1), 1.0, {1, 0, 0}, {8, 16, 32, 64}, 256, ps);
  CHECK(r.beta == doctest::Approx(0.5).epsilon(0.2));
  CHECK(r.record.per_seed.size() == 256);
  CHECK(r.record.lambdas.size() == 255);
  CHECK_THROWS_AS(run_fluctuation_experiment(poisson(1), 1.0, {1, 0, 0}, {8, 16, 32}, 16, ps), Error);
  CHECK_THROWS_AS(run_fluctuation_experiment(poisson(1), 1.0, {1, 0, 0}, {8, 16}, 32, ps), Error);
}

TEST_CASE("reruns and worker counts reproduce observables bit-exactly") {
  PlanarSetup ps;
  ps.h = 0.25;
  ps.margin = 2.0;
  const auto fam = poisson(2);
  const auto a = run_additivity_experiment(fam, 1.0, {1, 0, 0}, {{4, 4}}, 4, ps);
  ps.workers = 2;
  const auto b = run_additivity_experiment(fam, 1.0, {1, 0, 0}, {{4, 4}}, 4, ps);
  CHECK(a.record.per_seed == b.record.per_seed);
  CHECK(a.record.seeds == b.record.seeds);
  // Extra replicates leave the first ones alone.
  const auto c = run_additivity_experiment(fam, 1.0, {1, 0, 0}, {{4, 4}}, 5, ps);
  for (std::size_t i = 0; i < 4; ++i) CHECK(c.record.per_seed[i] == a.record.per_seed[i]);

  const auto stem = std::filesystem::temp_directory_path() / "homlab_record_rt";
  save_record(a.record, stem);
  const auto back = load_record(stem);
  CHECK(back.kind == "additivity");
  CHECK(back.seeds == a.record.seeds);
  CHECK(back.per_seed == a.record.per_seed);
  CHECK(back.summary == a.record.summary);
}

TEST_CASE("additivity defect oracles") {
  PlanarSetup ps;
  ps.h = 1.0 / 16;
  FieldFamily c;
  c.base.dim = 2;
  c.base.base = 2.0;
  ps.h = 0.25;
  const auto cr = run_additivity_experiment(c, 1.0, {1, 0, 0}, {{4, 4}, {4, 8}}, 1, ps);
  for (double d : cr.defect) CHECK(d <= 1e-9);

  ps.h = 1.0 / 32;
  const auto pr = run_additivity_experiment(periodic_1d(), 1.0, {1, 0, 0}, {{4.5, 5.25}, {8, 8}, {6.3, 4.1}}, 1, ps);
  for (double d : pr.defect) CHECK(d <= 1.0);  // max|1/a| * period
  CHECK(pr.defect[1] <= 1e-9);  // whole periods are exact
  CHECK_THROWS_AS(run_additivity_experiment(periodic_1d(), 1.0, {1, 0, 0}, {{2, 8}}, 1, ps), Error);
}

TEST_CASE("localization") {
  LocalizationSetup ls;
  ls.h = 1.0 / 16;
  ls.box_half = 12.0;
  ls.t_level = 4.0;
  // Upwind causality in 1D: resampling beyond the sublevel set changes nothing on it.
  const auto r1 = run_localization_experiment(poisson(1), 1.0, TargetSet::half_space({1, 0, 0}, 0.0), 4, ls);
  CHECK(r1.sup_diff[0] == 0.0);
  CHECK(r1.b_star == 0.0);

  // Nothing to resample in a periodic field.
  const auto rp = run_localization_experiment(periodic_1d(), 1.0, TargetSet::ball_union({Vec{}}, 1.0), 1, ls);
  for (double d : rp.sup_diff) CHECK(d == 0.0);

  LocalizationSetup l2;
  l2.box_half = 8.0;
  l2.t_level = 4.0;
  const auto r2 = run_localization_experiment(poisson(2, DiffusionKind::CurvatureProjection, 0.3), 1.0,
                                              TargetSet::ball_union({Vec{}}, 1.0), 1, l2);
  for (std::size_t k = 1; k < r2.sup_diff.size(); ++k) CHECK(r2.sup_diff[k] <= r2.sup_diff[k - 1]);
  CHECK(r2.sup_diff.back() < r2.l_est);
  CHECK(std::isfinite(r2.b_star));
}

TEST_CASE("finite speed") {
  FiniteSpeedSetup fs;
  fs.margin = 2.0;
  // First order: the lowered data stops mattering exactly at a finite radius.
  const auto r1 = run_finite_speed_experiment(poisson(2), 1.0, {1, 0, 0}, 2.0, {1, 2, 4, 8, 12}, 2, fs);
  CHECK(r1.influence.back() == 0.0);
  CHECK(r1.violation.back() == 0.0);
  CHECK(std::isfinite(r1.R_star));

  FieldFamily cv;
  cv.base.dim = 2;
  cv.base.base = 1.5;
  cv.base.diffusion = DiffusionKind::Isotropic;
  cv.base.diffusion_strength = 0.3;
  const auto r2 = run_finite_speed_experiment(cv, 1.0, {1, 0, 0}, 2.0, {1, 2, 4, 8}, 1, fs);
  for (std::size_t k = 1; k < r2.influence.size(); ++k) CHECK(r2.influence[k] < r2.influence[k - 1]);
  CHECK(r2.violation.back() == 0.0);
  CHECK(r2.record.observables.size() == 4);
  CHECK_THROWS_AS(run_finite_speed_experiment(poisson(1), 1.0, {1, 0, 0}, 2.0, {1, 2}, 1, fs), Error);
}
