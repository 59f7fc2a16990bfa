#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "homlab/metric.hpp"

namespace homlab {

/// hash(base seed, experiment id, replicate index); adding replicates never
/// changes the seeds of existing ones.
std::uint64_t replicate_seed(std::uint64_t base, const std::string& experiment_id, std::size_t index);

struct EnsembleRecord {
  std::string kind;
  std::string experiment_id;
  std::vector<std::uint64_t> seeds;
  /// Column names of the per-seed observables.
  std::vector<std::string> observables;
  /// per_seed[i][j]: observable j of seeds[i].
  std::vector<std::vector<double>> per_seed;
  /// Thresholds used in tail estimation (empty when none).
  std::vector<double> lambdas;
  nlohmann::json summary;
};

/// <stem>.json (summary) and <stem>.csv (seed, observables...).
void save_record(const EnsembleRecord& r, const std::filesystem::path& stem);
EnsembleRecord load_record(const std::filesystem::path& stem);

/// Realizations share everything but the seed.
struct FieldFamily {
  FieldDescriptor base;
  std::uint64_t seed_base = 0;
  std::string experiment_id;

  std::uint64_t seed(std::size_t i) const;
  CoefficientField realization(std::size_t i) const;
};

struct PlanarSetup {
  double h = 0.25;
  /// Slab depth beyond the largest evaluation point.
  double margin = 4.0;
  /// Slab width; <= 0 selects 2 * depth.
  double width = 0.0;
  SolverConfig solver;
  unsigned workers = 1;
};

struct TailCheck {
  std::vector<double> lambda_sq;
  std::vector<double> log_tail;
  bool decreasing = false;
  /// Curvature of the quadratic fit of log-tail against lambda^2.
  double curvature = 0.0;
  bool convex = false;
};

/// Rank-based empirical tail of |x - mean|: thresholds are the order
/// statistics, P = (N - k) / N; the largest sample is dropped (P = 0).
TailCheck tail_check(const std::vector<double>& samples);

struct FluctuationResult {
  std::vector<double> t_list;
  std::vector<double> mean, variance;
  /// std ~ t^beta (fitted on log-log); NaN when every variance is zero.
  double beta = 0.0;
  TailCheck tail;
  EnsembleRecord record;
};

/// m_mu(te, H_e^-) over N realizations for each t.
FluctuationResult run_fluctuation_experiment(const FieldFamily& family, double mu, const Vec& e,
                                             const std::vector<double>& t_list, std::size_t N,
                                             const PlanarSetup& setup = {}, std::size_t min_seeds = 32);

struct AdditivityResult {
  std::vector<std::pair<double, double>> pairs;
  /// |E m((s+t)e) - E m(te) - E m(se)| per pair.
  std::vector<double> defect;
  /// defect / (s+t)^{1/2+eta}, eta = 0.1.
  std::vector<double> normalized;
  EnsembleRecord record;
};

AdditivityResult run_additivity_experiment(const FieldFamily& family, double mu, const Vec& e,
                                           const std::vector<std::pair<double, double>>& pairs, std::size_t N,
                                           const PlanarSetup& setup = {});

struct LocalizationSetup {
  double h = 0.25;
  /// Half side of the computational box (centered at the origin).
  double box_half = 12.0;
  /// Sublevel t whose containing box is kept.
  double t_level = 6.0;
  /// The kept box is the bounding box of {m1 <= t} grown by this.
  double swap_margin = 0.0;
  std::vector<double> buffers{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0};
  std::uint64_t resample_salt = 0x5eedULL;
  SolverConfig solver;
  unsigned workers = 1;
};

struct LocalizationResult {
  std::vector<double> buffers;
  /// sup over {m1 <= t - b} of |m1 - m2|, maximized over seeds.
  std::vector<double> sup_diff;
  /// min over seeds of the calibrated l_est.
  double l_est = 0.0;
  /// Smallest buffer from which every larger buffer is below l_est (NaN if none).
  double b_star = 0.0;
  EnsembleRecord record;
};

/// Resamples the coefficients outside the box containing {m1 <= t} and
/// re-solves; throws InvalidArgument if the two fields differ inside the box.
LocalizationResult run_localization_experiment(const FieldFamily& family, double mu, const TargetSet& target,
                                               std::size_t N, const LocalizationSetup& setup = {});

struct FiniteSpeedSetup {
  double h = 0.25;
  /// Lowering cap M of the boundary data outside B_R.
  double M = 2.0;
  /// Slope K of the lowering ramp; <= 0 selects 2 (mu/c0)^{1/p}.
  double K = 0.0;
  double margin = 4.0;
  SolverConfig solver;
  unsigned workers = 1;
};

struct FiniteSpeedResult {
  double s = 0.0;
  std::vector<double> R_ladder;
  /// max over seeds of (m1(se) - m2(se) - 1)_+.
  std::vector<double> violation;
  /// max over seeds of m1(se) - m2(se) (the raw influence).
  std::vector<double> influence;
  /// Smallest R from which the violation is 0 along the ladder (NaN if never).
  double R_star = 0.0;
  /// R_star / (mu^{-5} (1 + M + s)^{9/2}): the implied constant of the envelope.
  double envelope_constant = 0.0;
  EnsembleRecord record;
};

/// m1: planar problem with zero data; m2: data lowered by min(M, K(|y| - R)_+)
/// outside B_R. The slab is wide enough for the largest R.
FiniteSpeedResult run_finite_speed_experiment(const FieldFamily& family, double mu, const Vec& e, double s,
                                              const std::vector<double>& R_ladder, std::size_t N,
                                              const FiniteSpeedSetup& setup = {});

}  // namespace homlab
