#pragma once

#include <cstddef>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/metric.hpp"

namespace homlab {

struct MbarConfig {
  /// Evaluation points t for m(t e); at least 3, increasing, first >= 4.
  std::vector<double> t_list{8.0, 16.0, 24.0, 32.0};
  double h = 0.25;
  /// Depth of the slab beyond max(t_list).
  double margin = 4.0;
  /// Slab width; <= 0 selects 2 * depth.
  double width = 0.0;
  SolverConfig solver;
  unsigned workers = 1;
};

struct SlopeRow {
  double mu = 0.0;
  double mbar = 0.0;
  double stderr_ = 0.0;
  /// Fitted and discarded.
  double intercept = 0.0;
  /// Exponent k in |E m(te)/t - mbar| ~ t^{-k}; NaN when the defect vanishes.
  double defect_exponent = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  std::size_t seeds = 0;
  /// E_N m(te) at each t of the window.
  std::vector<double> mean_m;
};

struct SlopeTable {
  Vec e{};
  int dim = 1;
  std::vector<SlopeRow> rows;
};

/// Least-squares slope of the ensemble mean of m_mu(te, H_e^-) against t.
SlopeRow estimate_mbar(const std::vector<CoefficientField>& fields, double mu, const Vec& e,
                       const MbarConfig& cfg = {});

SlopeTable build_slope_table(const std::vector<CoefficientField>& fields, const std::vector<double>& mus,
                             const Vec& e, const MbarConfig& cfg = {});

struct HbarValue {
  double value = 0.0;
  double uncertainty = 0.0;
};

/// H(te) = inf{mu : mbar_mu(e) > t} on the monotone piecewise-linear
/// interpolant of the table. Throws ExtendTable when t is not bracketed and
/// Threshold when the table decreases in mu beyond 2 stderr.
HbarValue invert_to_hbar(const SlopeTable& table, double t, double mu_tol = 1e-10);

/// mu values spanning [c0 |xi|^p, C0 |xi|^p] (slightly widened), which
/// bracket H(xi) by the growth bounds.
std::vector<double> bracketing_mus(const StructuralBounds& b, double xi_norm, std::size_t count = 6);

/// Metric route: slope table over bracketing_mus, then inversion at |xi|.
HbarValue hbar_from_metric(const std::vector<CoefficientField>& fields, const Vec& xi, const MbarConfig& cfg = {},
                           std::size_t mu_count = 6);

struct CorrectorRouteConfig {
  double h = 0.25;
  /// Torus side = side_factor / delta.
  double side_factor = 8.0;
  SolverConfig solver;
  /// RMS fit residual (relative to |A|) above which the estimate is flagged.
  double residual_threshold = 1e-3;
  unsigned workers = 1;
};

struct CorrectorRouteEstimate {
  double value = 0.0;
  /// |value - dvd0 at the smallest delta| + fit residual.
  double uncertainty = 0.0;
  double B = 0.0;
  double q = 1.0;
  double fit_residual = 0.0;
  bool low_confidence = false;
  std::vector<double> deltas;
  std::vector<double> dvd0;
};

struct DeltaFit {
  double A = 0.0, B = 0.0, q = 1.0, residual = 0.0;
};

/// Fits y = A + B delta^q with q in [0.25, 4] free (RMS residual).
DeltaFit fit_delta_limit(const std::vector<double>& deltas, const std::vector<double>& y);

/// Corrector route: solve_corrector over the delta ladder, extrapolate to 0.
CorrectorRouteEstimate hbar_from_corrector(const CoefficientField& field, const Vec& xi,
                                           const std::vector<double>& deltas, const CorrectorRouteConfig& cfg = {});

enum class Route { Metric, Corrector };
const char* to_string(Route r);

struct HbarPoint {
  Vec xi{};
  double value = 0.0;
  double uncertainty = 0.0;
  Route route = Route::Metric;
  std::size_t seeds = 1;
};

struct EffectiveHamiltonianEstimate {
  int dim = 1;
  std::vector<HbarPoint> points;
};

struct RegularityReport {
  std::size_t directions = 0;
  std::size_t magnitudes = 0;
  /// Per point: c0|xi|^p <= H <= C0|xi|^p within its uncertainty.
  std::vector<bool> sandwich_pass;
  std::size_t sandwich_failures = 0;
  /// Minimum local Hoelder exponent over neighboring samples (NaN if none).
  double min_holder_exponent = 0.0;
  bool star_shaped = true;
  /// max over magnitudes of (max - min over directions).
  double max_direction_spread = 0.0;
  /// Spread <= 2 x the largest per-point uncertainty at every magnitude.
  bool isotropic_within_uncertainty = true;
  /// Mean slope of log H against log |xi| along rays.
  double homogeneity_exponent = 0.0;
};

/// Needs >= 8 directions (2 in 1D) x >= 4 magnitudes, each direction sampled
/// at the same magnitudes.
RegularityReport hbar_regularity_scan(const EffectiveHamiltonianEstimate& est, const StructuralBounds& b);

/// Least-squares line y = a + b x; se is the standard error of b.
struct LineFit {
  double intercept = 0.0, slope = 0.0, se = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace homlab
