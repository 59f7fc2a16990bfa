#pragma once

#include <memory>
#include <vector>

#include <json.hpp>

#include "homlab/effective.hpp"

namespace homlab {

/// Closed-form initial data.
struct InitialCondition {
  enum class Kind { Zero, Plane, Cone, SmoothCone, Wave };
  Kind kind = Kind::Zero;
  /// Plane: x.e + offset; Wave: offset + amplitude sin(2 pi x.e / wavelength).
  Vec e{1.0, 0.0, 0.0};
  double offset = 0.0;
  /// Cone: |x - center|; SmoothCone: sqrt(|x - center|^2 + radius^2).
  Vec center{};
  double radius = 1.0;
  double amplitude = 1.0;
  double wavelength = 1.0;

  double operator()(const Vec& x, int dim) const;
  /// Bound on |Dg|.
  double lipschitz(int dim) const;
  /// Bound on |D^2 g|; infinite for the cone.
  double second_derivative_bound(int dim) const;
  bool operator==(const InitialCondition&) const = default;
};

nlohmann::json to_json(const InitialCondition& g, int dim);
InitialCondition initial_condition_from_json(const nlohmann::json& j);

struct EvolutionConfig {
  double h = 1.0 / 64;
  double cfl = 0.9;
  /// Snapshots at k T / checkpoints, k = 0..checkpoints.
  int checkpoints = 10;
  /// Multiplies the computed padding (2 doubles it).
  double pad_factor = 1.0;
  /// Oscillatory runs use h = min(h, epsilon / cells_per_period) when > 0.
  double cells_per_period = 0.0;
};

struct EvolutionRun {
  /// 0 for the homogenized problem.
  double epsilon = 0.0;
  InitialCondition g;
  double T = 0.0;
  double R = 0.0;
  double h = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;
  double pad = 0.0;
  std::vector<double> times;
  /// u at each checkpoint on the observation box [-R, R]^d.
  std::vector<GridFunction> snapshots;
  /// Measured space-time Lipschitz constant over the snapshots.
  double lip = 0.0;
};

/// u_t = epsilon tr(A(Du)D^2u) - H(Du, x/epsilon), u(.,0) = g; dimension 1 or 2.
EvolutionRun solve_oscillatory(const CoefficientField& field, double epsilon, const InitialCondition& g, double T,
                               double R, const EvolutionConfig& cfg = {});

/// Effective Hamiltonian sampled along rays: piecewise linear in |xi| with
/// H(0) = 0, linear in angle between neighboring directions (2D).
class HbarInterpolant {
 public:
  HbarInterpolant(const EffectiveHamiltonianEstimate& est);
  explicit HbarInterpolant(int dim, std::function<double(const Vec&)> exact, double max_norm);
  int dim() const { return dim_; }
  /// Smallest sampled maximal |xi| over directions.
  double coverage() const { return coverage_; }
  /// Throws ExtendTable beyond coverage().
  double operator()(const Vec& xi) const;
  /// Bound on |DH| over the covered ball (Lipschitz constant of the interpolant).
  double slope_bound() const { return slope_; }
  /// True when H is nondecreasing in |xi_k| for fixed signs, checked on a net;
  /// then the signed upwind selection is monotone.
  bool coordinate_monotone() const { return coord_monotone_; }

 private:
  struct Ray {
    double angle = 0.0;
    std::vector<double> r, h;
  };
  double ray_eval(const Ray& ray, double r) const;
  void finish();

  int dim_ = 1;
  std::vector<Ray> rays_;
  std::function<double(const Vec&)> exact_;
  double coverage_ = 0.0;
  double slope_ = 0.0;
  bool coord_monotone_ = true;
};

/// u_t + H(Du) = 0 with H interpolated; upwind when the interpolant is
/// coordinate-monotone, local Lax-Friedrichs otherwise.
EvolutionRun solve_homogenized(const HbarInterpolant& hbar, const InitialCondition& g, double T, double R,
                               const EvolutionConfig& cfg = {});

/// sup over B_R and the common checkpoints of |u_osc - u_hom|, with u_hom
/// interpolated onto the oscillatory nodes.
double sup_error(const EvolutionRun& osc, const EvolutionRun& hom);

struct HomogenizationErrorTable {
  std::vector<double> epsilons;
  std::vector<double> errors;
  /// Fitted slope of log error against log epsilon.
  double alpha = 0.0;
  bool strictly_decreasing = true;
};

HomogenizationErrorTable homogenization_error(const std::vector<EvolutionRun>& osc, const EvolutionRun& hom);

/// 1D: position of the first crossing of `level` (scanning left to right) at checkpoint k.
double front_position(const EvolutionRun& run, std::size_t k, double level = 0.0);
/// 1D: (front(T) - front(0)) / T.
double front_speed(const EvolutionRun& run, double level = 0.0);

/// Max |difference| inside B_R between a run and its rerun with doubled padding.
double padding_agreement(const CoefficientField& field, double epsilon, const InitialCondition& g, double T, double R,
                         const EvolutionConfig& cfg = {});

}  // namespace homlab
