#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "homlab/fields.hpp"
#include "homlab/solver.hpp"

namespace homlab {

/// Target of the metric problem. The half-space variant is {x.e <= -offset}.
struct TargetSet {
  enum class Kind { HalfSpace, BallUnion, Box };
  Kind kind = Kind::HalfSpace;
  Vec e{1.0, 0.0, 0.0};
  double offset = 0.0;
  std::vector<Vec> centers;
  double radius = 1.0;
  homlab::Box box;

  static TargetSet half_space(const Vec& e, double offset);
  /// Rejects radius < 1 (interior unit-ball condition).
  static TargetSet ball_union(std::vector<Vec> centers, double radius);
  static TargetSet boxed(const homlab::Box& b);

  bool contains(const Vec& x, int dim) const;
  /// Euclidean distance from x to the set (0 inside).
  double distance(const Vec& x, int dim) const;
};

nlohmann::json to_json(const TargetSet& t, int dim);
TargetSet target_from_json(const nlohmann::json& j);

struct MetricSolution {
  GridFunction m;
  double mu = 0.0;
  TargetSet target;
  FieldDescriptor field;
  double residual_norm = 0.0;
  std::size_t iters = 0;
  /// Max discrete gradient magnitude (also reported as L_est).
  double lip_est = 0.0;
  bool monotone_descent = true;
  bool swept = false;
  std::vector<double> residual_history;
};

/// Converged solution of -tr(A(Dm,x)D^2m) + H(Dm,x) = mu off the target,
/// m = 0 on target nodes. The grid's box boundary acts as outflow.
MetricSolution solve_metric(const CoefficientField& field, double mu, const TargetSet& target,
                            std::shared_ptr<const Grid> grid, const SolverConfig& cfg = {});

/// Axis-aligned bounding box of the slab {-s-2h <= x.e <= depth, |x_perp| <= width/2},
/// snapped so that the origin is a node; nodes with x.e <= -s are Dirichlet.
/// width <= 0 selects 2 * depth.
std::shared_ptr<const Grid> planar_grid(int dim, double h, const Vec& e, double s, double depth, double width);

/// Planar metric problem with target {x.e <= -s} on planar_grid(...).
MetricSolution solve_planar_metric(const CoefficientField& field, double mu, const Vec& e, double s,
                                   std::shared_ptr<const Grid> grid, const SolverConfig& cfg = {});

/// Solves with Dirichlet values prescribed by `boundary` on the nodes x.e <= -s
/// (zero in the plain planar problem).
MetricSolution solve_planar_metric_with_data(const CoefficientField& field, double mu, const Vec& e, double s,
                                             std::shared_ptr<const Grid> grid, const SolverConfig& cfg,
                                             const std::function<double(const Vec&)>& boundary);

double value_at(const MetricSolution& sol, const Vec& x);

/// Node mask of {m <= t}.
std::vector<std::uint8_t> sublevel_set(const MetricSolution& sol, double t);

struct CalibratedConstants {
  double l_est = 0.0;
  double L_est = 0.0;
  /// Worst violation of l_est*dist - 2 <= m <= L_est*dist (0 if it holds).
  double sandwich_violation = 0.0;
};

/// L_est = max discrete gradient; l_est = min over nodes with dist >= 2 of m/dist.
CalibratedConstants calibrate_constants(const MetricSolution& sol);

void save_metric(const MetricSolution& sol, const std::filesystem::path& stem);
MetricSolution load_metric(const std::filesystem::path& stem);

}  // namespace homlab
