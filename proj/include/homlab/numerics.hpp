#pragma once

#include <memory>
#include <span>
#include <vector>

#include "homlab/fields.hpp"
#include "homlab/grid.hpp"

namespace homlab {

/// Value taken by the diffusion term where the gradient nearly vanishes:
/// midpoint of, or one of, the min/max over the direction net.
enum class EnvelopeRule { Midpoint, Lower, Upper };

struct SchemeOptions {
  /// Envelope switch radius relative to the local slope, in range lengths;
  /// <= 0 means "use the grid spacing".
  double eps_reg = 0.0;
  EnvelopeRule envelope = EnvelopeRule::Midpoint;
  /// Multiplies A (the epsilon of the oscillatory evolution).
  double diffusion_scale = 1.0;
  /// The field is sampled at coord_scale * x.
  double coord_scale = 1.0;
  /// Gradient shift xi applied inside H and A (corrector problems).
  Vec shift{};
  /// Zeroth-order coefficient delta (corrector problems).
  double zeroth_order = 0.0;
};

/// Monotone discretization of  zeroth*u - scale*tr(A(xi+Du,x) D^2u) + H(xi+Du,x)
/// on a fixed grid. Field values are cached per node at construction.
class SchemeOperator {
 public:
  SchemeOperator(const CoefficientField& field, std::shared_ptr<const Grid> grid, SchemeOptions opts = {});

  const Grid& grid() const { return *grid_; }
  const CoefficientField& field() const { return *field_; }
  const SchemeOptions& options() const { return opts_; }
  double eps_reg() const { return eps_reg_; }
  double a_at(std::size_t node) const { return a_[node]; }
  std::span<const double> a_values() const { return a_; }

  /// Rouy-Tourin selection per axis: max(xi+D^-u, -(xi+D^+u), 0), signed
  /// toward the ascent direction. Missing box neighbors are ignored.
  Vec upwind_gradient(std::span<const double> u, std::size_t node) const;
  /// xi + centered differences; at a missing side, the difference of the two
/// nearest nodes on the other side.
  Vec centered_gradient(std::span<const double> u, std::size_t node) const;
  /// Second difference along an integer stencil offset, divided by h^2.
  /// A missing side is mirrored from the other one.
  double second_difference(std::span<const double> u, std::size_t node, const std::array<int, 3>& off) const;
  /// tr(M D^2u) with the nonnegative axis/diagonal decomposition when M is
  /// diagonally dominant and the centered 4-point cross formula otherwise.
  double trace_term(const Mat& M, std::span<const double> u, std::size_t node) const;
  /// tr(A(g/|g|,x) D^2u); the envelope rule when |g| < eps_reg * s, with s the
  /// largest axis slope between the first and second neighbors, blended linearly into the directional
  /// value up to |g| = 2 eps_reg * s.
  double diffusion_term(std::span<const double> u, std::size_t node) const;
  double hamiltonian_term(std::span<const double> u, std::size_t node) const;
  /// Full operator value at a node (no right-hand side).
  double apply(std::span<const double> u, std::size_t node) const;

  /// Bound on the center coefficient of apply(); a pseudo-time step of
  /// cfl / bound keeps the explicit update monotone.
  double center_coefficient_bound(double lip) const;

  /// Directions used by the envelope rule: +-axes and +-(e_i +- e_j)/sqrt 2.
  const std::vector<Vec>& direction_net() const { return net_; }

 private:
  const CoefficientField* field_;
  std::shared_ptr<const Grid> grid_;
  SchemeOptions opts_;
  double eps_reg_;
  bool direction_dependent_;
  std::vector<double> a_;
  std::vector<Vec> net_;
  Mat fixed_A_{};
};

/// Per-node field values a(coord_scale * x), periodized on tori.
std::vector<double> sample_field(const CoefficientField& field, const Grid& grid, double coord_scale = 1.0);

Vec upwind_gradient(const GridFunction& u, std::size_t node);
double diffusion_term(const GridFunction& u, const CoefficientField& field, std::size_t node, double eps_reg);
/// -tr(A D^2u) + H(Du,x) - mu at unknown nodes, 0 at Dirichlet and exterior nodes.
GridFunction scheme_residual(const GridFunction& u, const CoefficientField& field, double mu, double eps_reg);
GridFunction scheme_residual(const GridFunction& u, const SchemeOperator& op, double rhs);

}  // namespace homlab
