#pragma once

#include <filesystem>
#include <memory>

#include "homlab/fields.hpp"
#include "homlab/solver.hpp"

namespace homlab {

struct CorrectorSolution {
  GridFunction v;
  double delta = 0.0;
  Vec xi{};
  /// -delta * v(0, xi)
  double dvd0 = 0.0;
  FieldDescriptor field;
  double residual_norm = 0.0;
  std::size_t iters = 0;
  bool swept = false;
};

/// Torus centered at the origin (so 0 is a node) whose side is the smallest
/// field-compatible length >= min_side; the spacing is adjusted down so the
/// side is a whole number of cells.
std::shared_ptr<const Grid> corrector_torus(const CoefficientField& field, double h, double min_side);

/// Default torus side 8/delta.
inline double default_torus_side(double delta) { return 8.0 / delta; }

/// Solves delta v - tr(A(xi+Dv,x)D^2v) + H(xi+Dv,x) = 0 on the torus.
/// side_factor: the torus side must be at least side_factor / delta.
CorrectorSolution solve_corrector(const CoefficientField& field, const Vec& xi, double delta,
                                  std::shared_ptr<const Grid> torus, const SolverConfig& cfg = {},
                                  double side_factor = 4.0);

/// sup over nodes of |v(.,xi1) - v(.,xi2)|.
double corrector_xi_continuity(const CoefficientField& field, const Vec& xi1, const Vec& xi2, double delta,
                               std::shared_ptr<const Grid> torus, const SolverConfig& cfg = {});

/// Hoelder envelope (C/delta) min(|xi1|,|xi2|)^{-2p/7} |xi1-xi2|^{2/7} for the
/// sup difference at a fixed point; C is calibrated by the caller.
double xi_holder_envelope(const Vec& xi1, const Vec& xi2, double delta, double p, double C, int dim);

void save_corrector(const CorrectorSolution& sol, const std::filesystem::path& stem);
CorrectorSolution load_corrector(const std::filesystem::path& stem);

}  // namespace homlab
