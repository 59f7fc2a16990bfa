#pragma once

#include <cstddef>
#include <vector>

#include "homlab/numerics.hpp"

namespace homlab {

enum class SolverMethod {
  /// Sweeping for first-order problems, pseudo-time otherwise.
  Auto,
  /// Explicit Jacobi iteration u <- u - dtau * residual.
  PseudoTime,
  /// Gauss-Seidel sweeps over the 2^d axis orderings with an exact local solve.
  Sweeping,
};

struct SolverConfig {
  double tol = 1e-6;
  double cfl = 0.9;
  std::size_t max_iters = 2'000'000;
  double eps_reg = 0.0;
  EnvelopeRule envelope = EnvelopeRule::Midpoint;
  SolverMethod method = SolverMethod::Auto;
  /// Pseudo-time iterations between Lipschitz re-estimates (only p > 1 cares).
  std::size_t lip_refresh = 64;
  /// Keep every k-th residual norm in the history.
  std::size_t history_stride = 16;
};

struct StationaryResult {
  std::vector<double> values;
  double residual_norm = 0.0;
  std::size_t iters = 0;
  bool converged = false;
  /// True if no node ever increased during the iteration.
  bool monotone_descent = true;
  bool swept = false;
  std::vector<double> history;
};

/// Drives `op.apply(u) = rhs` at every unknown node to max-norm
/// residual <= cfg.tol, starting from `init`. Other nodes keep their values.
/// Throws NonConvergence (with the residual history in the message tail)
/// when cfg.max_iters is exhausted, NonFinite on blow-up.
StationaryResult solve_stationary(const SchemeOperator& op, std::vector<double> init, double rhs,
                                  const SolverConfig& cfg);

/// max over unknown nodes with a full stencil of |(max(|D^-_i u|, |D^+_i u|))_i|.
/// Truncation boundaries are excluded: their one-sided values carry the
/// state-constraint layer of the truncated domain, not the solution's slope.
double discrete_lipschitz(const Grid& grid, std::span<const double> u);

}  // namespace homlab
