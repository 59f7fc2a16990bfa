#include "homlab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace homlab {

namespace {

bool is_eikonal(const SchemeOperator& op) {
  const auto& o = op.options();
  const bool no_diffusion = !op.field().has_diffusion() || o.diffusion_scale == 0.0;
  return no_diffusion && o.zeroth_order == 0.0 && norm(o.shift, op.grid().dim()) == 0.0;
}

// Exact solution of a |eta|^p = rhs at one node given its neighbors, where
// eta_k = max(u - min(neighbors along k), 0) / h.
double eikonal_local(const SchemeOperator& op, std::span<const double> u, std::size_t node, double rhs) {
  const Grid& g = op.grid();
  const int d = g.dim();
  std::array<double, 3> m{};
  int count = 0;
  for (int a = 0; a < d; ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (int dir : {-1, 1}) {
      const auto j = g.neighbor(node, a, dir);
      if (j != Grid::npos) best = std::min(best, u[j]);
    }
    if (std::isfinite(best)) m[count++] = best;
  }
  if (count == 0) return u[node];
  std::sort(m.begin(), m.begin() + count);
  const double r = rhs > 0.0 ? g.h() * std::pow(rhs / op.a_at(node), 1.0 / op.field().p()) : 0.0;
  double s1 = 0.0, s2 = 0.0, v = m[0] + r;
  for (int j = 1; j <= count; ++j) {
    s1 += m[j - 1];
    s2 += m[j - 1] * m[j - 1];
    const double disc = s1 * s1 - j * (s2 - r * r);
    v = (s1 + std::sqrt(std::max(disc, 0.0))) / j;
    if (j == count || v <= m[j]) break;
  }
  return v;
}

// Root of the (nondecreasing) map v -> apply(u with u[node] = v) - rhs.
double generic_local(const SchemeOperator& op, std::span<double> u, std::size_t node, double rhs, double bound,
                     double ftol) {
  const double v0 = u[node];
  auto F = [&](double v) {
    u[node] = v;
    return op.apply(u, node) - rhs;
  };
  const double f0 = F(v0);
  if (std::abs(f0) <= ftol) {
    u[node] = v0;
    return v0;
  }
  const double dir = f0 > 0 ? -1.0 : 1.0;
  double step = std::max(std::abs(f0) / bound, 1e-12 * (1.0 + std::abs(v0)));
  double a = v0, fa = f0, b = v0 + dir * step, fb = F(b);
  for (int k = 0; k < 200 && (fb > 0) == (f0 > 0) && fb != 0.0; ++k) {
    a = b, fa = fb;
    step *= 2.0;
    b = v0 + dir * step;
    fb = F(b);
  }
  if ((fb > 0) == (f0 > 0) && fb != 0.0) fail(ErrorCode::NonConvergence, "local solve could not bracket a root");
  // Illinois variant of regula falsi on [a, b] with fa, fb of opposite signs.
  int side = 0;
  double c = b, fc = fb;
  for (int k = 0; k < 100; ++k) {
    if (std::abs(fc) <= ftol || std::abs(b - a) <= 1e-14 * (1.0 + std::abs(c))) break;
    c = (a * fb - b * fa) / (fb - fa);
    if (!(c > std::min(a, b) && c < std::max(a, b))) c = 0.5 * (a + b);
    fc = F(c);
    if ((fc > 0) == (fb > 0)) {
      b = c, fb = fc;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = c, fa = fc;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
  }
  u[node] = v0;
  return c;
}

double residual_norm(const SchemeOperator& op, std::span<const double> u, double rhs, std::vector<double>* r) {
  const Grid& g = op.grid();
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.unknown(i)) {
      if (r) (*r)[i] = 0.0;
      continue;
    }
    const double v = op.apply(u, i) - rhs;
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "non-finite residual");
    if (r) (*r)[i] = v;
    worst = std::max(worst, std::abs(v));
  }
  return worst;
}

std::string history_tail(const std::vector<double>& h) {
  std::ostringstream os;
  os << "residual history (tail):";
  const std::size_t from = h.size() > 8 ? h.size() - 8 : 0;
  for (std::size_t i = from; i < h.size(); ++i) os << ' ' << h[i];
  return os.str();
}

// Visits every node once, axis a running backwards when bit a of `order` is set.
template <class Fn>
void sweep_order(const Grid& g, unsigned order, Fn&& fn) {
  const auto& n = g.extents();
  std::array<int, 3> m{};
  for (int k = 0; k < n[2]; ++k) {
    m[2] = (order & 4u) ? n[2] - 1 - k : k;
    for (int j = 0; j < n[1]; ++j) {
      m[1] = (order & 2u) ? n[1] - 1 - j : j;
      for (int i = 0; i < n[0]; ++i) {
        m[0] = (order & 1u) ? n[0] - 1 - i : i;
        fn(g.index(m));
      }
    }
  }
}

}  // namespace

double discrete_lipschitz(const Grid& grid, std::span<const double> u) {
  double worst = 0.0;
  const double h = grid.h();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!grid.unknown(i)) continue;
    double s = 0.0;
    bool full = true;
    for (int a = 0; a < grid.dim() && full; ++a) {
      double best = 0.0;
      for (int dir : {-1, 1}) {
        const auto j = grid.neighbor(i, a, dir);
        if (j == Grid::npos) {
          full = false;
          break;
        }
        best = std::max(best, std::abs(u[j] - u[i]) / h);
      }
      s += best * best;
    }
    if (full) worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

StationaryResult solve_stationary(const SchemeOperator& op, std::vector<double> init, double rhs,
                                  const SolverConfig& cfg) {
  const Grid& g = op.grid();
  require(init.size() == g.size(), "initial guess does not match the grid");
  require(cfg.tol > 0.0, "solver tolerance must be positive");
  require(cfg.cfl > 0.0 && cfg.cfl <= 1.0, "cfl must lie in (0, 1]");
  for (double v : init)
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "non-finite initial guess");

  StationaryResult res;
  const bool diffusive = op.field().has_diffusion() && op.options().diffusion_scale != 0.0;
  const bool sweep =
      cfg.method == SolverMethod::Sweeping || (cfg.method == SolverMethod::Auto && !diffusive);
  res.swept = sweep;
  std::vector<double> u = std::move(init);
  const double shift = norm(op.options().shift, g.dim());
  auto lip_now = [&] { return discrete_lipschitz(g, u) + shift; };
  const double slack = 1e-12;

  if (sweep) {
    const bool closed = is_eikonal(op);
    const unsigned orders = 1u << g.dim();
    const double ftol = 1e-3 * cfg.tol;
    double bound = op.center_coefficient_bound(lip_now());
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
      const double r = residual_norm(op, u, rhs, nullptr);
      if (it % cfg.history_stride == 0) res.history.push_back(r);
      if (r <= cfg.tol) {
        res.residual_norm = r;
        res.iters = it;
        res.converged = true;
        res.values = std::move(u);
        return res;
      }
      sweep_order(g, static_cast<unsigned>(it % orders), [&](std::size_t i) {
        if (!g.unknown(i)) return;
        const double v = closed ? eikonal_local(op, u, i, rhs) : generic_local(op, u, i, rhs, bound, ftol);
        if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "non-finite value during sweep");
        if (v > u[i] + slack * (1.0 + std::abs(u[i]))) res.monotone_descent = false;
        u[i] = v;
      });
      if (!closed && (it + 1) % 4 == 0) bound = op.center_coefficient_bound(lip_now());
    }
    res.residual_norm = residual_norm(op, u, rhs, nullptr);
    fail(ErrorCode::NonConvergence, "sweeping did not converge within max_iters; " + history_tail(res.history));
  }

  std::vector<double> r(g.size(), 0.0);
  double dtau = cfg.cfl / op.center_coefficient_bound(lip_now());
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const double rn = residual_norm(op, u, rhs, &r);
    if (it % cfg.history_stride == 0) res.history.push_back(rn);
    if (rn <= cfg.tol) {
      res.residual_norm = rn;
      res.iters = it;
      res.converged = true;
      res.values = std::move(u);
      return res;
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (r[i] < -1e-3 * cfg.tol) res.monotone_descent = false;
      u[i] -= dtau * r[i];
    }
    if ((it + 1) % cfg.lip_refresh == 0 && op.field().p() > 1.0)
      dtau = cfg.cfl / op.center_coefficient_bound(lip_now());
  }
  fail(ErrorCode::NonConvergence, "pseudo-time iteration did not converge within max_iters; " + history_tail(res.history));
}

}  // namespace homlab
