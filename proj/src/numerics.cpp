#include "homlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace homlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<Vec> make_direction_net(int d) {
  std::vector<Vec> net;
  for (int i = 0; i < d; ++i)
    for (int s : {1, -1}) {
      Vec e{};
      e[i] = s;
      net.push_back(e);
    }
  const double r = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          Vec e{};
          e[i] = si * r;
          e[j] = sj * r;
          net.push_back(e);
        }
  return net;
}

}  // namespace

std::vector<double> sample_field(const CoefficientField& field, const Grid& grid, double coord_scale) {
  require(field.dim() == grid.dim(), "field and grid dimensions differ");
  std::vector<double> a(grid.size());
  const double side = grid.periodic() ? grid.side(0) * coord_scale : 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Vec x = grid.coords(i);
    for (int k = 0; k < grid.dim(); ++k) x[k] *= coord_scale;
    a[i] = grid.periodic() ? field.a_wrapped(x, side) : field.a(x);
    if (!std::isfinite(a[i])) fail(ErrorCode::NonFinite, "non-finite field value");
  }
  return a;
}

SchemeOperator::SchemeOperator(const CoefficientField& field, std::shared_ptr<const Grid> grid, SchemeOptions opts)
    : field_(&field), grid_(std::move(grid)), opts_(opts) {
  eps_reg_ = opts_.eps_reg > 0.0 ? opts_.eps_reg : grid_->h();
  a_ = sample_field(field, *grid_, opts_.coord_scale);
  net_ = make_direction_net(grid_->dim());
  const auto kind = field.descriptor().diffusion;
  direction_dependent_ = field.has_diffusion() && kind != DiffusionKind::Isotropic;
  if (field.has_diffusion() && !direction_dependent_) fixed_A_ = field.diffusion(Vec{1.0, 0.0, 0.0});
}

Vec SchemeOperator::upwind_gradient(std::span<const double> u, std::size_t node) const {
  const Grid& g = *grid_;
  const double h = g.h();
  Vec out{};
  for (int a = 0; a < g.dim(); ++a) {
    const double xi = opts_.shift[a];
    const auto im = g.neighbor(node, a, -1);
    const auto ip = g.neighbor(node, a, +1);
    const double back = im == Grid::npos ? kNegInf : xi + (u[node] - u[im]) / h;
    const double fwd = ip == Grid::npos ? kNegInf : -(xi + (u[ip] - u[node]) / h);
    if (back >= fwd && back > 0.0)
      out[a] = back;
    else if (fwd > 0.0)
      out[a] = -fwd;
  }
  return out;
}

Vec SchemeOperator::centered_gradient(std::span<const double> u, std::size_t node) const {
  const Grid& g = *grid_;
  const double h = g.h();
  Vec out{};
  for (int a = 0; a < g.dim(); ++a) {
    const auto im = g.neighbor(node, a, -1);
    const auto ip = g.neighbor(node, a, +1);
    // At a missing side, the slope between the next two nodes keeps the
    // gradient independent of u[node], so the local equation stays monotone.
    double d = 0.0;
    if (im != Grid::npos && ip != Grid::npos) {
      d = (u[ip] - u[im]) / (2 * h);
    } else if (ip != Grid::npos) {
      const auto ip2 = g.neighbor(ip, a, +1);
      if (ip2 != Grid::npos) d = (u[ip2] - u[ip]) / h;
    } else if (im != Grid::npos) {
      const auto im2 = g.neighbor(im, a, -1);
      if (im2 != Grid::npos) d = (u[im] - u[im2]) / h;
    }
    out[a] = opts_.shift[a] + d;
  }
  return out;
}

double SchemeOperator::second_difference(std::span<const double> u, std::size_t node,
                                         const std::array<int, 3>& off) const {
  const Grid& g = *grid_;
  const std::array<int, 3> neg{-off[0], -off[1], -off[2]};
  const auto ip = g.offset_neighbor(node, off);
  const auto im = g.offset_neighbor(node, neg);
  const double h2 = g.h() * g.h();
  if (ip != Grid::npos && im != Grid::npos) return (u[ip] - 2 * u[node] + u[im]) / h2;
  if (ip != Grid::npos) return 2 * (u[ip] - u[node]) / h2;
  if (im != Grid::npos) return 2 * (u[im] - u[node]) / h2;
  return 0.0;
}

double SchemeOperator::trace_term(const Mat& M, std::span<const double> u, std::size_t node) const {
  const int d = grid_->dim();
  bool dominant = true;
  for (int i = 0; i < d; ++i) {
    double off = 0.0;
    for (int j = 0; j < d; ++j)
      if (j != i) off += std::abs(M[i][j]);
    if (M[i][i] < off) dominant = false;
  }
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    std::array<int, 3> ei{0, 0, 0};
    ei[i] = 1;
    double wi = M[i][i];
    if (dominant)
      for (int j = 0; j < d; ++j)
        if (j != i) wi -= std::abs(M[i][j]);
    if (wi != 0.0) acc += wi * second_difference(u, node, ei);
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double mij = M[i][j];
      if (mij == 0.0) continue;
      std::array<int, 3> pp{0, 0, 0}, pm{0, 0, 0};
      pp[i] = 1, pp[j] = 1;
      pm[i] = 1, pm[j] = -1;
      const double dpp = second_difference(u, node, pp);
      const double dpm = second_difference(u, node, pm);
      if (dominant)
        acc += (mij > 0 ? mij * dpp : -mij * dpm);
      else
        acc += 0.5 * mij * (dpp - dpm);
    }
  return acc;
}

double SchemeOperator::diffusion_term(std::span<const double> u, std::size_t node) const {
  if (!field_->has_diffusion()) return 0.0;
  if (!direction_dependent_) return trace_term(fixed_A_, u, node);
  const int d = grid_->dim();
  const Vec g = centered_gradient(u, node);
  const double gn = norm(g, d);
  // Degeneracy is judged against the slopes one cell out (eps_reg in range
  // lengths): invariant under u -> c u, and u[node] stays out of the switch so
  // the center coefficient bound still holds.
  const Grid& gr = *grid_;
  double slope = 0.0;
  for (int a = 0; a < d; ++a)
    for (int dir : {-1, 1}) {
      const auto j = gr.neighbor(node, a, dir);
      const auto k = j == Grid::npos ? Grid::npos : gr.neighbor(j, a, dir);
      if (k != Grid::npos) slope = std::max(slope, std::abs(opts_.shift[a] + dir * (u[k] - u[j]) / gr.h()));
    }
  const double thr = eps_reg_ * slope;
  if (gn > 0.0 && gn >= 2 * thr) return trace_term(field_->diffusion(normalized(g, d)), u, node);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& e : net_) {
    const double v = trace_term(field_->diffusion(e), u, node);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double env = 0.5 * (lo + hi);
  if (opts_.envelope == EnvelopeRule::Lower) env = lo;
  if (opts_.envelope == EnvelopeRule::Upper) env = hi;
  if (gn == 0.0 || gn < thr) return env;
  // Linear hand-off on [thr, 2 thr]: a hard switch makes the operator jump in
  // the gradient and pseudo-time can cycle between the two branches.
  const double w = gn / thr - 1.0;
  return w * trace_term(field_->diffusion(normalized(g, d)), u, node) + (1.0 - w) * env;
}

double SchemeOperator::hamiltonian_term(std::span<const double> u, std::size_t node) const {
  const Vec eta = upwind_gradient(u, node);
  const double n = norm(eta, grid_->dim());
  if (n == 0.0) return 0.0;
  const double p = field_->p();
  return a_[node] * (p == 1.0 ? n : std::pow(n, p));
}

double SchemeOperator::apply(std::span<const double> u, std::size_t node) const {
  double v = hamiltonian_term(u, node);
  if (opts_.zeroth_order != 0.0) v += opts_.zeroth_order * u[node];
  if (field_->has_diffusion() && opts_.diffusion_scale != 0.0) v -= opts_.diffusion_scale * diffusion_term(u, node);
  return v;
}

double SchemeOperator::center_coefficient_bound(double lip) const {
  const int d = grid_->dim();
  const double h = grid_->h();
  const double p = field_->p();
  const double slope = p * field_->a_max() * std::pow(std::max(1.0, lip), p - 1.0) * std::sqrt(double(d)) / h;
  const double diff = 2.0 * opts_.diffusion_scale * field_->max_trace() / (h * h);
  return opts_.zeroth_order + slope + diff;
}

Vec upwind_gradient(const GridFunction& u, std::size_t node) {
  // Field values do not enter the gradient; any positive field will do.
  static const CoefficientField unit1 = make_constant_field(1.0, 1);
  static const CoefficientField unit2 = make_constant_field(1.0, 2);
  static const CoefficientField unit3 = make_constant_field(1.0, 3);
  const int d = u.grid->dim();
  const CoefficientField& f = d == 1 ? unit1 : (d == 2 ? unit2 : unit3);
  SchemeOperator op(f, u.grid);
  return op.upwind_gradient(u.values, node);
}

double diffusion_term(const GridFunction& u, const CoefficientField& field, std::size_t node, double eps_reg) {
  SchemeOptions o;
  o.eps_reg = eps_reg;
  SchemeOperator op(field, u.grid, o);
  return op.diffusion_term(u.values, node);
}

GridFunction scheme_residual(const GridFunction& u, const SchemeOperator& op, double rhs) {
  GridFunction r(u.grid, 0.0);
  const Grid& g = *u.grid;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.unknown(i)) r[i] = op.apply(u.values, i) - rhs;
  return r;
}

GridFunction scheme_residual(const GridFunction& u, const CoefficientField& field, double mu, double eps_reg) {
  SchemeOptions o;
  o.eps_reg = eps_reg;
  SchemeOperator op(field, u.grid, o);
  return scheme_residual(u, op, mu);
}

}  // namespace homlab
