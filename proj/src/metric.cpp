#include "homlab/metric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace homlab {

namespace {

std::string kind_name(TargetSet::Kind k) {
  switch (k) {
    case TargetSet::Kind::HalfSpace: return "half-space";
    case TargetSet::Kind::BallUnion: return "ball-union";
    case TargetSet::Kind::Box: return "box";
  }
  return "half-space";
}

nlohmann::json vec_json(const Vec& v, int dim) {
  auto a = nlohmann::json::array();
  for (int i = 0; i < dim; ++i) a.push_back(v[i]);
  return a;
}

Vec json_vec(const nlohmann::json& j) {
  Vec v{};
  for (std::size_t i = 0; i < j.size() && i < 3; ++i) v[i] = j[i].get<double>();
  return v;
}

MetricSolution solve_impl(const CoefficientField& field, double mu, const TargetSet& target,
                          std::shared_ptr<const Grid> grid, const SolverConfig& cfg,
                          const std::function<double(const Vec&)>* boundary) {
  if (!(mu > 0.0) || !std::isfinite(mu)) fail(ErrorCode::InvalidArgument, "mu must be positive");
  require(grid && field.dim() == grid->dim(), "field and grid dimensions differ");
  const int d = grid->dim();

  Grid g = *grid;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.kind(i) != NodeKind::Exterior && target.contains(g.coords(i), d)) g.set_kind(i, NodeKind::Dirichlet);
  if (g.count(NodeKind::Dirichlet) == 0) fail(ErrorCode::InvalidArgument, "target does not intersect the grid");
  auto gp = std::make_shared<const Grid>(std::move(g));

  SchemeOptions opts;
  opts.eps_reg = cfg.eps_reg;
  opts.envelope = cfg.envelope;
  SchemeOperator op(field, gp, opts);

  // (mu/c0)^{1/p} dist is a supersolution slope; boundary data shift it up.
  const double slope = std::pow(mu / field.bounds().c0, 1.0 / field.p());
  std::vector<double> init(gp->size());
  double top = 0.0;
  if (boundary)
    for (std::size_t i = 0; i < gp->size(); ++i)
      if (gp->kind(i) == NodeKind::Dirichlet) top = std::max(top, (*boundary)(gp->coords(i)));
  for (std::size_t i = 0; i < gp->size(); ++i) {
    const Vec x = gp->coords(i);
    if (gp->kind(i) == NodeKind::Dirichlet)
      init[i] = boundary ? (*boundary)(x) : 0.0;
    else
      init[i] = top + slope * std::max(target.distance(x, d), gp->h());
  }

  auto res = solve_stationary(op, std::move(init), mu, cfg);
  MetricSolution sol;
  sol.m = GridFunction(gp);
  sol.m.values = std::move(res.values);
  sol.mu = mu;
  sol.target = target;
  sol.field = field.descriptor();
  sol.residual_norm = res.residual_norm;
  sol.iters = res.iters;
  sol.lip_est = discrete_lipschitz(*gp, sol.m.values);
  sol.monotone_descent = res.monotone_descent;
  sol.swept = res.swept;
  sol.residual_history = std::move(res.history);
  return sol;
}

}  // namespace

TargetSet TargetSet::half_space(const Vec& e, double offset) {
  TargetSet t;
  t.kind = Kind::HalfSpace;
  const double n = norm(e, 3);
  require(n > 0.0, "half-space normal must be nonzero");
  for (int i = 0; i < 3; ++i) t.e[i] = e[i] / n;
  t.offset = offset;
  return t;
}

TargetSet TargetSet::ball_union(std::vector<Vec> centers, double radius) {
  require(!centers.empty(), "ball union needs at least one center");
  require(radius >= 1.0, "ball radius must be >= 1 (interior unit-ball condition)");
  TargetSet t;
  t.kind = Kind::BallUnion;
  t.centers = std::move(centers);
  t.radius = radius;
  return t;
}

TargetSet TargetSet::boxed(const homlab::Box& b) {
  TargetSet t;
  t.kind = Kind::Box;
  t.box = b;
  return t;
}

bool TargetSet::contains(const Vec& x, int dim) const {
  const double tol = 1e-12;
  switch (kind) {
    case Kind::HalfSpace: return dot(x, e, dim) <= -offset + tol;
    case Kind::BallUnion:
      for (const auto& c : centers) {
        Vec r{};
        for (int i = 0; i < dim; ++i) r[i] = x[i] - c[i];
        if (norm(r, dim) <= radius + tol) return true;
      }
      return false;
    case Kind::Box: return box.contains(x, dim, tol);
  }
  return false;
}

double TargetSet::distance(const Vec& x, int dim) const {
  switch (kind) {
    case Kind::HalfSpace: return std::max(0.0, dot(x, e, dim) + offset);
    case Kind::BallUnion: {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) {
        Vec r{};
        for (int i = 0; i < dim; ++i) r[i] = x[i] - c[i];
        best = std::min(best, std::max(0.0, norm(r, dim) - radius));
      }
      return best;
    }
    case Kind::Box: {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double out = std::max({box.lo[i] - x[i], 0.0, x[i] - box.hi[i]});
        s += out * out;
      }
      return std::sqrt(s);
    }
  }
  return 0.0;
}

nlohmann::json to_json(const TargetSet& t, int dim) {
  nlohmann::json j;
  j["kind"] = kind_name(t.kind);
  switch (t.kind) {
    case TargetSet::Kind::HalfSpace:
      j["normal"] = vec_json(t.e, dim);
      j["offset_len"] = t.offset;
      break;
    case TargetSet::Kind::BallUnion: {
      auto c = nlohmann::json::array();
      for (const auto& v : t.centers) c.push_back(vec_json(v, dim));
      j["centers_len"] = c;
      j["radius_len"] = t.radius;
      break;
    }
    case TargetSet::Kind::Box:
      j["lo_len"] = vec_json(t.box.lo, dim);
      j["hi_len"] = vec_json(t.box.hi, dim);
      break;
  }
  return j;
}

TargetSet target_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "half-space") return TargetSet::half_space(json_vec(j.at("normal")), j.value("offset_len", 0.0));
    if (kind == "ball-union") {
      std::vector<Vec> c;
      for (const auto& v : j.at("centers_len")) c.push_back(json_vec(v));
      return TargetSet::ball_union(std::move(c), j.value("radius_len", 1.0));
    }
    if (kind == "box") return TargetSet::boxed(Box{json_vec(j.at("lo_len")), json_vec(j.at("hi_len"))});
    fail(ErrorCode::Config, "unknown target kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, std::string("malformed target: ") + e.what());
  }
}

MetricSolution solve_metric(const CoefficientField& field, double mu, const TargetSet& target,
                            std::shared_ptr<const Grid> grid, const SolverConfig& cfg) {
  return solve_impl(field, mu, target, std::move(grid), cfg, nullptr);
}

std::shared_ptr<const Grid> planar_grid(int dim, double h, const Vec& e_in, double s, double depth, double width) {
  require(h > 0.0, "grid spacing must be positive");
  require(depth > 0.0, "slab depth must be positive");
  if (width <= 0.0) width = 2.0 * depth;
  const Vec e = normalized(e_in, dim);
  const double a = -s - 2.0 * h, b = depth;
  std::array<int, 3> n{1, 1, 1};
  Vec origin{};
  for (int k = 0; k < dim; ++k) {
    const double lateral = dim == 1 ? 0.0 : 0.5 * width * std::sqrt(std::max(0.0, 1.0 - e[k] * e[k]));
    const double lo = std::min(a * e[k], b * e[k]) - lateral;
    const double hi = std::max(a * e[k], b * e[k]) + lateral;
    const long ilo = static_cast<long>(std::floor(lo / h + 1e-9));
    const long ihi = static_cast<long>(std::ceil(hi / h - 1e-9));
    origin[k] = ilo * h;
    n[k] = static_cast<int>(std::max(3L, ihi - ilo + 1));
  }
  Grid g = Grid::half_space(dim, h, n, origin, e, -s);
  // Box corners outside the slab are not part of the domain.
  const double tol = 1e-9 * h;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.kind(i) == NodeKind::Dirichlet) continue;
    const Vec x = g.coords(i);
    const double along = dot(x, e, dim);
    Vec perp{};
    for (int k = 0; k < dim; ++k) perp[k] = x[k] - along * e[k];
    if (along > depth + tol || norm(perp, dim) > 0.5 * width + tol) g.set_kind(i, NodeKind::Exterior);
  }
  return std::make_shared<const Grid>(std::move(g));
}

MetricSolution solve_planar_metric(const CoefficientField& field, double mu, const Vec& e, double s,
                                   std::shared_ptr<const Grid> grid, const SolverConfig& cfg) {
  return solve_impl(field, mu, TargetSet::half_space(normalized(e, field.dim()), s), std::move(grid), cfg, nullptr);
}

MetricSolution solve_planar_metric_with_data(const CoefficientField& field, double mu, const Vec& e, double s,
                                             std::shared_ptr<const Grid> grid, const SolverConfig& cfg,
                                             const std::function<double(const Vec&)>& boundary) {
  return solve_impl(field, mu, TargetSet::half_space(normalized(e, field.dim()), s), std::move(grid), cfg,
                    &boundary);
}

double value_at(const MetricSolution& sol, const Vec& x) { return interpolate(sol.m, x); }

std::vector<std::uint8_t> sublevel_set(const MetricSolution& sol, double t) {
  require(t >= 0.0, "sublevel threshold must be nonnegative");
  std::vector<std::uint8_t> out(sol.m.size());
  const Grid& g = *sol.m.grid;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.kind(i) != NodeKind::Exterior && sol.m[i] <= t;
  return out;
}

CalibratedConstants calibrate_constants(const MetricSolution& sol) {
  const Grid& g = *sol.m.grid;
  const int d = g.dim();
  CalibratedConstants c;
  c.L_est = discrete_lipschitz(g, sol.m.values);
  double l_far = std::numeric_limits<double>::infinity(), l_any = l_far;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.unknown(i)) continue;
    const double dist = sol.target.distance(g.coords(i), d);
    if (dist <= 0.0) continue;
    const double r = sol.m[i] / dist;
    l_any = std::min(l_any, r);
    if (dist >= 2.0) l_far = std::min(l_far, r);
  }
  c.l_est = std::isfinite(l_far) ? l_far : (std::isfinite(l_any) ? l_any : 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.kind(i) == NodeKind::Exterior) continue;
    const double dist = sol.target.distance(g.coords(i), d);
    const double m = sol.m[i];
    c.sandwich_violation = std::max({c.sandwich_violation, c.l_est * dist - 2.0 - m, m - c.L_est * dist});
  }
  return c;
}

void save_metric(const MetricSolution& sol, const std::filesystem::path& stem) {
  const int d = sol.m.grid->dim();
  const auto c = calibrate_constants(sol);
  nlohmann::json side;
  side["mu"] = sol.mu;
  side["target"] = to_json(sol.target, d);
  side["field"] = to_json(sol.field);
  side["residual_norm"] = sol.residual_norm;
  side["iters"] = sol.iters;
  side["lip_est"] = sol.lip_est;
  side["l_est"] = c.l_est;
  side["L_est"] = c.L_est;
  side["monotone_descent"] = sol.monotone_descent;
  side["constants_note"] = "l_est and L_est are calibrated from this solution";
  write_dump(sol.m, stem, side);
}

MetricSolution load_metric(const std::filesystem::path& stem) {
  GridFunction raw = read_dump(stem);
  std::filesystem::path hdr = stem;
  hdr += ".json";
  std::ifstream in(hdr);
  nlohmann::json j;
  in >> j;
  const auto& side = j.at("sidecar");
  MetricSolution sol;
  sol.mu = side.at("mu").get<double>();
  sol.target = target_from_json(side.at("target"));
  sol.field = field_descriptor_from_json(side.at("field"));
  sol.residual_norm = side.at("residual_norm").get<double>();
  sol.iters = side.at("iters").get<std::size_t>();
  sol.lip_est = side.at("lip_est").get<double>();
  sol.monotone_descent = side.at("monotone_descent").get<bool>();
  sol.m = std::move(raw);
  return sol;
}

}  // namespace homlab
