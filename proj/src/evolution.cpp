#include "homlab/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace homlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const char* kind_name(InitialCondition::Kind k) {
  switch (k) {
    case InitialCondition::Kind::Zero: return "zero";
    case InitialCondition::Kind::Plane: return "plane";
    case InitialCondition::Kind::Cone: return "cone";
    case InitialCondition::Kind::SmoothCone: return "smooth-cone";
    case InitialCondition::Kind::Wave: return "wave";
  }
  return "zero";
}

double dist(const Vec& x, const Vec& c, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += (x[k] - c[k]) * (x[k] - c[k]);
  return std::sqrt(s);
}

// Observation box [-ceil(R/h) h, ceil(R/h) h]^d.
std::shared_ptr<const Grid> observation_grid(int dim, double h, double R) {
  const int half = static_cast<int>(std::ceil(R / h - 1e-9));
  std::array<int, 3> n{1, 1, 1};
  Vec origin{};
  for (int k = 0; k < dim; ++k) n[k] = 2 * half + 1, origin[k] = -half * h;
  return std::make_shared<const Grid>(Grid::box(dim, h, n, origin));
}

// Compute box with the origin at a node and `half` cells on each side.
std::shared_ptr<const Grid> compute_grid(int dim, double h, int half) {
  std::array<int, 3> n{1, 1, 1};
  Vec origin{};
  for (int k = 0; k < dim; ++k) n[k] = 2 * half + 1, origin[k] = -half * h;
  return std::make_shared<const Grid>(Grid::box(dim, h, n, origin));
}

GridFunction restrict_to(const std::vector<double>& u, const Grid& big, std::shared_ptr<const Grid> obs) {
  GridFunction out(obs);
  const int shift = (big.extents()[0] - obs->extents()[0]) / 2;
  for (std::size_t i = 0; i < obs->size(); ++i) {
    auto m = obs->multi(i);
    for (int k = 0; k < obs->dim(); ++k) m[k] += shift;
    out[i] = u[big.index(m)];
  }
  return out;
}

double measured_lipschitz(const EvolutionRun& run) {
  double lip = 0.0;
  for (std::size_t k = 0; k < run.snapshots.size(); ++k) {
    const auto& s = run.snapshots[k];
    lip = std::max(lip, discrete_lipschitz(*s.grid, s.values));
    if (k > 0) {
      const double dt = run.times[k] - run.times[k - 1];
      for (std::size_t i = 0; i < s.size(); ++i)
        lip = std::max(lip, std::abs(s[i] - run.snapshots[k - 1][i]) / dt);
    }
  }
  return lip;
}

void validate_common(int dim, double T, double R, const EvolutionConfig& cfg) {
  if (dim < 1 || dim > 2) fail(ErrorCode::InvalidArgument, "evolution runs support dimension 1 or 2");
  if (!(T > 0.0 && R > 0.0)) fail(ErrorCode::InvalidArgument, "T and R must be positive");
  if (!(cfg.h > 0.0)) fail(ErrorCode::InvalidArgument, "h must be positive");
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) fail(ErrorCode::InvalidArgument, "cfl must lie in (0, 1]");
  if (cfg.checkpoints < 1) fail(ErrorCode::InvalidArgument, "checkpoints must be >= 1");
  if (!(cfg.pad_factor >= 1.0)) fail(ErrorCode::InvalidArgument, "pad_factor must be >= 1");
}

std::size_t step_count(double T, double dt_max, int checkpoints) {
  const double per = T / checkpoints;
  return static_cast<std::size_t>(checkpoints) * static_cast<std::size_t>(std::ceil(per / dt_max - 1e-12));
}

}  // namespace

double InitialCondition::operator()(const Vec& x, int dim) const {
  switch (kind) {
    case Kind::Zero: return 0.0;
    case Kind::Plane: return dot(x, e, dim) + offset;
    case Kind::Cone: return dist(x, center, dim);
    case Kind::SmoothCone: {
      const double r = dist(x, center, dim);
      return std::sqrt(r * r + radius * radius);
    }
    case Kind::Wave: return offset + amplitude * std::sin(kTwoPi * dot(x, e, dim) / wavelength);
  }
  return 0.0;
}

double InitialCondition::lipschitz(int dim) const {
  switch (kind) {
    case Kind::Zero: return 0.0;
    case Kind::Plane: return norm(e, dim);
    case Kind::Cone:
    case Kind::SmoothCone: return 1.0;
    case Kind::Wave: return std::abs(amplitude) * kTwoPi * norm(e, dim) / wavelength;
  }
  return 0.0;
}

double InitialCondition::second_derivative_bound(int dim) const {
  switch (kind) {
    case Kind::Zero:
    case Kind::Plane: return 0.0;
    case Kind::Cone: return std::numeric_limits<double>::infinity();
    case Kind::SmoothCone: return 1.0 / radius;
    case Kind::Wave: {
      const double k = kTwoPi * norm(e, dim) / wavelength;
      return std::abs(amplitude) * k * k;
    }
  }
  return 0.0;
}

nlohmann::json to_json(const InitialCondition& g, int dim) {
  nlohmann::json j;
  j["kind"] = kind_name(g.kind);
  switch (g.kind) {
    case InitialCondition::Kind::Zero: break;
    case InitialCondition::Kind::Plane:
      j["normal"] = std::vector<double>(g.e.begin(), g.e.begin() + dim);
      j["offset"] = g.offset;
      break;
    case InitialCondition::Kind::SmoothCone: j["radius_len"] = g.radius; [[fallthrough]];
    case InitialCondition::Kind::Cone: j["center_len"] = std::vector<double>(g.center.begin(), g.center.begin() + dim); break;
    case InitialCondition::Kind::Wave:
      j["normal"] = std::vector<double>(g.e.begin(), g.e.begin() + dim);
      j["offset"] = g.offset;
      j["amplitude"] = g.amplitude;
      j["wavelength_len"] = g.wavelength;
      break;
  }
  return j;
}

InitialCondition initial_condition_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "initial condition must be an object");
  static const std::vector<std::string> allowed{"kind", "normal", "offset", "center_len", "radius_len", "amplitude",
                                                "wavelength_len"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(ErrorCode::Config, "unknown initial-condition key '" + it.key() + "'");
  InitialCondition g;
  const auto kind = j.at("kind").get<std::string>();
  bool found = false;
  for (auto k : {InitialCondition::Kind::Zero, InitialCondition::Kind::Plane, InitialCondition::Kind::Cone,
                 InitialCondition::Kind::SmoothCone, InitialCondition::Kind::Wave})
    if (kind == kind_name(k)) g.kind = k, found = true;
  if (!found) fail(ErrorCode::Config, "unknown initial-condition kind '" + kind + "'");
  if (j.contains("normal")) g.e = to_vec(j["normal"].get<std::vector<double>>());
  if (j.contains("center_len")) g.center = to_vec(j["center_len"].get<std::vector<double>>());
  g.offset = j.value("offset", 0.0);
  g.radius = j.value("radius_len", 1.0);
  g.amplitude = j.value("amplitude", 1.0);
  g.wavelength = j.value("wavelength_len", 1.0);
  if (g.kind == InitialCondition::Kind::SmoothCone && !(g.radius > 0.0))
    fail(ErrorCode::Config, "smooth-cone radius_len must be positive");
  if (g.kind == InitialCondition::Kind::Wave && !(g.wavelength > 0.0))
    fail(ErrorCode::Config, "wave wavelength_len must be positive");
  return g;
}

EvolutionRun solve_oscillatory(const CoefficientField& field, double epsilon, const InitialCondition& g, double T,
                               double R, const EvolutionConfig& cfg) {
  const int dim = field.dim();
  validate_common(dim, T, R, cfg);
  if (!(epsilon > 0.0 && epsilon <= 1.0)) fail(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1]");
  const double h = cfg.cells_per_period > 0.0 ? std::min(cfg.h, epsilon / cfg.cells_per_period) : cfg.h;
  const auto& b = field.bounds();
  const double p = field.p();
  // Comparison with x-independent sub/supersolutions bounds |Du| by this.
  const double lip_u = std::max(g.lipschitz(dim) * std::pow(b.C0 / b.c0, 1.0 / p), 1e-12);
  const double speed = p * b.C0 * std::pow(lip_u, p - 1.0);

  SchemeOptions opts;
  opts.coord_scale = 1.0 / epsilon;
  opts.diffusion_scale = epsilon;
  const bool viscous = field.has_diffusion();

  // The center bound only depends on the grid spacing, so a 3-node probe grid suffices.
  const double bound = SchemeOperator(field, compute_grid(dim, h, 1), opts).center_coefficient_bound(lip_u);
  const std::size_t steps = step_count(T, cfg.cfl / bound, cfg.checkpoints);
  const double dt = T / steps;

  // First order: the numerical domain of dependence (one cell per step) is
  // covered, so the boundary cannot touch B_R at all.
  double pad = speed * T + (viscous ? 2.0 * std::sqrt(epsilon * T) * b.C0 : 0.0);
  if (!viscous) pad = std::max(pad, steps * h);
  pad = pad * cfg.pad_factor + 2.0 * h;
  const int half = static_cast<int>(std::ceil((R + pad) / h - 1e-9));
  const auto grid = compute_grid(dim, h, half);
  const SchemeOperator op(field, grid, opts);
  const auto obs = observation_grid(dim, h, R);

  EvolutionRun run;
  run.epsilon = epsilon;
  run.g = g;
  run.T = T;
  run.R = R;
  run.h = h;
  run.dt = dt;
  run.steps = steps;
  run.pad = pad;
  std::vector<double> u(grid->size()), next(grid->size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = g(grid->coords(i), dim);
  run.times.push_back(0.0);
  run.snapshots.push_back(restrict_to(u, *grid, obs));
  const std::size_t per = steps / cfg.checkpoints;
  for (std::size_t n = 1; n <= steps; ++n) {
    for (std::size_t i = 0; i < u.size(); ++i) next[i] = u[i] - dt * op.apply(u, i);
    u.swap(next);
    if (n % per == 0) {
      for (double v : u)
        if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "non-finite value in the oscillatory run");
      if (p > 1.0 && dt * op.center_coefficient_bound(discrete_lipschitz(*grid, u)) > 1.0 + 1e-9)
        fail(ErrorCode::Threshold, "CFL violated: the gradient outgrew the a priori bound");
      run.times.push_back(T * static_cast<double>(n / per) / cfg.checkpoints);
      run.snapshots.push_back(restrict_to(u, *grid, obs));
    }
  }
  run.lip = measured_lipschitz(run);
  return run;
}

HbarInterpolant::HbarInterpolant(const EffectiveHamiltonianEstimate& est) : dim_(est.dim) {
  require(dim_ == 1 || dim_ == 2, "H interpolation supports dimension 1 or 2");
  for (const auto& pt : est.points) {
    const double r = norm(pt.xi, dim_);
    if (r == 0.0) continue;
    const double ang = dim_ == 1 ? (pt.xi[0] > 0 ? 0.0 : std::numbers::pi) : std::atan2(pt.xi[1], pt.xi[0]);
    auto it = std::find_if(rays_.begin(), rays_.end(), [&](const Ray& ray) { return std::abs(ray.angle - ang) < 1e-9; });
    if (it == rays_.end()) {
      rays_.push_back({ang, {0.0}, {0.0}});
      it = rays_.end() - 1;
    }
    it->r.push_back(r);
    it->h.push_back(pt.value);
  }
  require(rays_.size() >= (dim_ == 1 ? 2u : 3u), "H table needs both signs in 1D and >= 3 directions in 2D");
  for (auto& ray : rays_) {
    std::vector<std::size_t> idx(ray.r.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return ray.r[a] < ray.r[b]; });
    Ray sorted{ray.angle, {}, {}};
    for (auto i : idx) sorted.r.push_back(ray.r[i]), sorted.h.push_back(ray.h[i]);
    for (std::size_t k = 1; k < sorted.r.size(); ++k)
      require(sorted.r[k] > sorted.r[k - 1], "duplicate magnitude along an H ray");
    ray = std::move(sorted);
  }
  std::sort(rays_.begin(), rays_.end(), [](const Ray& a, const Ray& b) { return a.angle < b.angle; });
  coverage_ = std::numeric_limits<double>::infinity();
  for (const auto& ray : rays_) coverage_ = std::min(coverage_, ray.r.back());
  finish();
}

HbarInterpolant::HbarInterpolant(int dim, std::function<double(const Vec&)> exact, double max_norm)
    : dim_(dim), exact_(std::move(exact)), coverage_(max_norm) {
  require(dim_ == 1 || dim_ == 2, "H interpolation supports dimension 1 or 2");
  require(max_norm > 0.0, "coverage must be positive");
  finish();
}

double HbarInterpolant::ray_eval(const Ray& ray, double r) const {
  if (r > ray.r.back() * (1 + 1e-12))
    fail(ErrorCode::ExtendTable, "|xi| = " + std::to_string(r) + " exceeds the sampled H range");
  auto it = std::upper_bound(ray.r.begin(), ray.r.end(), r);
  const std::size_t k = std::clamp<std::size_t>(it - ray.r.begin(), 1, ray.r.size() - 1);
  const double w = (r - ray.r[k - 1]) / (ray.r[k] - ray.r[k - 1]);
  return ray.h[k - 1] + w * (ray.h[k] - ray.h[k - 1]);
}

double HbarInterpolant::operator()(const Vec& xi) const {
  const double r = norm(xi, dim_);
  if (r == 0.0) return 0.0;
  if (exact_) {
    if (r > coverage_ * (1 + 1e-12))
      fail(ErrorCode::ExtendTable, "|xi| = " + std::to_string(r) + " exceeds the sampled H range");
    return exact_(xi);
  }
  if (dim_ == 1) return ray_eval(xi[0] > 0 ? rays_.front() : rays_.back(), r);
  const double ang = std::atan2(xi[1], xi[0]);
  const std::size_t n = rays_.size();
  std::size_t j = 0;
  while (j < n && rays_[j].angle <= ang) ++j;
  const Ray& hi = rays_[j % n];
  const Ray& lo = rays_[(j + n - 1) % n];
  double span = hi.angle - lo.angle, off = ang - lo.angle;
  if (span <= 0) span += kTwoPi;
  if (off < 0) off += kTwoPi;
  const double w = off / span;
  return (1 - w) * ray_eval(lo, r) + w * ray_eval(hi, r);
}

void HbarInterpolant::finish() {
  // Lipschitz bound and coordinate monotonicity, both checked on a net.
  const int n = dim_ == 1 ? 400 : 80;
  const double c = coverage_;
  const double step = c / n;
  double slope = 0.0;
  auto inside = [&](const Vec& x) { return norm(x, dim_) <= c * (1 - 1e-9); };
  const int jmax = dim_ == 2 ? n : 0;
  for (int i = -n; i <= n; ++i)
    for (int j = -jmax; j <= jmax; ++j) {
      const Vec x{i * step, j * step, 0.0};
      if (!inside(x)) continue;
      const double hx = (*this)(x);
      for (int a = 0; a < dim_; ++a) {
        Vec y = x;
        y[a] += step;
        if (!inside(y)) continue;
        const double hy = (*this)(y);
        slope = std::max(slope, std::abs(hy - hx) / step);
        // Moving away from the axis plane must not lower H.
        if (x[a] >= 0.0 && hy < hx - 1e-12 * (1 + std::abs(hx))) coord_monotone_ = false;
        Vec z = x;
        z[a] -= step;
        if (x[a] <= 0.0 && inside(z) && (*this)(z) < hx - 1e-12 * (1 + std::abs(hx))) coord_monotone_ = false;
      }
    }
  slope_ = std::max(slope * std::sqrt(static_cast<double>(dim_)), 1e-12);
}

EvolutionRun solve_homogenized(const HbarInterpolant& hbar, const InitialCondition& g, double T, double R,
                               const EvolutionConfig& cfg) {
  const int dim = hbar.dim();
  validate_common(dim, T, R, cfg);
  if (g.lipschitz(dim) > hbar.coverage() * (1 + 1e-12))
    fail(ErrorCode::ExtendTable, "the H table does not cover the gradient range of the initial data");
  const double h = cfg.h;
  const double speed = hbar.slope_bound();
  const std::size_t steps = step_count(T, cfg.cfl * h / (dim * speed), cfg.checkpoints);
  const double dt = T / steps;
  const double pad = std::max(speed * T, steps * h) * cfg.pad_factor + 2.0 * h;
  const int half = static_cast<int>(std::ceil((R + pad) / h - 1e-9));
  const auto grid = compute_grid(dim, h, half);
  const auto obs = observation_grid(dim, h, R);
  const bool upwind = hbar.coordinate_monotone();

  EvolutionRun run;
  run.g = g;
  run.T = T;
  run.R = R;
  run.h = h;
  run.dt = dt;
  run.steps = steps;
  run.pad = pad;
  std::vector<double> u(grid->size()), next(grid->size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = g(grid->coords(i), dim);
  run.times.push_back(0.0);
  run.snapshots.push_back(restrict_to(u, *grid, obs));

  auto numerical_h = [&](std::size_t i) {
    Vec xi{};
    double visc = 0.0;
    for (int a = 0; a < dim; ++a) {
      const auto jm = grid->neighbor(i, a, -1), jp = grid->neighbor(i, a, 1);
      const double inf = std::numeric_limits<double>::infinity();
      const double dm = jm != Grid::npos ? (u[i] - u[jm]) / h : -inf;
      const double dp = jp != Grid::npos ? (u[jp] - u[i]) / h : inf;
      if (upwind) {
        // Signed Rouy-Tourin selection: the larger of D^- and -D^+ wins if positive.
        if (dm <= 0.0 && -dp <= 0.0) xi[a] = 0.0;
        else xi[a] = dm >= -dp ? dm : dp;
      } else {
        const double l = std::isfinite(dm) ? dm : dp, r = std::isfinite(dp) ? dp : dm;
        xi[a] = 0.5 * (l + r);
        visc += 0.5 * speed * (r - l);
      }
    }
    return hbar(xi) - visc;
  };
  const std::size_t per = steps / cfg.checkpoints;
  for (std::size_t n = 1; n <= steps; ++n) {
    for (std::size_t i = 0; i < u.size(); ++i) next[i] = u[i] - dt * numerical_h(i);
    u.swap(next);
    if (n % per == 0) {
      run.times.push_back(T * static_cast<double>(n / per) / cfg.checkpoints);
      run.snapshots.push_back(restrict_to(u, *grid, obs));
    }
  }
  run.lip = measured_lipschitz(run);
  return run;
}

double sup_error(const EvolutionRun& osc, const EvolutionRun& hom) {
  if (!(osc.g == hom.g) || osc.T != hom.T || osc.R != hom.R || osc.times.size() != hom.times.size())
    fail(ErrorCode::InvalidArgument, "oscillatory and homogenized runs have mismatched configurations");
  if (osc.snapshots.front().grid->dim() != hom.snapshots.front().grid->dim())
    fail(ErrorCode::InvalidArgument, "oscillatory and homogenized runs differ in dimension");
  double worst = 0.0;
  for (std::size_t k = 0; k < osc.times.size(); ++k) {
    require(std::abs(osc.times[k] - hom.times[k]) <= 1e-12 * (1 + osc.T), "checkpoint times differ");
    const auto& s = osc.snapshots[k];
    const int dim = s.grid->dim();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vec x = s.grid->coords(i);
      if (norm(x, dim) > osc.R + 1e-12) continue;
      worst = std::max(worst, std::abs(s[i] - interpolate(hom.snapshots[k], x)));
    }
  }
  return worst;
}

HomogenizationErrorTable homogenization_error(const std::vector<EvolutionRun>& osc, const EvolutionRun& hom) {
  require(!osc.empty(), "homogenization error needs oscillatory runs");
  HomogenizationErrorTable t;
  std::vector<const EvolutionRun*> sorted;
  for (const auto& r : osc) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) { return a->epsilon > b->epsilon; });
  for (const auto* r : sorted) {
    t.epsilons.push_back(r->epsilon);
    t.errors.push_back(sup_error(*r, hom));
  }
  for (std::size_t k = 1; k < t.errors.size(); ++k)
    if (!(t.errors[k] < t.errors[k - 1])) t.strictly_decreasing = false;
  if (t.errors.size() >= 2) {
    std::vector<double> le, lr;
    for (std::size_t k = 0; k < t.errors.size(); ++k)
      if (t.errors[k] > 0.0) le.push_back(std::log(t.epsilons[k])), lr.push_back(std::log(t.errors[k]));
    t.alpha = le.size() >= 2 ? fit_line(le, lr).slope : std::numeric_limits<double>::quiet_NaN();
  }
  return t;
}

double front_position(const EvolutionRun& run, std::size_t k, double level) {
  require(k < run.snapshots.size(), "checkpoint index out of range");
  const auto& s = run.snapshots[k];
  require(s.grid->dim() == 1, "front positions are defined for 1D runs");
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double a = s[i] - level, b = s[i + 1] - level;
    if (a == 0.0) return s.grid->coords(i)[0];
    if ((a < 0) != (b < 0)) return s.grid->coords(i)[0] + s.grid->h() * a / (a - b);
  }
  fail(ErrorCode::Threshold, "the level is not crossed inside the observation interval");
}

double front_speed(const EvolutionRun& run, double level) {
  return (front_position(run, run.snapshots.size() - 1, level) - front_position(run, 0, level)) / run.T;
}

double padding_agreement(const CoefficientField& field, double epsilon, const InitialCondition& g, double T, double R,
                         const EvolutionConfig& cfg) {
  const auto a = solve_oscillatory(field, epsilon, g, T, R, cfg);
  EvolutionConfig wide = cfg;
  wide.pad_factor *= 2.0;
  const auto b = solve_oscillatory(field, epsilon, g, T, R, wide);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.snapshots.size(); ++k)
    for (std::size_t i = 0; i < a.snapshots[k].size(); ++i)
      worst = std::max(worst, std::abs(a.snapshots[k][i] - b.snapshots[k][i]));
  return worst;
}

}  // namespace homlab
