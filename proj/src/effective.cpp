#include "homlab/effective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "homlab/parallel.hpp"

namespace homlab {

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  require(n == y.size() && n >= 2, "line fit needs matching samples");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, "line fit needs distinct abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      ss += r * r;
    }
    f.se = std::sqrt(ss / (n - 2) / sxx);
  }
  return f;
}

SlopeRow estimate_mbar(const std::vector<CoefficientField>& fields, double mu, const Vec& e, const MbarConfig& cfg) {
  require(!fields.empty(), "estimate_mbar needs at least one realization");
  const auto& t = cfg.t_list;
  if (t.size() < 3) fail(ErrorCode::InvalidArgument, "slope fit is degenerate with fewer than 3 points in t_list");
  require(t.front() >= 4.0, "t_list must start at >= 4 range lengths");
  for (std::size_t k = 1; k < t.size(); ++k) require(t[k] > t[k - 1], "t_list must be increasing");
  const int dim = fields.front().dim();
  for (const auto& f : fields) require(f.dim() == dim, "realizations must share a dimension");
  const Vec en = normalized(e, dim);

  const std::size_t N = fields.size();
  std::vector<std::vector<double>> m(N);
  parallel_for(N, cfg.workers, [&](std::size_t i) {
    auto grid = planar_grid(dim, cfg.h, en, 0.0, t.back() + cfg.margin, cfg.width);
    const auto sol = solve_planar_metric(fields[i], mu, en, 0.0, grid, cfg.solver);
    m[i].resize(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      Vec x{};
      for (int a = 0; a < dim; ++a) x[a] = t[k] * en[a];
      m[i][k] = value_at(sol, x);
    }
  });

  SlopeRow row;
  row.mu = mu;
  row.seeds = N;
  row.t_min = t.front();
  row.t_max = t.back();
  row.mean_m.assign(t.size(), 0.0);
  for (const auto& mi : m)
    for (std::size_t k = 0; k < t.size(); ++k) row.mean_m[k] += mi[k] / N;
  const auto fit = fit_line(t, row.mean_m);
  row.mbar = fit.slope;
  row.intercept = fit.intercept;
  row.stderr_ = fit.se;
  if (N > 1) {
    std::vector<double> slopes;
    for (const auto& mi : m) slopes.push_back(fit_line(t, mi).slope);
    double ss = 0.0;
    for (double s : slopes) ss += (s - row.mbar) * (s - row.mbar);
    row.stderr_ = std::max(row.stderr_, std::sqrt(ss / (N - 1) / N));
  }

  std::vector<double> lt, ld;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double defect = std::abs(row.mean_m[k] / t[k] - row.mbar);
    if (defect <= 1e-12 * std::max(1.0, row.mbar)) continue;
    lt.push_back(std::log(t[k]));
    ld.push_back(std::log(defect));
  }
  row.defect_exponent =
      lt.size() >= 2 ? -fit_line(lt, ld).slope : std::numeric_limits<double>::quiet_NaN();
  return row;
}

SlopeTable build_slope_table(const std::vector<CoefficientField>& fields, const std::vector<double>& mus,
                             const Vec& e, const MbarConfig& cfg) {
  require(!fields.empty(), "slope table needs at least one realization");
  SlopeTable table;
  table.dim = fields.front().dim();
  table.e = normalized(e, table.dim);
  table.rows.resize(mus.size());
  // Rows in parallel, seeds serially within a row.
  MbarConfig inner = cfg;
  inner.workers = 1;
  parallel_for(mus.size(), cfg.workers, [&](std::size_t k) { table.rows[k] = estimate_mbar(fields, mus[k], e, inner); });
  std::sort(table.rows.begin(), table.rows.end(), [](const SlopeRow& a, const SlopeRow& b) { return a.mu < b.mu; });
  return table;
}

HbarValue invert_to_hbar(const SlopeTable& table, double t, double mu_tol) {
  const auto& r = table.rows;
  require(r.size() >= 2, "inversion needs at least two table rows");
  for (std::size_t k = 1; k < r.size(); ++k) {
    require(r[k].mu > r[k - 1].mu, "table rows must have distinct mu");
    const double noise = 2.0 * std::max(r[k].stderr_, r[k - 1].stderr_);
    if (r[k].mbar < r[k - 1].mbar - noise)
      fail(ErrorCode::Threshold, "mbar is not increasing in mu beyond noise; inversion aborted");
  }
  // Running maximum keeps the interpolant monotone when rows tie within noise.
  std::vector<double> env(r.size());
  env[0] = r[0].mbar;
  for (std::size_t k = 1; k < r.size(); ++k) env[k] = std::max(env[k - 1], r[k].mbar);
  if (!(env.front() <= t && env.back() > t))
    fail(ErrorCode::ExtendTable, "t = " + std::to_string(t) + " is not bracketed by the slope table");

  auto interp = [&](double mu) {
    auto it = std::upper_bound(r.begin(), r.end(), mu, [](double v, const SlopeRow& row) { return v < row.mu; });
    std::size_t k = std::clamp<std::size_t>(it - r.begin(), 1, r.size() - 1);
    const double w = (mu - r[k - 1].mu) / (r[k].mu - r[k - 1].mu);
    return env[k - 1] + w * (env[k] - env[k - 1]);
  };
  double lo = r.front().mu, hi = r.back().mu;
  while (hi - lo > mu_tol * (1.0 + hi)) {
    const double mid = 0.5 * (lo + hi);
    (interp(mid) > t ? hi : lo) = mid;
  }
  HbarValue out;
  out.value = 0.5 * (lo + hi);
  // Propagate the slope stderr through the local inverse slope.
  std::size_t k = 1;
  while (k + 1 < r.size() && r[k].mu < out.value) ++k;
  const double dm = env[k] - env[k - 1];
  const double se = std::max(r[k].stderr_, r[k - 1].stderr_);
  const double dmu = dm > 0.0 ? se * (r[k].mu - r[k - 1].mu) / dm : 0.0;
  out.uncertainty = (hi - lo) + dmu;
  return out;
}

std::vector<double> bracketing_mus(const StructuralBounds& b, double xi_norm, std::size_t count) {
  require(xi_norm > 0.0 && count >= 2, "bracketing needs |xi| > 0 and two or more values");
  const double lo = 0.9 * b.c0 * std::pow(xi_norm, b.p), hi = 1.1 * b.C0 * std::pow(xi_norm, b.p);
  std::vector<double> mus(count);
  for (std::size_t k = 0; k < count; ++k) mus[k] = lo + (hi - lo) * k / (count - 1);
  return mus;
}

HbarValue hbar_from_metric(const std::vector<CoefficientField>& fields, const Vec& xi, const MbarConfig& cfg,
                           std::size_t mu_count) {
  require(!fields.empty(), "metric route needs at least one realization");
  const int dim = fields.front().dim();
  const double t = norm(xi, dim);
  if (t == 0.0) return {};
  StructuralBounds b = fields.front().bounds();
  for (const auto& f : fields) {
    b.c0 = std::min(b.c0, f.bounds().c0);
    b.C0 = std::max(b.C0, f.bounds().C0);
  }
  const auto table = build_slope_table(fields, bracketing_mus(b, t, mu_count), xi, cfg);
  return invert_to_hbar(table, t);
}

DeltaFit fit_delta_limit(const std::vector<double>& deltas, const std::vector<double>& y) {
  const std::size_t n = deltas.size();
  require(n >= 2 && y.size() == n, "delta fit needs two or more matching samples");
  DeltaFit best;
  const double ymax = *std::max_element(y.begin(), y.end()), ymin = *std::min_element(y.begin(), y.end());
  if (ymax - ymin <= 1e-14 * std::max(1.0, std::abs(ymax))) {
    best.A = std::accumulate(y.begin(), y.end(), 0.0) / n;
    return best;
  }
  auto solve = [&](double q) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::pow(deltas[i], q);
    DeltaFit f;
    f.q = q;
    const auto line = fit_line(x, y);
    f.A = line.intercept;
    f.B = line.slope;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += std::pow(y[i] - f.A - f.B * x[i], 2);
    f.residual = std::sqrt(ss / n);
    return f;
  };
  const double lq0 = std::log(0.25), lq1 = std::log(4.0);
  constexpr int kScan = 400;
  best = solve(0.25);
  int arg = 0;
  for (int k = 1; k <= kScan; ++k) {
    const auto f = solve(std::exp(lq0 + (lq1 - lq0) * k / kScan));
    if (f.residual < best.residual) best = f, arg = k;
  }
  // Golden-section refinement in log q around the best scan point.
  double a = lq0 + (lq1 - lq0) * std::max(arg - 1, 0) / kScan, b = lq0 + (lq1 - lq0) * std::min(arg + 1, kScan) / kScan;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 80; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (solve(std::exp(c)).residual < solve(std::exp(d)).residual) b = d;
    else a = c;
  }
  const auto refined = solve(std::exp(0.5 * (a + b)));
  if (refined.residual < best.residual) best = refined;
  return best;
}

CorrectorRouteEstimate hbar_from_corrector(const CoefficientField& field, const Vec& xi,
                                           const std::vector<double>& deltas, const CorrectorRouteConfig& cfg) {
  require(deltas.size() >= 2, "the delta ladder needs two or more values");
  CorrectorRouteEstimate est;
  est.deltas = deltas;
  est.dvd0.resize(deltas.size());
  parallel_for(deltas.size(), cfg.workers, [&](std::size_t k) {
    const auto torus = corrector_torus(field, cfg.h, cfg.side_factor / deltas[k]);
    est.dvd0[k] = solve_corrector(field, xi, deltas[k], torus, cfg.solver).dvd0;
  });
  const auto fit = fit_delta_limit(deltas, est.dvd0);
  est.value = fit.A;
  est.B = fit.B;
  est.q = fit.q;
  est.fit_residual = fit.residual;
  est.low_confidence = fit.residual > cfg.residual_threshold * std::max(std::abs(fit.A), 1e-300);
  const auto smallest = std::min_element(deltas.begin(), deltas.end()) - deltas.begin();
  est.uncertainty = std::abs(fit.A - est.dvd0[smallest]) + fit.residual;
  return est;
}

const char* to_string(Route r) { return r == Route::Metric ? "metric" : "corrector"; }

namespace {

// Local exponent from a base point and two neighbors at distances r1 < r2.
double local_exponent(double dh1, double dh2, double r1, double r2) {
  return std::log(std::abs(dh2) / std::abs(dh1)) / std::log(r2 / r1);
}

}  // namespace

RegularityReport hbar_regularity_scan(const EffectiveHamiltonianEstimate& est, const StructuralBounds& b) {
  const int dim = est.dim;
  RegularityReport rep;
  rep.sandwich_pass.resize(est.points.size());
  for (std::size_t i = 0; i < est.points.size(); ++i) {
    const auto& pt = est.points[i];
    const double xp = std::pow(norm(pt.xi, dim), b.p);
    const bool ok = pt.value >= b.c0 * xp - pt.uncertainty && pt.value <= b.C0 * xp + pt.uncertainty;
    rep.sandwich_pass[i] = ok;
    if (!ok) ++rep.sandwich_failures;
  }

  // Group samples into rays keyed by the rounded unit direction.
  struct Sample {
    double r, h, u;
  };
  std::map<std::array<long long, 3>, std::vector<Sample>> rays;
  std::map<std::array<long long, 3>, Vec> ray_dir;
  for (const auto& pt : est.points) {
    const double r = norm(pt.xi, dim);
    if (r == 0.0) continue;
    const Vec u = normalized(pt.xi, dim);
    std::array<long long, 3> key{};
    for (int a = 0; a < dim; ++a) key[a] = std::llround(u[a] * 1e9);
    rays[key].push_back({r, pt.value, pt.uncertainty});
    ray_dir[key] = u;
  }
  rep.directions = rays.size();
  require(rep.directions >= (dim == 1 ? 2u : 8u), "regularity scan needs >= 8 directions (2 in 1D)");
  for (auto& [key, s] : rays) std::sort(s.begin(), s.end(), [](const Sample& x, const Sample& y) { return x.r < y.r; });
  rep.magnitudes = rays.begin()->second.size();
  require(rep.magnitudes >= 4, "regularity scan needs >= 4 magnitudes per direction");
  for (const auto& [key, s] : rays) {
    require(s.size() == rep.magnitudes, "every direction must be sampled at the same magnitudes");
    for (std::size_t k = 0; k < s.size(); ++k)
      require(std::abs(s[k].r - rays.begin()->second[k].r) <= 1e-9 * s[k].r, "magnitudes differ between directions");
  }

  double min_alpha = std::numeric_limits<double>::infinity();
  double hom = 0.0;
  for (const auto& [key, s] : rays) {
    for (std::size_t k = 1; k < s.size(); ++k)
      if (s[k].h < s[k - 1].h - (s[k].u + s[k - 1].u)) rep.star_shaped = false;
    for (std::size_t k = 0; k + 2 < s.size(); ++k) {
      const double dh1 = s[k + 1].h - s[k].h, dh2 = s[k + 2].h - s[k].h;
      const double noise = 10.0 * (s[k].u + s[k + 1].u + s[k + 2].u) + 1e-12 * std::abs(s[k].h);
      if (std::abs(dh1) <= noise || std::abs(dh2) <= noise || (dh1 > 0) != (dh2 > 0)) continue;
      min_alpha = std::min(min_alpha, local_exponent(dh1, dh2, s[k + 1].r - s[k].r, s[k + 2].r - s[k].r));
    }
    std::vector<double> lr, lh;
    for (const auto& x : s)
      if (x.h > 0.0) lr.push_back(std::log(x.r)), lh.push_back(std::log(x.h));
    if (lr.size() >= 2) hom += fit_line(lr, lh).slope / rays.size();
  }
  rep.homogeneity_exponent = hom;

  // Across directions at each magnitude; in 2D neighbors are taken in angle order.
  std::vector<std::pair<double, const std::vector<Sample>*>> by_angle;
  for (const auto& [key, s] : rays) by_angle.push_back({dim >= 2 ? std::atan2(ray_dir[key][1], ray_dir[key][0]) : 0.0, &s});
  std::sort(by_angle.begin(), by_angle.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  for (std::size_t k = 0; k < rep.magnitudes; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, umax = 0.0;
    for (const auto& [ang, s] : by_angle) {
      lo = std::min(lo, (*s)[k].h);
      hi = std::max(hi, (*s)[k].h);
      umax = std::max(umax, (*s)[k].u);
    }
    rep.max_direction_spread = std::max(rep.max_direction_spread, hi - lo);
    if (hi - lo > 2.0 * umax + 1e-12 * std::abs(hi)) rep.isotropic_within_uncertainty = false;
    if (dim != 2) continue;
    const std::size_t n = by_angle.size();
    for (std::size_t j = 0; j < n; ++j) {
      const auto& base = (*by_angle[j].second)[k];
      const auto& n1 = (*by_angle[(j + 1) % n].second)[k];
      const auto& n2 = (*by_angle[(j + 2) % n].second)[k];
      auto chord = [&](std::size_t step) {
        double da = by_angle[(j + step) % n].first - by_angle[j].first;
        if (da <= 0) da += 2 * std::numbers::pi;
        return 2.0 * base.r * std::sin(0.5 * da);
      };
      const double r1 = chord(1), r2 = chord(2);
      const double dh1 = n1.h - base.h, dh2 = n2.h - base.h;
      const double noise = 10.0 * (base.u + n1.u + n2.u) + 1e-12 * std::abs(base.h);
      // Only monotone stretches; across an angular extremum the quotient means nothing.
      if (std::abs(dh1) <= noise || std::abs(dh2) <= noise || !(r2 > r1) || (dh1 > 0) != (dh2 > 0)) continue;
      min_alpha = std::min(min_alpha, local_exponent(dh1, dh2, r1, r2));
    }
  }
  rep.min_holder_exponent = std::isfinite(min_alpha) ? min_alpha : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

}  // namespace homlab
