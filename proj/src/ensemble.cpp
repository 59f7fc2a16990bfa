#include "homlab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "homlab/effective.hpp"
#include "homlab/parallel.hpp"
#include "homlab/table.hpp"

namespace homlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string tag(const std::string& prefix, double v) { return prefix + format_number(v); }

Vec along(const Vec& e, double t, int dim) {
  Vec x{};
  for (int a = 0; a < dim; ++a) x[a] = t * e[a];
  return x;
}

// Quadratic least squares y = a + b x + c x^2; returns c.
double quadratic_curvature(const std::vector<double>& x, const std::vector<double>& y) {
  double S[5] = {0, 0, 0, 0, 0}, T[3] = {0, 0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p = 1.0;
    for (int k = 0; k < 5; ++k) {
      S[k] += p;
      if (k < 3) T[k] += p * y[i];
      p *= x[i];
    }
  }
  // Cramer's rule on the 3x3 normal equations.
  const double m[3][3] = {{S[0], S[1], S[2]}, {S[1], S[2], S[3]}, {S[2], S[3], S[4]}};
  auto det3 = [](const double a[3][3]) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  };
  const double D = det3(m);
  if (std::abs(D) < 1e-300) return kNaN;
  double mc[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) mc[r][c] = c == 2 ? T[r] : m[r][c];
  return det3(mc) / D;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double variance_of(const std::vector<double>& v) {
  if (v.size() < 2 || std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

// One planar solve per realization, evaluated at t e for each t.
std::vector<std::vector<double>> planar_values(const FieldFamily& family, double mu, const Vec& e,
                                               const std::vector<double>& ts, std::size_t N, const PlanarSetup& setup) {
  const int dim = family.base.dim;
  const Vec en = normalized(e, dim);
  const double depth = *std::max_element(ts.begin(), ts.end()) + setup.margin;
  std::vector<std::vector<double>> out(N);
  parallel_for(N, setup.workers, [&](std::size_t i) {
    const auto field = family.realization(i);
    const auto grid = planar_grid(dim, setup.h, en, 0.0, depth, setup.width);
    const auto sol = solve_planar_metric(field, mu, en, 0.0, grid, setup.solver);
    for (double t : ts) out[i].push_back(value_at(sol, along(en, t, dim)));
  });
  return out;
}

nlohmann::json vec_json(const Vec& v, int dim) { return std::vector<double>(v.begin(), v.begin() + dim); }

}  // namespace

std::uint64_t replicate_seed(std::uint64_t base, const std::string& experiment_id, std::size_t index) {
  return hash_combine(hash_combine(base, fnv1a(experiment_id)), index);
}

std::uint64_t FieldFamily::seed(std::size_t i) const { return replicate_seed(seed_base, experiment_id, i); }

CoefficientField FieldFamily::realization(std::size_t i) const {
  FieldDescriptor d = base;
  d.seed = seed(i);
  return CoefficientField(d);
}

void save_record(const EnsembleRecord& r, const std::filesystem::path& stem) {
  nlohmann::json j;
  j["kind"] = r.kind;
  j["experiment_id"] = r.experiment_id;
  j["observables"] = r.observables;
  j["lambdas"] = r.lambdas;
  j["summary"] = r.summary;
  std::filesystem::path js = stem, cs = stem;
  js += ".json";
  cs += ".csv";
  std::ofstream out(js, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + js.string());
  out << j.dump(2) << '\n';
  CsvTable t;
  t.header.push_back("seed");
  for (const auto& o : r.observables) t.header.push_back(o);
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    std::vector<std::string> row{std::to_string(r.seeds[i])};
    for (double v : r.per_seed[i]) row.push_back(format_number(v));
    t.add(std::move(row));
  }
  t.write(cs);
}

EnsembleRecord load_record(const std::filesystem::path& stem) {
  std::filesystem::path js = stem, cs = stem;
  js += ".json";
  cs += ".csv";
  std::ifstream in(js);
  if (!in) fail(ErrorCode::Io, "cannot read " + js.string());
  nlohmann::json j;
  in >> j;
  EnsembleRecord r;
  r.kind = j.at("kind").get<std::string>();
  r.experiment_id = j.at("experiment_id").get<std::string>();
  r.observables = j.at("observables").get<std::vector<std::string>>();
  r.lambdas = j.at("lambdas").get<std::vector<double>>();
  r.summary = j.at("summary");
  const auto t = read_csv(cs);
  for (const auto& row : t.rows) {
    r.seeds.push_back(std::stoull(row.at(0)));
    std::vector<double> vals;
    for (std::size_t k = 1; k < row.size(); ++k) vals.push_back(std::stod(row[k]));
    r.per_seed.push_back(std::move(vals));
  }
  return r;
}

TailCheck tail_check(const std::vector<double>& samples) {
  TailCheck tc;
  const std::size_t N = samples.size();
  if (N < 3) return tc;
  const double m = mean_of(samples);
  std::vector<double> dev;
  for (double x : samples) dev.push_back(std::abs(x - m));
  std::sort(dev.begin(), dev.end());
  for (std::size_t k = 0; k + 1 < N; ++k) {
    tc.lambda_sq.push_back(dev[k] * dev[k]);
    tc.log_tail.push_back(std::log(static_cast<double>(N - 1 - k) / N));
  }
  tc.decreasing = true;
  for (std::size_t k = 1; k < tc.lambda_sq.size(); ++k)
    if (!(tc.lambda_sq[k] > tc.lambda_sq[k - 1])) tc.decreasing = false;
  const double ymax = tc.lambda_sq.back();
  if (ymax > 0.0) {
    std::vector<double> y;
    for (double v : tc.lambda_sq) y.push_back(v / ymax);
    tc.curvature = quadratic_curvature(y, tc.log_tail);
    tc.convex = tc.curvature >= 0.0;
  }
  return tc;
}

FluctuationResult run_fluctuation_experiment(const FieldFamily& family, double mu, const Vec& e,
                                             const std::vector<double>& t_list, std::size_t N,
                                             const PlanarSetup& setup, std::size_t min_seeds) {
  if (N < min_seeds) fail(ErrorCode::InvalidArgument, "fluctuation experiment needs N >= " + std::to_string(min_seeds));
  require(t_list.size() >= 2, "t_list needs two or more values");
  for (std::size_t k = 1; k < t_list.size(); ++k) require(t_list[k] > t_list[k - 1], "t_list must be increasing");
  require(t_list.front() > 0.0 && t_list.back() >= 4.0 * t_list.front(), "t_list must span a factor of 4");
  const int dim = family.base.dim;

  FluctuationResult res;
  res.t_list = t_list;
  const auto values = planar_values(family, mu, e, t_list, N, setup);
  std::vector<double> lt, ls;
  for (std::size_t k = 0; k < t_list.size(); ++k) {
    std::vector<double> col;
    for (const auto& v : values) col.push_back(v[k]);
    res.mean.push_back(mean_of(col));
    res.variance.push_back(variance_of(col));
    if (res.variance.back() > 0.0) lt.push_back(std::log(t_list[k])), ls.push_back(0.5 * std::log(res.variance.back()));
  }
  res.beta = lt.size() == t_list.size() ? fit_line(lt, ls).slope : kNaN;
  std::vector<double> last;
  for (const auto& v : values) last.push_back(v.back());
  res.tail = tail_check(last);

  auto& r = res.record;
  r.kind = "fluctuation";
  r.experiment_id = family.experiment_id;
  for (std::size_t i = 0; i < N; ++i) r.seeds.push_back(family.seed(i));
  for (double t : t_list) r.observables.push_back(tag("m_t", t));
  r.per_seed = values;
  for (double y : res.tail.lambda_sq) r.lambdas.push_back(std::sqrt(y));
  r.summary = {{"mu", mu},
               {"e", vec_json(normalized(e, dim), dim)},
               {"t_list_len", t_list},
               {"mean", res.mean},
               {"variance", res.variance},
               {"beta", res.beta},
               {"tail", {{"decreasing", res.tail.decreasing}, {"curvature", res.tail.curvature}, {"convex", res.tail.convex}}}};
  return res;
}

AdditivityResult run_additivity_experiment(const FieldFamily& family, double mu, const Vec& e,
                                           const std::vector<std::pair<double, double>>& pairs, std::size_t N,
                                           const PlanarSetup& setup) {
  require(!pairs.empty() && N >= 1, "additivity experiment needs pairs and seeds");
  std::vector<double> pts;
  for (auto [s, t] : pairs) {
    require(s >= 4.0 && t >= 4.0, "additivity pairs need s, t >= 4 range lengths");
    pts.insert(pts.end(), {s, t, s + t});
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const int dim = family.base.dim;
  const auto values = planar_values(family, mu, e, pts, N, setup);
  std::vector<double> means(pts.size(), 0.0);
  for (const auto& v : values)
    for (std::size_t k = 0; k < pts.size(); ++k) means[k] += v[k] / N;
  auto mean_at = [&](double x) { return means[std::lower_bound(pts.begin(), pts.end(), x) - pts.begin()]; };

  AdditivityResult res;
  res.pairs = pairs;
  nlohmann::json rows = nlohmann::json::array();
  for (auto [s, t] : pairs) {
    const double D = std::abs(mean_at(s + t) - mean_at(s) - mean_at(t));
    res.defect.push_back(D);
    res.normalized.push_back(D / std::pow(s + t, 0.6));
    rows.push_back({{"s_len", s}, {"t_len", t}, {"defect", D}, {"normalized", res.normalized.back()}});
  }
  auto& r = res.record;
  r.kind = "additivity";
  r.experiment_id = family.experiment_id;
  for (std::size_t i = 0; i < N; ++i) r.seeds.push_back(family.seed(i));
  for (double x : pts) r.observables.push_back(tag("m_t", x));
  r.per_seed = values;
  r.summary = {{"mu", mu}, {"e", vec_json(normalized(e, dim), dim)}, {"eta", 0.1}, {"pairs", rows}};
  return res;
}

LocalizationResult run_localization_experiment(const FieldFamily& family, double mu, const TargetSet& target,
                                               std::size_t N, const LocalizationSetup& setup) {
  require(N >= 1, "localization needs at least one seed");
  require(!setup.buffers.empty(), "localization needs buffer sizes");
  const int dim = family.base.dim;
  const int half = static_cast<int>(std::ceil(setup.box_half / setup.h - 1e-9));
  std::array<int, 3> n{1, 1, 1};
  Vec origin{};
  for (int a = 0; a < dim; ++a) n[a] = 2 * half + 1, origin[a] = -half * setup.h;
  const auto grid = std::make_shared<const Grid>(Grid::box(dim, setup.h, n, origin));
  const std::size_t B = setup.buffers.size();

  std::vector<std::vector<double>> obs(N);
  parallel_for(N, setup.workers, [&](std::size_t i) {
    const auto f1 = family.realization(i);
    const auto s1 = solve_metric(f1, mu, target, grid, setup.solver);
    const double l_est = calibrate_constants(s1).l_est;

    Box keep;
    for (int a = 0; a < dim; ++a) keep.lo[a] = 1e300, keep.hi[a] = -1e300;
    bool any = false;
    for (std::size_t k = 0; k < grid->size(); ++k) {
      if (grid->kind(k) == NodeKind::Exterior || s1.m[k] > setup.t_level) continue;
      any = true;
      const Vec x = grid->coords(k);
      for (int a = 0; a < dim; ++a) keep.lo[a] = std::min(keep.lo[a], x[a]), keep.hi[a] = std::max(keep.hi[a], x[a]);
    }
    require(any, "the sublevel set is empty");
    for (int a = 0; a < dim; ++a) keep.lo[a] -= setup.swap_margin, keep.hi[a] += setup.swap_margin;

    FieldDescriptor d2 = f1.descriptor();
    d2.keep_box = keep;
    d2.resample_seed = hash_combine(d2.seed, setup.resample_salt);
    const CoefficientField f2(d2);
    for (std::size_t k = 0; k < grid->size(); ++k) {
      const Vec x = grid->coords(k);
      bool inside = true;
      for (int a = 0; a < dim; ++a) inside = inside && x[a] >= keep.lo[a] && x[a] <= keep.hi[a];
      if (inside && f1.a(x) != f2.a(x))
        fail(ErrorCode::InvalidArgument, "resampled field does not agree with the original on the kept box");
    }
    const auto s2 = solve_metric(f2, mu, target, grid, setup.solver);
    obs[i].push_back(l_est);
    for (double b : setup.buffers) {
      double sup = 0.0;
      for (std::size_t k = 0; k < grid->size(); ++k)
        if (grid->kind(k) != NodeKind::Exterior && s1.m[k] <= setup.t_level - b)
          sup = std::max(sup, std::abs(s1.m[k] - s2.m[k]));
      obs[i].push_back(sup);
    }
  });

  LocalizationResult res;
  res.buffers = setup.buffers;
  res.sup_diff.assign(B, 0.0);
  res.l_est = std::numeric_limits<double>::infinity();
  for (const auto& o : obs) {
    res.l_est = std::min(res.l_est, o[0]);
    for (std::size_t b = 0; b < B; ++b) res.sup_diff[b] = std::max(res.sup_diff[b], o[1 + b]);
  }
  // Buffers are scanned from the largest down.
  std::vector<std::size_t> order(B);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return setup.buffers[a] > setup.buffers[b]; });
  res.b_star = kNaN;
  for (auto b : order) {
    if (!(res.sup_diff[b] < res.l_est)) break;
    res.b_star = setup.buffers[b];
  }

  auto& r = res.record;
  r.kind = "localization";
  r.experiment_id = family.experiment_id;
  for (std::size_t i = 0; i < N; ++i) r.seeds.push_back(family.seed(i));
  r.observables.push_back("l_est");
  for (double b : setup.buffers) r.observables.push_back(tag("sup_diff_b", b));
  r.per_seed = obs;
  r.summary = {{"mu", mu},
               {"target", to_json(target, dim)},
               {"t_level_len", setup.t_level},
               {"swap_margin_len", setup.swap_margin},
               {"buffers_len", setup.buffers},
               {"sup_diff", res.sup_diff},
               {"l_est", res.l_est},
               {"b_star_len", res.b_star},
               {"note", "localized solutions use the operational construction: coefficients resampled outside the "
                        "box containing the sublevel set"}};
  return res;
}

FiniteSpeedResult run_finite_speed_experiment(const FieldFamily& family, double mu, const Vec& e, double s,
                                              const std::vector<double>& R_ladder, std::size_t N,
                                              const FiniteSpeedSetup& setup) {
  const int dim = family.base.dim;
  require(dim >= 2, "finite-speed experiment needs dimension 2 or 3");
  require(s > 0.0 && !R_ladder.empty() && N >= 1, "finite-speed experiment needs s > 0, radii and seeds");
  for (std::size_t k = 1; k < R_ladder.size(); ++k) require(R_ladder[k] > R_ladder[k - 1], "R ladder must increase");
  require(setup.M > 0.0, "M must be positive");
  const Vec en = normalized(e, dim);
  const std::size_t L = R_ladder.size();

  std::vector<std::vector<double>> obs(N);
  parallel_for(N, setup.workers, [&](std::size_t i) {
    const auto field = family.realization(i);
    const double K = setup.K > 0.0 ? setup.K : 2.0 * std::pow(mu / field.bounds().c0, 1.0 / field.p());
    const double width = 2.0 * (R_ladder.back() + setup.M / K + s + setup.margin);
    const auto grid = planar_grid(dim, setup.h, en, 0.0, s + setup.margin, width);
    const auto m1 = solve_planar_metric(field, mu, en, 0.0, grid, setup.solver);
    const double v1 = value_at(m1, along(en, s, dim));
    for (double R : R_ladder) {
      auto lowered = [&](const Vec& y) { return -std::min(setup.M, K * std::max(norm(y, dim) - R, 0.0)); };
      const auto m2 = solve_planar_metric_with_data(field, mu, en, 0.0, grid, setup.solver, lowered);
      obs[i].push_back(v1 - value_at(m2, along(en, s, dim)));
    }
  });

  FiniteSpeedResult res;
  res.s = s;
  res.R_ladder = R_ladder;
  res.violation.assign(L, 0.0);
  res.influence.assign(L, -std::numeric_limits<double>::infinity());
  for (const auto& o : obs)
    for (std::size_t k = 0; k < L; ++k) {
      res.influence[k] = std::max(res.influence[k], o[k]);
      res.violation[k] = std::max(res.violation[k], std::max(o[k] - 1.0, 0.0));
    }
  res.R_star = kNaN;
  for (std::size_t k = L; k-- > 0;) {
    if (res.violation[k] > 0.0) break;
    res.R_star = R_ladder[k];
  }
  res.envelope_constant = res.R_star / (std::pow(mu, -5.0) * std::pow(1.0 + setup.M + s, 4.5));

  auto& r = res.record;
  r.kind = "finite-speed";
  r.experiment_id = family.experiment_id;
  for (std::size_t i = 0; i < N; ++i) r.seeds.push_back(family.seed(i));
  for (double R : R_ladder) r.observables.push_back(tag("influence_R", R));
  r.per_seed = obs;
  r.summary = {{"mu", mu},
               {"e", vec_json(en, dim)},
               {"s_len", s},
               {"M", setup.M},
               {"R_ladder_len", R_ladder},
               {"violation", res.violation},
               {"influence", res.influence},
               {"R_star_len", res.R_star},
               {"envelope_constant", res.envelope_constant}};
  return res;
}

}  // namespace homlab
