#include "homlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "homlab/corrector.hpp"
#include "homlab/effective.hpp"
#include "homlab/ensemble.hpp"
#include "homlab/evolution.hpp"
#include "homlab/metric.hpp"
#include "homlab/parallel.hpp"
#include "homlab/table.hpp"

#ifndef HOMLAB_VERSION
#define HOMLAB_VERSION "0.0.0"
#endif

namespace homlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) { fail(ErrorCode::Config, what); }

void config_check(bool cond, const std::string& what) {
  if (!cond) config_error(what);
}

enum class Type { Num, Int, Bool, Str, NumList, Vector, Pairs, Object, StrList };

struct Param {
  const char* name;
  Type type;
  json def;  // null: required (unless optional)
  bool optional = false;
};

using Schema = std::vector<Param>;

const std::map<std::string, Schema>& physics_schemas() {
  static const std::map<std::string, Schema> s{
      {"metric",
       {{"mu", Type::Num, nullptr},
        {"direction", Type::Vector, nullptr},
        {"s_len", Type::Num, 0.0},
        {"depth_len", Type::Num, 16.0},
        {"profile_step_len", Type::Num, 1.0}}},
      {"effective",
       {{"direction", Type::Vector, nullptr},
        {"xi_norm", Type::Num, 1.0},
        {"mu_list", Type::NumList, json::array()},
        {"mu_probe", Type::Num, nullptr, true},
        {"t_list_len", Type::NumList, json::array({8.0, 16.0, 24.0, 32.0})},
        {"delta_list", Type::NumList, json::array({0.2, 0.1, 0.05})},
        {"side_factor", Type::Num, 8.0},
        {"routes", Type::StrList, json::array({"metric", "corrector"})}}},
      {"corrector",
       {{"xi", Type::Vector, nullptr}, {"delta_list", Type::NumList, nullptr}, {"side_factor", Type::Num, 8.0}}},
      {"hbar-scan",
       {{"xi_norms", Type::NumList, nullptr},
        {"directions", Type::Int, 8},
        {"delta_list", Type::NumList, json::array({1.0, 0.5})},
        {"side_factor", Type::Num, 8.0}}},
      {"homogenization",
       {{"epsilon_list", Type::NumList, nullptr},
        {"initial", Type::Object, nullptr},
        {"T", Type::Num, 1.0},
        {"R_len", Type::Num, 1.0},
        {"hbar_delta_list", Type::NumList, json::array({0.2, 0.1, 0.05})},
        {"hbar_magnitudes", Type::Int, 4},
        {"hbar_directions", Type::Int, 8},
        {"front_level", Type::Num, nullptr, true}}},
      {"fluctuation",
       {{"mu", Type::Num, 1.0}, {"direction", Type::Vector, nullptr}, {"t_list_len", Type::NumList, nullptr}}},
      {"additivity",
       {{"mu", Type::Num, 1.0}, {"direction", Type::Vector, nullptr}, {"pairs_len", Type::Pairs, nullptr}}},
      {"localization",
       {{"mu", Type::Num, 1.0},
        {"target", Type::Object, nullptr},
        {"t_level_len", Type::Num, 6.0},
        {"swap_margin_len", Type::Num, 0.0},
        {"buffers_len", Type::NumList, json::array({0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0})},
        {"box_half_len", Type::Num, 12.0}}},
      {"finite-speed",
       {{"mu", Type::Num, 1.0},
        {"direction", Type::Vector, nullptr},
        {"s_len", Type::Num, nullptr},
        {"R_ladder_len", Type::NumList, nullptr},
        {"M", Type::Num, 2.0},
        {"K", Type::Num, 0.0}}},
  };
  return s;
}

// Scalar outputs per kind, in report column order.
const std::map<std::string, std::vector<std::string>>& output_names() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"metric",
       {"profile_slope", "l_est", "L_est", "sandwich_violation", "residual_norm", "iters", "monotone_descent"}},
      {"effective",
       {"mbar", "hbar_metric", "hbar_metric_uncertainty", "hbar_corrector", "hbar_corrector_uncertainty",
        "corrector_low_confidence", "route_gap"}},
      {"corrector", {"hbar", "hbar_uncertainty", "fit_q", "fit_residual", "low_confidence", "dvd0_smallest_delta"}},
      {"hbar-scan",
       {"sandwich_failures", "min_holder_exponent", "star_shaped", "max_direction_spread",
        "isotropic_within_uncertainty", "homogeneity_exponent"}},
      {"homogenization",
       {"alpha", "strictly_decreasing", "max_error", "min_error", "max_lip", "hom_front_speed", "osc_front_speed",
        "hbar_coverage"}},
      {"fluctuation", {"beta", "tail_decreasing", "tail_convex", "tail_curvature", "seeds"}},
      {"additivity", {"max_defect", "max_normalized", "defect_per_length_decreasing", "seeds"}},
      {"localization", {"l_est", "b_star", "sup_diff_first", "sup_diff_last", "seeds"}},
      {"finite-speed", {"R_star", "envelope_constant", "final_violation", "final_influence", "seeds"}},
  };
  return m;
}

bool random_kind(const FieldDescriptor& d) {
  return d.kind == FieldKind::PoissonBump || d.kind == FieldKind::CheckerboardSmoothed;
}

json normalize_value(const json& v, Type t, const std::string& where, int dim) {
  auto num = [&](const json& x) {
    config_check(x.is_number(), where + " must be a number");
    const double d = x.get<double>();
    config_check(std::isfinite(d), where + " must be finite");
    return d;
  };
  switch (t) {
    case Type::Num:
      return num(v);
    case Type::Int:
      config_check(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
                   where + " must be a non-negative integer");
      return v.get<std::uint64_t>();
    case Type::Bool:
      config_check(v.is_boolean(), where + " must be true or false");
      return v;
    case Type::Str:
      config_check(v.is_string(), where + " must be a string");
      return v;
    case Type::StrList: {
      config_check(v.is_array(), where + " must be a list of strings");
      for (const auto& x : v) config_check(x.is_string(), where + " must be a list of strings");
      return v;
    }
    case Type::NumList:
    case Type::Vector: {
      config_check(v.is_array(), where + " must be a list of numbers");
      json out = json::array();
      for (const auto& x : v) out.push_back(num(x));
      if (t == Type::Vector)
        config_check(static_cast<int>(out.size()) == dim, where + " must have one entry per dimension");
      return out;
    }
    case Type::Pairs: {
      config_check(v.is_array(), where + " must be a list of [s, t] pairs");
      json out = json::array();
      for (const auto& x : v) {
        config_check(x.is_array() && x.size() == 2, where + " must be a list of [s, t] pairs");
        out.push_back(json::array({num(x[0]), num(x[1])}));
      }
      return out;
    }
    case Type::Object:
      config_check(v.is_object(), where + " must be an object");
      return v;
  }
  return v;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  config_check(j.is_object(), section + " must be an object");
  for (const auto& [k, v] : j.items())
    config_check(allowed.count(k) > 0, "unknown key '" + k + "' in " + section);
}

std::vector<double> nums(const json& j) { return j.get<std::vector<double>>(); }

Vec vec(const json& j) { return to_vec(j.get<std::vector<double>>()); }

bool increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

bool all_positive(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
}

std::string method_name(SolverMethod m) {
  switch (m) {
    case SolverMethod::PseudoTime:
      return "pseudo-time";
    case SolverMethod::Sweeping:
      return "sweeping";
    default:
      return "auto";
  }
}

std::string envelope_name(EnvelopeRule r) {
  switch (r) {
    case EnvelopeRule::Lower:
      return "lower";
    case EnvelopeRule::Upper:
      return "upper";
    default:
      return "midpoint";
  }
}

// Semantic checks; everything a module would reject is caught here, before any compute.
void validate(const ExperimentConfig& c) {
  const int d = c.field.dim;
  const json& P = c.physics;
  config_check(c.grid.h > 0.0 && c.grid.h <= 1.0, "grid.h_len must lie in (0, 1]");
  config_check(c.grid.margin >= 0.0, "grid.margin_len must be non-negative");
  config_check(c.grid.width >= 0.0, "grid.width_len must be non-negative");
  config_check(c.grid.cells_per_period >= 0.0, "grid.cells_per_period must be non-negative");
  config_check(c.grid.checkpoints >= 1, "grid.checkpoints must be at least 1");
  config_check(c.solver.tol > 0.0, "solver.tol must be positive");
  config_check(c.solver.cfl > 0.0 && c.solver.cfl <= 1.0, "solver.cfl must lie in (0, 1]");
  config_check(c.solver.max_iters >= 1, "solver.max_iters must be at least 1");
  config_check(c.solver.eps_reg >= 0.0, "solver.eps_reg_len must be non-negative");
  config_check(c.ensemble.N >= 1, "ensemble.N must be at least 1");

  auto positive = [&](const char* key) {
    if (P.contains(key)) config_check(P[key].get<double>() > 0.0, std::string(key) + " must be positive");
  };
  auto nonzero_vec = [&](const char* key) {
    if (P.contains(key)) config_check(norm(vec(P[key]), d) > 0.0, std::string(key) + " must be nonzero");
  };
  auto deltas = [&](const char* key) {
    if (!P.contains(key)) return;
    const auto v = nums(P[key]);
    config_check(!v.empty(), std::string(key) + " must not be empty");
    for (double x : v) config_check(x > 0.0 && x <= 1.0, std::string(key) + " entries must lie in (0, 1]");
  };
  positive("mu");
  nonzero_vec("direction");
  nonzero_vec("xi");
  deltas("delta_list");
  deltas("hbar_delta_list");
  positive("side_factor");

  const std::string& k = c.kind;
  if (k == "metric") {
    config_check(P["s_len"].get<double>() >= 0.0, "s_len must be non-negative");
    positive("depth_len");
    positive("profile_step_len");
  } else if (k == "effective") {
    positive("xi_norm");
    const auto mus = nums(P["mu_list"]);
    config_check(all_positive(mus) && increasing(mus), "mu_list must be positive and increasing");
    config_check(mus.empty() || mus.size() >= 2, "mu_list needs at least 2 entries");
    if (P.contains("mu_probe"))
      config_check(std::find(mus.begin(), mus.end(), P["mu_probe"].get<double>()) != mus.end(),
                   "mu_probe must be one of mu_list");
    const auto t = nums(P["t_list_len"]);
    config_check(t.size() >= 3 && increasing(t) && t.front() >= 4.0,
                 "t_list_len needs >= 3 increasing entries, the first >= 4");
    const auto routes = P["routes"].get<std::vector<std::string>>();
    config_check(!routes.empty(), "routes must not be empty");
    for (const auto& r : routes) config_check(r == "metric" || r == "corrector", "unknown route '" + r + "'");
    if (std::find(routes.begin(), routes.end(), "corrector") != routes.end())
      config_check(nums(P["delta_list"]).size() >= 2, "the corrector route needs >= 2 deltas");
  } else if (k == "corrector") {
    config_check(nums(P["delta_list"]).size() >= 1, "delta_list must not be empty");
  } else if (k == "hbar-scan") {
    config_check(d <= 2, "hbar-scan supports dimension 1 or 2");
    const auto r = nums(P["xi_norms"]);
    config_check(r.size() >= 4 && all_positive(r) && increasing(r), "xi_norms needs >= 4 positive increasing entries");
    const auto n = P["directions"].get<std::size_t>();
    config_check(d == 1 ? n == 2 : n >= 8, "directions must be 2 in 1D and >= 8 in 2D");
    config_check(nums(P["delta_list"]).size() >= 2, "delta_list needs >= 2 entries");
  } else if (k == "homogenization") {
    config_check(d <= 2, "homogenization supports dimension 1 or 2");
    const auto eps = nums(P["epsilon_list"]);
    config_check(eps.size() >= 2, "epsilon_list needs >= 2 entries");
    for (double e : eps) config_check(e > 0.0 && e <= 1.0, "epsilon_list entries must lie in (0, 1]");
    positive("T");
    positive("R_len");
    initial_condition_from_json(P["initial"]);
    config_check(nums(P["hbar_delta_list"]).size() >= 2, "hbar_delta_list needs >= 2 entries");
    config_check(P["hbar_magnitudes"].get<std::size_t>() >= 2, "hbar_magnitudes must be at least 2");
    config_check(d == 1 || P["hbar_directions"].get<std::size_t>() >= 3, "hbar_directions must be at least 3");
    config_check(d == 1 || !P.contains("front_level"), "front_level is 1D only");
  } else if (k == "fluctuation") {
    const auto t = nums(P["t_list_len"]);
    config_check(t.size() >= 2 && all_positive(t) && increasing(t) && t.back() >= 4.0 * t.front(),
                 "t_list_len must be positive, increasing and span a factor of 4");
    config_check(c.ensemble.N >= 32, "fluctuation needs ensemble.N >= 32");
  } else if (k == "additivity") {
    config_check(!P["pairs_len"].empty(), "pairs_len must not be empty");
    for (const auto& pr : P["pairs_len"])
      config_check(pr[0].get<double>() >= 4.0 && pr[1].get<double>() >= 4.0, "pairs_len entries must be >= 4");
  } else if (k == "localization") {
    const auto target = target_from_json(P["target"]);
    (void)target;
    positive("t_level_len");
    positive("box_half_len");
    config_check(P["swap_margin_len"].get<double>() >= 0.0, "swap_margin_len must be non-negative");
    const auto bl = nums(P["buffers_len"]);
    config_check(!bl.empty() && increasing(bl) && bl.front() >= 0.0, "buffers_len must be non-negative and increasing");
  } else if (k == "finite-speed") {
    config_check(d >= 2, "finite-speed needs dimension >= 2");
    positive("s_len");
    const auto R = nums(P["R_ladder_len"]);
    config_check(!R.empty() && all_positive(R) && increasing(R), "R_ladder_len must be positive and increasing");
    positive("M");
    config_check(P["K"].get<double>() >= 0.0, "K must be non-negative");
  }

  const auto& names = output_names().at(k);
  for (const auto& [name, rule] : c.expect.items()) {
    config_check(std::find(names.begin(), names.end(), name) != names.end(),
                 "expect: '" + name + "' is not an output of " + k);
    check_keys(rule, {"value", "rel_tol", "abs_tol", "min", "max", "equals"}, "expect." + name);
    const bool has_value = rule.contains("value");
    config_check(has_value == (rule.contains("rel_tol") || rule.contains("abs_tol")),
                 "expect." + name + ": value needs rel_tol or abs_tol");
    config_check(has_value || rule.contains("min") || rule.contains("max") || rule.contains("equals"),
                 "expect." + name + " has no condition");
    for (const char* key : {"value", "rel_tol", "abs_tol", "min", "max"})
      if (rule.contains(key)) config_check(rule[key].is_number(), "expect." + name + "." + key + " must be a number");
    if (rule.contains("equals")) config_check(rule["equals"].is_boolean(), "expect." + name + ".equals must be a bool");
  }
}

json canonical(const ExperimentConfig& c, bool with_output) {
  json j = to_json(c);
  if (!with_output) j.erase("output_dir");
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::vector<std::string> e_columns(const Vec& e) {
  return {format_number(e[0]), format_number(e[1]), format_number(e[2])};
}

// ---- runners: each writes its artifacts into dir and returns scalar outputs.

struct Context {
  const ExperimentConfig& cfg;
  std::string id;
  fs::path dir;
  unsigned workers;

  const json& P() const { return cfg.physics; }
  int dim() const { return cfg.field.dim; }
  FieldFamily family() const { return FieldFamily{cfg.field, cfg.ensemble.seed_base, id}; }
  std::vector<CoefficientField> ensemble() const {
    std::vector<CoefficientField> out;
    if (!random_kind(cfg.field)) {
      out.emplace_back(cfg.field);
      return out;
    }
    const auto fam = family();
    for (std::size_t i = 0; i < cfg.ensemble.N; ++i) out.push_back(fam.realization(i));
    return out;
  }
  // Single field for the deterministic routes: the first realization.
  CoefficientField first_field() const {
    return random_kind(cfg.field) ? family().realization(0) : CoefficientField(cfg.field);
  }
  PlanarSetup planar() const { return {cfg.grid.h, cfg.grid.margin, cfg.grid.width, cfg.solver, workers}; }
};

json run_metric(const Context& cx) {
  const auto& P = cx.P();
  const int d = cx.dim();
  const CoefficientField field(cx.cfg.field);
  const double mu = P["mu"].get<double>(), s = P["s_len"].get<double>(), depth = P["depth_len"].get<double>();
  const Vec e = normalized(vec(P["direction"]), d);
  auto grid = planar_grid(d, cx.cfg.grid.h, e, s, depth, cx.cfg.grid.width);
  const auto sol = solve_planar_metric(field, mu, e, s, grid, cx.cfg.solver);
  const auto cc = calibrate_constants(sol);
  save_metric(sol, cx.dir / "metric");

  CsvTable prof;
  prof.header = {"t", "m"};
  std::vector<double> ts, ms;
  const double step = P["profile_step_len"].get<double>();
  for (double t = 0.0; t <= depth - cx.cfg.grid.margin + 1e-12; t += step) {
    Vec x{};
    for (int k = 0; k < d; ++k) x[k] = t * e[k];
    const double m = value_at(sol, x);
    prof.add({format_number(t), format_number(m)});
    if (t >= 2.0) ts.push_back(t), ms.push_back(m);
  }
  prof.write(cx.dir / "profile.csv");
  json out;
  out["profile_slope"] = ts.size() >= 2 ? fit_line(ts, ms).slope : std::nan("");
  out["l_est"] = cc.l_est;
  out["L_est"] = cc.L_est;
  out["sandwich_violation"] = cc.sandwich_violation;
  out["residual_norm"] = sol.residual_norm;
  out["iters"] = sol.iters;
  out["monotone_descent"] = sol.monotone_descent;
  return out;
}

json run_effective(const Context& cx) {
  const auto& P = cx.P();
  const int d = cx.dim();
  const Vec e = normalized(vec(P["direction"]), d);
  const double t = P["xi_norm"].get<double>();
  const auto routes = P["routes"].get<std::vector<std::string>>();
  auto has = [&](const char* r) { return std::find(routes.begin(), routes.end(), r) != routes.end(); };

  CsvTable hb;
  hb.header = {"e_1", "e_2", "e_3", "xi_norm", "estimate", "stderr", "route", "seed_count"};
  json out;
  std::optional<HbarValue> metric;
  std::optional<CorrectorRouteEstimate> corr;
  if (has("metric")) {
    const auto fields = cx.ensemble();
    auto mus = nums(P["mu_list"]);
    if (mus.empty()) mus = bracketing_mus(fields.front().bounds(), t);
    MbarConfig mc;
    mc.t_list = nums(P["t_list_len"]);
    mc.h = cx.cfg.grid.h;
    mc.margin = cx.cfg.grid.margin;
    mc.width = cx.cfg.grid.width;
    mc.solver = cx.cfg.solver;
    mc.workers = cx.workers;
    const auto table = build_slope_table(fields, mus, e, mc);
    CsvTable st;
    st.header = {"e_1", "e_2", "e_3", "mu", "estimate", "stderr", "route", "seed_count", "t_min", "t_max",
                 "defect_exponent"};
    for (const auto& r : table.rows) {
      auto row = e_columns(e);
      for (const auto& v : {format_number(r.mu), format_number(r.mbar), format_number(r.stderr_),
                            std::string("metric"), std::to_string(r.seeds), format_number(r.t_min),
                            format_number(r.t_max), format_number(r.defect_exponent)})
        row.push_back(v);
      st.add(std::move(row));
      if (P.contains("mu_probe") && r.mu == P["mu_probe"].get<double>()) out["mbar"] = r.mbar;
    }
    st.write(cx.dir / "slope_table.csv");
    metric = invert_to_hbar(table, t);
    auto row = e_columns(e);
    for (const auto& v : {format_number(t), format_number(metric->value), format_number(metric->uncertainty),
                          std::string("metric"), std::to_string(fields.size())})
      row.push_back(v);
    hb.add(std::move(row));
    out["hbar_metric"] = metric->value;
    out["hbar_metric_uncertainty"] = metric->uncertainty;
  }
  if (has("corrector")) {
    CorrectorRouteConfig rc;
    rc.h = cx.cfg.grid.h;
    rc.side_factor = P["side_factor"].get<double>();
    rc.solver = cx.cfg.solver;
    rc.workers = cx.workers;
    Vec xi{};
    for (int k = 0; k < d; ++k) xi[k] = t * e[k];
    corr = hbar_from_corrector(cx.first_field(), xi, nums(P["delta_list"]), rc);
    CsvTable lad;
    lad.header = {"delta", "dvd0"};
    for (std::size_t i = 0; i < corr->deltas.size(); ++i)
      lad.add({format_number(corr->deltas[i]), format_number(corr->dvd0[i])});
    lad.write(cx.dir / "corrector_ladder.csv");
    auto row = e_columns(e);
    for (const auto& v : {format_number(t), format_number(corr->value), format_number(corr->uncertainty),
                          std::string("corrector"), std::string("1")})
      row.push_back(v);
    hb.add(std::move(row));
    out["hbar_corrector"] = corr->value;
    out["hbar_corrector_uncertainty"] = corr->uncertainty;
    out["corrector_low_confidence"] = corr->low_confidence;
  }
  hb.write(cx.dir / "hbar.csv");
  if (metric && corr) out["route_gap"] = std::abs(metric->value - corr->value);
  return out;
}

json run_corrector(const Context& cx) {
  const auto& P = cx.P();
  const auto field = cx.first_field();
  const Vec xi = vec(P["xi"]);
  const double sf = P["side_factor"].get<double>();
  auto deltas = nums(P["delta_list"]);
  std::sort(deltas.begin(), deltas.end(), std::greater<>());
  std::vector<CorrectorSolution> sols(deltas.size());
  parallel_for(deltas.size(), cx.workers, [&](std::size_t i) {
    auto torus = corrector_torus(field, cx.cfg.grid.h, sf / deltas[i]);
    sols[i] = solve_corrector(field, xi, deltas[i], torus, cx.cfg.solver, sf);
  });
  CsvTable t;
  t.header = {"delta", "side_len", "h_len", "dvd0", "residual_norm", "iters"};
  std::vector<double> y;
  for (std::size_t i = 0; i < sols.size(); ++i) {
    const auto& g = *sols[i].v.grid;
    t.add({format_number(deltas[i]), format_number(g.h() * g.extents()[0]), format_number(g.h()),
           format_number(sols[i].dvd0), format_number(sols[i].residual_norm), std::to_string(sols[i].iters)});
    save_corrector(sols[i], cx.dir / ("corrector_" + std::to_string(i)));
    y.push_back(sols[i].dvd0);
  }
  t.write(cx.dir / "corrector.csv");
  json out;
  out["dvd0_smallest_delta"] = y.back();
  if (deltas.size() >= 2) {
    const auto fit = fit_delta_limit(deltas, y);
    out["hbar"] = fit.A;
    out["hbar_uncertainty"] = std::abs(fit.A - y.back()) + fit.residual;
    out["fit_q"] = fit.q;
    out["fit_residual"] = fit.residual;
    out["low_confidence"] = fit.residual > 1e-3 * std::max(std::abs(fit.A), 1e-300);
  } else {
    out["hbar"] = y.back();
  }
  return out;
}

std::vector<Vec> ray_directions(int dim, std::size_t n) {
  std::vector<Vec> out;
  if (dim == 1) return {Vec{1, 0, 0}, Vec{-1, 0, 0}};
  for (std::size_t k = 0; k < n; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    out.push_back(Vec{std::cos(a), std::sin(a), 0.0});
  }
  return out;
}

EffectiveHamiltonianEstimate corrector_rays(const Context& cx, const CoefficientField& field,
                                            const std::vector<Vec>& dirs, const std::vector<double>& radii,
                                            const std::vector<double>& deltas, double side_factor) {
  EffectiveHamiltonianEstimate est;
  est.dim = cx.dim();
  est.points.resize(dirs.size() * radii.size());
  CorrectorRouteConfig rc;
  rc.h = cx.cfg.grid.h;
  rc.side_factor = side_factor;
  rc.solver = cx.cfg.solver;
  rc.workers = 1;
  parallel_for(est.points.size(), cx.workers, [&](std::size_t i) {
    const Vec& e = dirs[i / radii.size()];
    const double r = radii[i % radii.size()];
    Vec xi{};
    for (int k = 0; k < est.dim; ++k) xi[k] = r * e[k];
    const auto c = hbar_from_corrector(field, xi, deltas, rc);
    est.points[i] = HbarPoint{xi, c.value, c.uncertainty, Route::Corrector, 1};
  });
  return est;
}

void write_hbar_points(const EffectiveHamiltonianEstimate& est, const fs::path& path) {
  CsvTable t;
  t.header = {"e_1", "e_2", "e_3", "xi_norm", "estimate", "stderr", "route", "seed_count"};
  for (const auto& p : est.points) {
    const double r = norm(p.xi, est.dim);
    auto row = e_columns(normalized(p.xi, est.dim));
    for (const auto& v : {format_number(r), format_number(p.value), format_number(p.uncertainty),
                          std::string(to_string(p.route)), std::to_string(p.seeds)})
      row.push_back(v);
    t.add(std::move(row));
  }
  t.write(path);
}

json run_hbar_scan(const Context& cx) {
  const auto& P = cx.P();
  const auto field = cx.first_field();
  const auto est = corrector_rays(cx, field, ray_directions(cx.dim(), P["directions"].get<std::size_t>()),
                                  nums(P["xi_norms"]), nums(P["delta_list"]), P["side_factor"].get<double>());
  write_hbar_points(est, cx.dir / "hbar.csv");
  const auto rep = hbar_regularity_scan(est, field.bounds());
  json out;
  out["sandwich_failures"] = rep.sandwich_failures;
  out["min_holder_exponent"] = rep.min_holder_exponent;
  out["star_shaped"] = rep.star_shaped;
  out["max_direction_spread"] = rep.max_direction_spread;
  out["isotropic_within_uncertainty"] = rep.isotropic_within_uncertainty;
  out["homogeneity_exponent"] = rep.homogeneity_exponent;
  return out;
}

json run_homogenization(const Context& cx) {
  const auto& P = cx.P();
  const int d = cx.dim();
  const auto g = initial_condition_from_json(P["initial"]);
  const double T = P["T"].get<double>(), R = P["R_len"].get<double>();
  const auto field = cx.first_field();

  // One-sided differences in d dimensions can reach sqrt(d) |Dg|.
  const double lip = g.lipschitz(d);
  const double rmax = 1.05 * std::sqrt(static_cast<double>(d)) * (lip > 0.0 ? lip : 1.0);
  const auto m = P["hbar_magnitudes"].get<std::size_t>();
  std::vector<double> radii;
  for (std::size_t j = 1; j <= m; ++j) radii.push_back(rmax * static_cast<double>(j) / static_cast<double>(m));
  const auto est = corrector_rays(cx, field, ray_directions(d, P["hbar_directions"].get<std::size_t>()), radii,
                                  nums(P["hbar_delta_list"]), 8.0);
  write_hbar_points(est, cx.dir / "hbar.csv");
  const HbarInterpolant H(est);

  EvolutionConfig ec;
  ec.h = cx.cfg.grid.h;
  ec.cfl = cx.cfg.solver.cfl;
  ec.checkpoints = cx.cfg.grid.checkpoints;
  ec.cells_per_period = cx.cfg.grid.cells_per_period;
  const auto hom = solve_homogenized(H, g, T, R, ec);
  const auto eps = nums(P["epsilon_list"]);
  std::vector<EvolutionRun> osc(eps.size());
  parallel_for(eps.size(), cx.workers, [&](std::size_t i) { osc[i] = solve_oscillatory(field, eps[i], g, T, R, ec); });
  const auto table = homogenization_error(osc, hom);

  CsvTable et;
  et.header = {"epsilon", "sup_error", "h_len", "dt", "lip"};
  double max_lip = 0.0;
  for (std::size_t i = 0; i < table.epsilons.size(); ++i) {
    const auto it = std::find_if(osc.begin(), osc.end(), [&](const EvolutionRun& r) { return r.epsilon == table.epsilons[i]; });
    et.add({format_number(table.epsilons[i]), format_number(table.errors[i]), format_number(it->h),
            format_number(it->dt), format_number(it->lip)});
    max_lip = std::max(max_lip, it->lip);
  }
  et.write(cx.dir / "errors.csv");

  json out;
  out["alpha"] = table.alpha;
  out["strictly_decreasing"] = table.strictly_decreasing;
  out["max_error"] = *std::max_element(table.errors.begin(), table.errors.end());
  out["min_error"] = *std::min_element(table.errors.begin(), table.errors.end());
  out["max_lip"] = max_lip;
  out["hbar_coverage"] = H.coverage();
  if (P.contains("front_level")) {
    const double level = P["front_level"].get<double>();
    out["hom_front_speed"] = front_speed(hom, level);
    const auto finest = std::min_element(osc.begin(), osc.end(),
                                         [](const auto& a, const auto& b) { return a.epsilon < b.epsilon; });
    out["osc_front_speed"] = front_speed(*finest, level);
  }
  return out;
}

json run_fluctuation(const Context& cx) {
  const auto& P = cx.P();
  const auto r = run_fluctuation_experiment(cx.family(), P["mu"].get<double>(), normalized(vec(P["direction"]), cx.dim()),
                                            nums(P["t_list_len"]), cx.cfg.ensemble.N, cx.planar());
  save_record(r.record, cx.dir / "record");
  CsvTable mt;
  mt.header = {"t", "mean", "variance", "std"};
  for (std::size_t i = 0; i < r.t_list.size(); ++i)
    mt.add({format_number(r.t_list[i]), format_number(r.mean[i]), format_number(r.variance[i]),
            format_number(std::sqrt(r.variance[i]))});
  mt.write(cx.dir / "moments.csv");
  CsvTable tt;
  tt.header = {"lambda_sq", "log_tail"};
  for (std::size_t i = 0; i < r.tail.lambda_sq.size(); ++i)
    tt.add({format_number(r.tail.lambda_sq[i]), format_number(r.tail.log_tail[i])});
  tt.write(cx.dir / "tail.csv");
  json out;
  out["beta"] = r.beta;
  out["tail_decreasing"] = r.tail.decreasing;
  out["tail_convex"] = r.tail.convex;
  out["tail_curvature"] = r.tail.curvature;
  out["seeds"] = r.record.seeds.size();
  return out;
}

json run_additivity(const Context& cx) {
  const auto& P = cx.P();
  std::vector<std::pair<double, double>> pairs;
  for (const auto& pr : P["pairs_len"]) pairs.emplace_back(pr[0].get<double>(), pr[1].get<double>());
  const auto r = run_additivity_experiment(cx.family(), P["mu"].get<double>(),
                                           normalized(vec(P["direction"]), cx.dim()), pairs, cx.cfg.ensemble.N,
                                           cx.planar());
  save_record(r.record, cx.dir / "record");
  CsvTable t;
  t.header = {"s", "t", "defect", "defect_per_length", "normalized"};
  std::vector<std::pair<double, double>> per_len;
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const double L = r.pairs[i].first + r.pairs[i].second;
    t.add({format_number(r.pairs[i].first), format_number(r.pairs[i].second), format_number(r.defect[i]),
           format_number(r.defect[i] / L), format_number(r.normalized[i])});
    per_len.emplace_back(L, r.defect[i] / L);
  }
  t.write(cx.dir / "defects.csv");
  std::sort(per_len.begin(), per_len.end());
  bool dec = true;
  for (std::size_t i = 1; i < per_len.size(); ++i) dec = dec && per_len[i].second < per_len[i - 1].second;
  json out;
  out["max_defect"] = *std::max_element(r.defect.begin(), r.defect.end());
  out["max_normalized"] = *std::max_element(r.normalized.begin(), r.normalized.end());
  out["defect_per_length_decreasing"] = dec;
  out["seeds"] = r.record.seeds.size();
  return out;
}

json run_localization(const Context& cx) {
  const auto& P = cx.P();
  LocalizationSetup ls;
  ls.h = cx.cfg.grid.h;
  ls.box_half = P["box_half_len"].get<double>();
  ls.t_level = P["t_level_len"].get<double>();
  ls.swap_margin = P["swap_margin_len"].get<double>();
  ls.buffers = nums(P["buffers_len"]);
  ls.solver = cx.cfg.solver;
  ls.workers = cx.workers;
  const auto r = run_localization_experiment(cx.family(), P["mu"].get<double>(), target_from_json(P["target"]),
                                             cx.cfg.ensemble.N, ls);
  save_record(r.record, cx.dir / "record");
  CsvTable t;
  t.header = {"buffer", "sup_diff"};
  for (std::size_t i = 0; i < r.buffers.size(); ++i) t.add({format_number(r.buffers[i]), format_number(r.sup_diff[i])});
  t.write(cx.dir / "buffers.csv");
  json out;
  out["l_est"] = r.l_est;
  out["b_star"] = r.b_star;
  out["sup_diff_first"] = r.sup_diff.front();
  out["sup_diff_last"] = r.sup_diff.back();
  out["seeds"] = r.record.seeds.size();
  return out;
}

json run_finite_speed(const Context& cx) {
  const auto& P = cx.P();
  FiniteSpeedSetup fs_;
  fs_.h = cx.cfg.grid.h;
  fs_.M = P["M"].get<double>();
  fs_.K = P["K"].get<double>();
  fs_.margin = cx.cfg.grid.margin;
  fs_.solver = cx.cfg.solver;
  fs_.workers = cx.workers;
  const auto r = run_finite_speed_experiment(cx.family(), P["mu"].get<double>(),
                                             normalized(vec(P["direction"]), cx.dim()), P["s_len"].get<double>(),
                                             nums(P["R_ladder_len"]), cx.cfg.ensemble.N, fs_);
  save_record(r.record, cx.dir / "record");
  CsvTable t;
  t.header = {"R", "influence", "violation"};
  for (std::size_t i = 0; i < r.R_ladder.size(); ++i)
    t.add({format_number(r.R_ladder[i]), format_number(r.influence[i]), format_number(r.violation[i])});
  t.write(cx.dir / "ladder.csv");
  json out;
  out["R_star"] = r.R_star;
  out["envelope_constant"] = r.envelope_constant;
  out["final_violation"] = r.violation.back();
  out["final_influence"] = r.influence.back();
  out["seeds"] = r.record.seeds.size();
  return out;
}

json dispatch(const Context& cx) {
  const std::string& k = cx.cfg.kind;
  if (k == "metric") return run_metric(cx);
  if (k == "effective") return run_effective(cx);
  if (k == "corrector") return run_corrector(cx);
  if (k == "hbar-scan") return run_hbar_scan(cx);
  if (k == "homogenization") return run_homogenization(cx);
  if (k == "fluctuation") return run_fluctuation(cx);
  if (k == "additivity") return run_additivity(cx);
  if (k == "localization") return run_localization(cx);
  if (k == "finite-speed") return run_finite_speed(cx);
  config_error("unknown experiment kind '" + k + "'");
}

// NaN does not survive JSON; store it as null.
json scrub(const json& outputs) {
  json out = json::object();
  for (const auto& [k, v] : outputs.items())
    out[k] = (v.is_number_float() && !std::isfinite(v.get<double>())) ? json(nullptr) : v;
  return out;
}

json evaluate_checks(const json& expect, const json& outputs, bool& all_pass) {
  all_pass = true;
  json checks = json::array();
  for (const auto& [name, rule] : expect.items()) {
    json c{{"output", name}, {"rule", rule}};
    bool pass = true;
    std::string why;
    if (!outputs.contains(name) || outputs[name].is_null()) {
      pass = false;
      why = "output missing";
    } else if (rule.contains("equals")) {
      pass = outputs[name].is_boolean() && outputs[name].get<bool>() == rule["equals"].get<bool>();
    }
    if (pass && (rule.contains("value") || rule.contains("min") || rule.contains("max"))) {
      if (!outputs[name].is_number()) {
        pass = false;
        why = "output is not a number";
      } else {
        const double v = outputs[name].get<double>();
        if (rule.contains("value")) {
          const double ref = rule["value"].get<double>();
          double tol = rule.value("abs_tol", 0.0);
          if (rule.contains("rel_tol")) tol = std::max(tol, rule["rel_tol"].get<double>() * std::abs(ref));
          pass = pass && std::abs(v - ref) <= tol;
        }
        if (rule.contains("min")) pass = pass && v >= rule["min"].get<double>();
        if (rule.contains("max")) pass = pass && v <= rule["max"].get<double>();
      }
    }
    c["pass"] = pass;
    if (!why.empty()) c["reason"] = why;
    all_pass = all_pass && pass;
    checks.push_back(c);
  }
  return checks;
}

std::vector<std::string> list_artifacts(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

const char* error_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:
      return "invalid-argument";
    case ErrorCode::Config:
      return "config";
    case ErrorCode::NonConvergence:
      return "non-convergence";
    case ErrorCode::NonFinite:
      return "non-finite";
    case ErrorCode::Threshold:
      return "threshold";
    case ErrorCode::Io:
      return "io";
    case ErrorCode::ExtendTable:
      return "extend-table";
  }
  return "internal";
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v;
    for (const auto& [name, s] : physics_schemas()) v.push_back(name);
    return v;
  }();
  return k;
}

std::string tool_version() { return HOMLAB_VERSION; }

ExperimentConfig parse_config(const json& j) {
  check_keys(j, {"kind", "field", "physics", "grid", "solver", "ensemble", "expect", "output_dir"}, "config");
  config_check(j.contains("kind") && j["kind"].is_string(), "config needs a string 'kind'");
  config_check(j.contains("field"), "config needs a 'field'");
  ExperimentConfig c;
  c.kind = j["kind"].get<std::string>();
  const auto& schemas = physics_schemas();
  const auto it = schemas.find(c.kind);
  config_check(it != schemas.end(), "unknown experiment kind '" + c.kind + "'");
  try {
    c.field = field_descriptor_from_json(j["field"]);
    CoefficientField probe(c.field);
    (void)probe;
  } catch (const Error& e) {
    config_error(std::string("field: ") + e.what());
  }
  const int dim = c.field.dim;

  const json phys = j.value("physics", json::object());
  std::set<std::string> allowed;
  for (const auto& p : it->second) allowed.insert(p.name);
  check_keys(phys, allowed, "physics");
  for (const auto& p : it->second) {
    const std::string where = std::string("physics.") + p.name;
    if (phys.contains(p.name))
      c.physics[p.name] = normalize_value(phys[p.name], p.type, where, dim);
    else if (!p.def.is_null())
      c.physics[p.name] = normalize_value(p.def, p.type, where, dim);
    else
      config_check(p.optional, "missing required key " + where);
  }
  if (c.physics.is_null()) c.physics = json::object();
  try {
    if (c.physics.contains("initial"))
      c.physics["initial"] = to_json(initial_condition_from_json(c.physics["initial"]), dim);
    if (c.physics.contains("target")) {
      const json& t = c.physics["target"];
      check_keys(t, {"kind", "normal", "offset_len", "centers_len", "radius_len", "lo_len", "hi_len"}, "physics.target");
      c.physics["target"] = to_json(target_from_json(t), dim);
    }
  } catch (const Error& e) {
    config_error(e.what());
  } catch (const json::exception& e) {
    config_error(e.what());
  }

  const json grid = j.value("grid", json::object());
  check_keys(grid, {"h_len", "margin_len", "width_len", "cells_per_period", "checkpoints"}, "grid");
  c.grid.h = normalize_value(grid.value("h_len", json(c.grid.h)), Type::Num, "grid.h_len", dim);
  c.grid.margin = normalize_value(grid.value("margin_len", json(c.grid.margin)), Type::Num, "grid.margin_len", dim);
  c.grid.width = normalize_value(grid.value("width_len", json(c.grid.width)), Type::Num, "grid.width_len", dim);
  c.grid.cells_per_period =
      normalize_value(grid.value("cells_per_period", json(c.grid.cells_per_period)), Type::Num, "grid.cells_per_period", dim);
  c.grid.checkpoints = static_cast<int>(
      normalize_value(grid.value("checkpoints", json(c.grid.checkpoints)), Type::Int, "grid.checkpoints", dim)
          .get<std::uint64_t>());

  const json solver = j.value("solver", json::object());
  check_keys(solver, {"tol", "cfl", "max_iters", "eps_reg_len", "method", "envelope"}, "solver");
  c.solver.tol = normalize_value(solver.value("tol", json(c.solver.tol)), Type::Num, "solver.tol", dim);
  c.solver.cfl = normalize_value(solver.value("cfl", json(c.solver.cfl)), Type::Num, "solver.cfl", dim);
  c.solver.max_iters =
      normalize_value(solver.value("max_iters", json(c.solver.max_iters)), Type::Int, "solver.max_iters", dim);
  c.solver.eps_reg = normalize_value(solver.value("eps_reg_len", json(c.solver.eps_reg)), Type::Num, "solver.eps_reg_len", dim);
  const std::string method = normalize_value(solver.value("method", json("auto")), Type::Str, "solver.method", dim);
  if (method == "auto")
    c.solver.method = SolverMethod::Auto;
  else if (method == "pseudo-time")
    c.solver.method = SolverMethod::PseudoTime;
  else if (method == "sweeping")
    c.solver.method = SolverMethod::Sweeping;
  else
    config_error("solver.method must be auto, pseudo-time or sweeping");
  const std::string env = normalize_value(solver.value("envelope", json("midpoint")), Type::Str, "solver.envelope", dim);
  if (env == "midpoint")
    c.solver.envelope = EnvelopeRule::Midpoint;
  else if (env == "lower")
    c.solver.envelope = EnvelopeRule::Lower;
  else if (env == "upper")
    c.solver.envelope = EnvelopeRule::Upper;
  else
    config_error("solver.envelope must be midpoint, lower or upper");

  const json ens = j.value("ensemble", json::object());
  check_keys(ens, {"N", "seed_base"}, "ensemble");
  const std::size_t n_default = c.kind == "fluctuation" ? 64 : (random_kind(c.field) ? 16 : 1);
  c.ensemble.N = normalize_value(ens.value("N", json(n_default)), Type::Int, "ensemble.N", dim);
  c.ensemble.seed_base = normalize_value(ens.value("seed_base", json(0)), Type::Int, "ensemble.seed_base", dim);

  c.expect = j.value("expect", json::object());
  config_check(c.expect.is_object(), "expect must be an object");
  if (j.contains("output_dir")) c.output_dir = normalize_value(j["output_dir"], Type::Str, "output_dir", dim);

  try {
    validate(c);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    config_error(e.what());
  } catch (const json::exception& e) {
    config_error(e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    config_error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = c.kind;
  j["field"] = to_json(c.field);
  j["physics"] = c.physics;
  j["grid"] = {{"h_len", c.grid.h},
               {"margin_len", c.grid.margin},
               {"width_len", c.grid.width},
               {"cells_per_period", c.grid.cells_per_period},
               {"checkpoints", c.grid.checkpoints}};
  j["solver"] = {{"tol", c.solver.tol},
                 {"cfl", c.solver.cfl},
                 {"max_iters", c.solver.max_iters},
                 {"eps_reg_len", c.solver.eps_reg},
                 {"method", method_name(c.solver.method)},
                 {"envelope", envelope_name(c.solver.envelope)}};
  j["ensemble"] = {{"N", c.ensemble.N}, {"seed_base", c.ensemble.seed_base}};
  j["expect"] = c.expect;
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  return j;
}

std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(canonical(c, false).dump())); }

std::string experiment_id(const ExperimentConfig& c) {
  json j = canonical(c, false);
  j["ensemble"].erase("N");
  j.erase("expect");
  return hex64(fnv1a(j.dump()));
}

RunOutcome run_experiment(ExperimentConfig cfg, const RunOptions& opts) {
  if (opts.seed_base) cfg.ensemble.seed_base = *opts.seed_base;
  // Re-parsing validates configs built in code the same way as files.
  cfg = parse_config(to_json(cfg));
  const fs::path out = !opts.out.empty() ? opts.out : fs::path(cfg.output_dir);
  config_check(!out.empty(), "no output directory (use --out or output_dir)");

  RunOutcome res;
  res.config_hash = config_hash(cfg);
  res.directory = out / (cfg.kind + "-" + res.config_hash);
  const fs::path manifest_path = res.directory / "manifest.json";

  if (opts.cache && fs::exists(manifest_path)) {
    try {
      std::ifstream in(manifest_path, std::ios::binary);
      const json m = json::parse(in);
      const std::string status = m.at("status").get<std::string>();
      bool complete = m.at("config_hash").get<std::string>() == res.config_hash &&
                      (status == "ok" || status == "threshold-failed");
      for (const auto& a : m.at("artifacts")) complete = complete && fs::exists(res.directory / a.get<std::string>());
      if (complete) {
        res.cache_hit = true;
        res.status = status == "ok" ? 0 : 4;
        res.outputs = m.at("outputs");
        return res;
      }
    } catch (const json::exception&) {
      // unreadable manifest: recompute
    }
  }

  std::error_code ec;
  fs::create_directories(res.directory, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + res.directory.string() + ": " + ec.message());
  fs::remove(manifest_path, ec);

  json manifest;
  manifest["config_hash"] = res.config_hash;
  manifest["experiment_id"] = experiment_id(cfg);
  manifest["kind"] = cfg.kind;
  manifest["tool_version"] = tool_version();
  manifest["config"] = canonical(cfg, false);
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&](const std::string& status) {
    manifest["status"] = status;
    manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["artifacts"] = list_artifacts(res.directory);
    const fs::path tmp = res.directory / "manifest.json.tmp";
    write_text(tmp, manifest.dump(2) + "\n");
    fs::rename(tmp, manifest_path);
  };

  const Context cx{cfg, manifest["experiment_id"].get<std::string>(), res.directory, opts.workers};
  json outputs;
  try {
    outputs = scrub(dispatch(cx));
  } catch (const Error& e) {
    manifest["error"] = {{"code", error_name(e.code())}, {"message", e.what()}};
    finish("failed");
    throw;
  } catch (const std::exception& e) {
    manifest["error"] = {{"code", "internal"}, {"message", e.what()}};
    finish("failed");
    throw;
  }
  bool pass = true;
  manifest["outputs"] = outputs;
  manifest["checks"] = evaluate_checks(cfg.expect, outputs, pass);
  finish(pass ? "ok" : "threshold-failed");
  res.status = pass ? 0 : 4;
  res.outputs = outputs;
  return res;
}

ReportOutcome report_directory(const fs::path& dir) {
  ReportOutcome rep;
  if (!fs::is_directory(dir)) fail(ErrorCode::Io, dir.string() + " is not a directory");
  const fs::path report_dir = dir / "report";

  std::vector<fs::path> manifests;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory() || e.path() == report_dir) continue;
    const fs::path m = e.path() / "manifest.json";
    if (fs::exists(m))
      manifests.push_back(m);
    else
      rep.problems.push_back(e.path().filename().string() + ": missing manifest.json");
  }
  std::sort(manifests.begin(), manifests.end());

  std::map<std::string, CsvTable> tables;
  for (const auto& [kind, names] : output_names()) {
    CsvTable t;
    t.header = {"config_hash", "experiment_id", "status", "tool_version", "wall_time_s"};
    for (const auto& n : names) t.header.push_back(n);
    tables[kind] = std::move(t);
  }
  CsvTable errors;
  errors.header = {"epsilon", "sup_error", "config_hash"};
  std::vector<std::tuple<double, std::string, std::vector<std::string>>> error_rows;
  CsvTable hbar;
  hbar.header = {"e_1", "e_2", "e_3", "xi_norm", "estimate", "stderr", "route", "seed_count", "config_hash"};

  for (const auto& path : manifests) {
    const std::string where = path.parent_path().filename().string();
    json m;
    try {
      std::ifstream in(path, std::ios::binary);
      m = json::parse(in);
      const std::string kind = m.at("kind").get<std::string>();
      if (!tables.count(kind)) {
        rep.problems.push_back(where + ": unknown kind '" + kind + "'");
        continue;
      }
      const auto& names = output_names().at(kind);
      std::vector<std::string> row{m.at("config_hash").get<std::string>(), m.at("experiment_id").get<std::string>(),
                                   m.at("status").get<std::string>(), m.at("tool_version").get<std::string>(),
                                   format_number(m.at("wall_time_s").get<double>())};
      const json outs = m.value("outputs", json::object());
      for (const auto& n : names) {
        if (!outs.contains(n) || outs[n].is_null())
          row.push_back("");
        else if (outs[n].is_boolean())
          row.push_back(bool_str(outs[n].get<bool>()));
        else
          row.push_back(format_number(outs[n].get<double>()));
      }
      tables[kind].add(std::move(row));
      ++rep.manifests;
      const std::string hash = m["config_hash"].get<std::string>();
      if (kind == "homogenization" && fs::exists(path.parent_path() / "errors.csv")) {
        const auto t = read_csv(path.parent_path() / "errors.csv");
        for (const auto& r : t.rows) error_rows.emplace_back(std::stod(r.at(0)), hash, std::vector<std::string>{r.at(0), r.at(1), hash});
      }
      if ((kind == "effective" || kind == "hbar-scan" || kind == "homogenization") &&
          fs::exists(path.parent_path() / "hbar.csv")) {
        for (auto r : read_csv(path.parent_path() / "hbar.csv").rows) {
          r.push_back(hash);
          hbar.add(std::move(r));
        }
      }
    } catch (const std::exception& e) {
      rep.problems.push_back(where + ": corrupt manifest (" + e.what() + ")");
    }
  }
  std::sort(error_rows.begin(), error_rows.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  for (auto& r : error_rows) errors.add(std::get<2>(r));

  std::error_code ec;
  fs::create_directories(report_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + report_dir.string());
  for (const auto& [kind, t] : tables) {
    const fs::path p = report_dir / (kind + ".csv");
    t.write(p);
    rep.tables.push_back(p);
  }
  errors.write(report_dir / "homogenization_errors.csv");
  rep.tables.push_back(report_dir / "homogenization_errors.csv");
  hbar.write(report_dir / "hbar.csv");
  rep.tables.push_back(report_dir / "hbar.csv");
  CsvTable probs;
  probs.header = {"problem"};
  for (const auto& p : rep.problems) probs.add({p});
  probs.write(report_dir / "problems.csv");
  return rep;
}

const std::vector<OracleInfo>& builtin_oracles() {
  static const std::vector<OracleInfo> o = [] {
    const json periodic1d = {{"kind", "periodic-trig"},
                             {"dim", 1},
                             {"p", 1.0},
                             {"base", 2.0},
                             {"period_len", 1.0},
                             {"terms", json::array({{{"amplitude", 1.0}, {"wave", {1, 0, 0}}, {"phase", 0.0}}})}};
    std::vector<OracleInfo> v;
    v.push_back({"periodic-1d-harmonic-mean",
                 "a = 2 + sin(2 pi x), p = 1: mbar_1 = <1/a> = 1/sqrt 3 and Hbar(1) = sqrt 3 via both routes",
                 {{"kind", "effective"},
                  {"field", periodic1d},
                  {"physics",
                   {{"direction", {1.0}},
                    {"xi_norm", 1.0},
                    {"mu_list", {1.0, 1.5, 2.0, 2.5}},
                    {"mu_probe", 1.0},
                    {"delta_list", {0.2, 0.1, 0.05}}}},
                  {"grid", {{"h_len", 1.0 / 64}}},
                  {"expect",
                   {{"mbar", {{"value", 0.5773502691896258}, {"rel_tol", 0.02}}},
                    {"hbar_metric", {{"value", 1.7320508075688772}, {"rel_tol", 0.02}}},
                    {"hbar_corrector", {{"value", 1.7320508075688772}, {"rel_tol", 0.02}}}}}}});
    v.push_back({"constant-planar-2d",
                 "a = 2, p = 1 in 2D: planar metric slope mu / a = 0.5 along a diagonal",
                 {{"kind", "metric"},
                  {"field", {{"kind", "constant"}, {"dim", 2}, {"p", 1.0}, {"base", 2.0}}},
                  {"physics", {{"mu", 1.0}, {"direction", {1.0, 1.0}}, {"depth_len", 12.0}}},
                  {"grid", {{"h_len", 1.0 / 16}, {"margin_len", 2.0}}},
                  {"expect", {{"profile_slope", {{"value", 0.5}, {"abs_tol", 0.125}}}}}}});
    v.push_back({"periodic-1d-homogenization",
                 "a = 2 + sin(2 pi x): sup error decreasing in epsilon, homogenized front speed sqrt 3",
                 {{"kind", "homogenization"},
                  {"field", periodic1d},
                  {"physics",
                   {{"epsilon_list", {0.125, 0.0625, 0.03125, 0.015625}},
                    {"initial", {{"kind", "plane"}, {"normal", {1.0}}}},
                    {"T", 1.0},
                    {"R_len", 1.0},
                    {"front_level", -1.0}}},
                  {"grid", {{"h_len", 1.0 / 1024}, {"cells_per_period", 16.0}}},
                  {"expect",
                   {{"strictly_decreasing", {{"equals", true}}},
                    {"alpha", {{"min", 0.0}}},
                    {"hom_front_speed", {{"value", 1.7320508075688772}, {"rel_tol", 0.03}}}}}}});
    return v;
  }();
  return o;
}

ExperimentConfig resolve_config(const std::string& path_or_oracle) {
  for (const auto& o : builtin_oracles())
    if (o.name == path_or_oracle) return parse_config(o.config);
  return load_config(path_or_oracle);
}

}  // namespace homlab
