#include "homlab/homlab.h"

#include <memory>
#include <string>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/experiment.hpp"
#include "homlab/metric.hpp"

struct homlab_config {
  homlab::ExperimentConfig cfg;
  std::string hash;
  std::string text;
};

struct homlab_run_result {
  homlab::RunOutcome outcome;
  std::string directory;
  std::string outputs;
};

struct homlab_report_result {
  homlab::ReportOutcome report;
  std::vector<std::string> tables;
};

struct homlab_field {
  homlab::CoefficientField field;
};

struct homlab_metric {
  homlab::MetricSolution sol;
};

namespace {

thread_local std::string g_last_error;

homlab_status code_of(homlab::ErrorCode c) {
  using homlab::ErrorCode;
  switch (c) {
    case ErrorCode::InvalidArgument:
      return HOMLAB_ERR_INVALID_ARGUMENT;
    case ErrorCode::Config:
      return HOMLAB_ERR_CONFIG;
    case ErrorCode::NonConvergence:
      return HOMLAB_ERR_NONCONVERGENCE;
    case ErrorCode::NonFinite:
      return HOMLAB_ERR_NONFINITE;
    case ErrorCode::Threshold:
      return HOMLAB_ERR_THRESHOLD;
    case ErrorCode::Io:
      return HOMLAB_ERR_IO;
    case ErrorCode::ExtendTable:
      return HOMLAB_ERR_EXTEND_TABLE;
  }
  return HOMLAB_ERR_INTERNAL;
}

template <class Fn>
homlab_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const homlab::Error& e) {
    g_last_error = e.what();
    return code_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HOMLAB_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return HOMLAB_ERR_INTERNAL;
  }
}

homlab_status null_arg(const char* what) {
  g_last_error = std::string(what) + " is null";
  return HOMLAB_ERR_INVALID_ARGUMENT;
}

homlab_config* wrap(homlab::ExperimentConfig cfg) {
  auto c = std::make_unique<homlab_config>();
  c->hash = homlab::config_hash(cfg);
  c->text = homlab::to_json(cfg).dump();
  c->cfg = std::move(cfg);
  return c.release();
}

homlab::Vec read_vec(const double* x, int dim) {
  homlab::Vec v{};
  for (int i = 0; i < dim; ++i) v[i] = x[i];
  return v;
}

}  // namespace

extern "C" {

const char* homlab_version(void) {
  static const std::string v = homlab::tool_version();
  return v.c_str();
}

const char* homlab_last_error(void) { return g_last_error.c_str(); }

const char* homlab_status_name(homlab_status s) {
  switch (s) {
    case HOMLAB_OK:
      return "ok";
    case HOMLAB_ERR_INTERNAL:
      return "internal";
    case HOMLAB_ERR_CONFIG:
      return "config";
    case HOMLAB_ERR_NONCONVERGENCE:
      return "non-convergence";
    case HOMLAB_ERR_THRESHOLD:
      return "threshold";
    case HOMLAB_ERR_INVALID_ARGUMENT:
      return "invalid-argument";
    case HOMLAB_ERR_IO:
      return "io";
    case HOMLAB_ERR_NONFINITE:
      return "non-finite";
    case HOMLAB_ERR_EXTEND_TABLE:
      return "extend-table";
  }
  return "unknown";
}

homlab_status homlab_config_load(const char* path_or_oracle, homlab_config** out) {
  if (!path_or_oracle) return null_arg("path");
  if (!out) return null_arg("out");
  return guarded([&] {
    *out = wrap(homlab::resolve_config(path_or_oracle));
    return HOMLAB_OK;
  });
}

homlab_status homlab_config_parse(const char* json_text, homlab_config** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      homlab::fail(homlab::ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
    }
    *out = wrap(homlab::parse_config(j));
    return HOMLAB_OK;
  });
}

void homlab_config_free(homlab_config* c) { delete c; }

const char* homlab_config_kind(const homlab_config* c) { return c ? c->cfg.kind.c_str() : ""; }
const char* homlab_config_hash(const homlab_config* c) { return c ? c->hash.c_str() : ""; }
const char* homlab_config_json(const homlab_config* c) { return c ? c->text.c_str() : ""; }

homlab_run_options homlab_run_options_default(void) {
  homlab_run_options o{};
  o.out_dir = nullptr;
  o.workers = 1;
  o.cache = 1;
  o.has_seed_base = 0;
  o.seed_base = 0;
  return o;
}

homlab_status homlab_run(const homlab_config* c, const homlab_run_options* opts, homlab_run_result** out) {
  if (!c) return null_arg("config");
  if (!out) return null_arg("out");
  *out = nullptr;
  const homlab_run_options o = opts ? *opts : homlab_run_options_default();
  return guarded([&] {
    homlab::RunOptions ro;
    if (o.out_dir) ro.out = o.out_dir;
    ro.workers = o.workers;
    ro.cache = o.cache != 0;
    if (o.has_seed_base) ro.seed_base = o.seed_base;
    auto r = std::make_unique<homlab_run_result>();
    r->outcome = homlab::run_experiment(c->cfg, ro);
    r->directory = r->outcome.directory.string();
    r->outputs = r->outcome.outputs.dump();
    const bool failed = r->outcome.status != 0;
    *out = r.release();
    if (failed) {
      g_last_error = "an expect check failed (see manifest.json)";
      return HOMLAB_ERR_THRESHOLD;
    }
    return HOMLAB_OK;
  });
}

int homlab_run_cache_hit(const homlab_run_result* r) { return r && r->outcome.cache_hit ? 1 : 0; }
const char* homlab_run_directory(const homlab_run_result* r) { return r ? r->directory.c_str() : ""; }
const char* homlab_run_outputs(const homlab_run_result* r) { return r ? r->outputs.c_str() : ""; }
void homlab_run_result_free(homlab_run_result* r) { delete r; }

homlab_status homlab_report(const char* dir, homlab_report_result** out) {
  if (!dir) return null_arg("dir");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto r = std::make_unique<homlab_report_result>();
    r->report = homlab::report_directory(dir);
    for (const auto& p : r->report.tables) r->tables.push_back(p.string());
    *out = r.release();
    return HOMLAB_OK;
  });
}

size_t homlab_report_manifests(const homlab_report_result* r) { return r ? r->report.manifests : 0; }
size_t homlab_report_table_count(const homlab_report_result* r) { return r ? r->tables.size() : 0; }
const char* homlab_report_table(const homlab_report_result* r, size_t i) {
  return r && i < r->tables.size() ? r->tables[i].c_str() : "";
}
size_t homlab_report_problem_count(const homlab_report_result* r) { return r ? r->report.problems.size() : 0; }
const char* homlab_report_problem(const homlab_report_result* r, size_t i) {
  return r && i < r->report.problems.size() ? r->report.problems[i].c_str() : "";
}
void homlab_report_result_free(homlab_report_result* r) { delete r; }

size_t homlab_oracle_count(void) { return homlab::builtin_oracles().size(); }
const char* homlab_oracle_name(size_t i) {
  const auto& o = homlab::builtin_oracles();
  return i < o.size() ? o[i].name.c_str() : "";
}
const char* homlab_oracle_description(size_t i) {
  const auto& o = homlab::builtin_oracles();
  return i < o.size() ? o[i].description.c_str() : "";
}

homlab_status homlab_field_create(const char* descriptor_json, homlab_field** out) {
  if (!descriptor_json) return null_arg("descriptor_json");
  if (!out) return null_arg("out");
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(descriptor_json);
    } catch (const nlohmann::json::exception& e) {
      homlab::fail(homlab::ErrorCode::Config, std::string("descriptor is not valid JSON: ") + e.what());
    }
    *out = new homlab_field{homlab::CoefficientField(homlab::field_descriptor_from_json(j))};
    return HOMLAB_OK;
  });
}

void homlab_field_free(homlab_field* f) { delete f; }

int homlab_field_dim(const homlab_field* f) { return f ? f->field.dim() : 0; }

homlab_status homlab_field_eval(const homlab_field* f, const double* x, double* a) {
  if (!f) return null_arg("field");
  if (!x || !a) return null_arg("x/a");
  return guarded([&] {
    *a = f->field.a(read_vec(x, f->field.dim()));
    return HOMLAB_OK;
  });
}

homlab_status homlab_metric_planar(const homlab_field* f, double mu, const double* e, double s, double h,
                                   double depth, double width, homlab_metric** out) {
  if (!f) return null_arg("field");
  if (!e || !out) return null_arg("e/out");
  return guarded([&] {
    const int d = f->field.dim();
    const auto dir = read_vec(e, d);
    homlab::require(homlab::norm(dir, d) > 0.0, "direction must be nonzero");
    auto grid = homlab::planar_grid(d, h, dir, s, depth, width);
    *out = new homlab_metric{homlab::solve_planar_metric(f->field, mu, dir, s, grid)};
    return HOMLAB_OK;
  });
}

homlab_status homlab_metric_value(const homlab_metric* m, const double* x, double* value) {
  if (!m) return null_arg("metric");
  if (!x || !value) return null_arg("x/value");
  return guarded([&] {
    *value = homlab::value_at(m->sol, read_vec(x, m->sol.m.grid->dim()));
    return HOMLAB_OK;
  });
}

double homlab_metric_residual(const homlab_metric* m) { return m ? m->sol.residual_norm : 0.0; }

void homlab_metric_free(homlab_metric* m) { delete m; }

homlab_status homlab_corrector_dvd0(const homlab_field* f, const double* xi, double delta, double h, double* dvd0) {
  if (!f) return null_arg("field");
  if (!xi || !dvd0) return null_arg("xi/dvd0");
  return guarded([&] {
    homlab::require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
    auto torus = homlab::corrector_torus(f->field, h, homlab::default_torus_side(delta));
    *dvd0 = homlab::solve_corrector(f->field, read_vec(xi, f->field.dim()), delta, torus).dvd0;
    return HOMLAB_OK;
  });
}

}  // extern "C"
