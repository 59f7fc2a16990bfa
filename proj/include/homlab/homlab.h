#ifndef HOMLAB_H
#define HOMLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(HOMLAB_BUILDING_LIBRARY)
#define HOMLAB_API __attribute__((visibility("default")))
#else
#define HOMLAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum homlab_status {
  HOMLAB_OK = 0,
  HOMLAB_ERR_INTERNAL = 1,
  HOMLAB_ERR_CONFIG = 2,
  HOMLAB_ERR_NONCONVERGENCE = 3,
  HOMLAB_ERR_THRESHOLD = 4,
  HOMLAB_ERR_INVALID_ARGUMENT = 5,
  HOMLAB_ERR_IO = 6,
  HOMLAB_ERR_NONFINITE = 7,
  HOMLAB_ERR_EXTEND_TABLE = 8
} homlab_status;

typedef struct homlab_config homlab_config;
typedef struct homlab_run_result homlab_run_result;
typedef struct homlab_report_result homlab_report_result;
typedef struct homlab_field homlab_field;
typedef struct homlab_metric homlab_metric;

HOMLAB_API const char* homlab_version(void);
/* Message of the last failed call on this thread ("" if none). */
HOMLAB_API const char* homlab_last_error(void);
HOMLAB_API const char* homlab_status_name(homlab_status s);

/* Experiment configs. `path_or_oracle` is a file path or a built-in oracle name. */
HOMLAB_API homlab_status homlab_config_load(const char* path_or_oracle, homlab_config** out);
HOMLAB_API homlab_status homlab_config_parse(const char* json_text, homlab_config** out);
HOMLAB_API void homlab_config_free(homlab_config* c);
HOMLAB_API const char* homlab_config_kind(const homlab_config* c);
/* 16 hex digits, valid while c lives. */
HOMLAB_API const char* homlab_config_hash(const homlab_config* c);
/* Canonical JSON (sorted keys, defaults filled), valid while c lives. */
HOMLAB_API const char* homlab_config_json(const homlab_config* c);

typedef struct homlab_run_options {
  const char* out_dir; /* NULL: the config's output_dir */
  unsigned workers;    /* 0: hardware concurrency */
  int cache;           /* nonzero: reuse a completed run */
  int has_seed_base;
  uint64_t seed_base;
} homlab_run_options;

HOMLAB_API homlab_run_options homlab_run_options_default(void);

/* HOMLAB_OK or HOMLAB_ERR_THRESHOLD (an expect check failed) both fill *out. */
HOMLAB_API homlab_status homlab_run(const homlab_config* c, const homlab_run_options* opts, homlab_run_result** out);
HOMLAB_API int homlab_run_cache_hit(const homlab_run_result* r);
HOMLAB_API const char* homlab_run_directory(const homlab_run_result* r);
/* Scalar outputs as a JSON object. */
HOMLAB_API const char* homlab_run_outputs(const homlab_run_result* r);
HOMLAB_API void homlab_run_result_free(homlab_run_result* r);

HOMLAB_API homlab_status homlab_report(const char* dir, homlab_report_result** out);
HOMLAB_API size_t homlab_report_manifests(const homlab_report_result* r);
HOMLAB_API size_t homlab_report_table_count(const homlab_report_result* r);
HOMLAB_API const char* homlab_report_table(const homlab_report_result* r, size_t i);
HOMLAB_API size_t homlab_report_problem_count(const homlab_report_result* r);
HOMLAB_API const char* homlab_report_problem(const homlab_report_result* r, size_t i);
HOMLAB_API void homlab_report_result_free(homlab_report_result* r);

HOMLAB_API size_t homlab_oracle_count(void);
HOMLAB_API const char* homlab_oracle_name(size_t i);
HOMLAB_API const char* homlab_oracle_description(size_t i);

/* Coefficient fields from a JSON descriptor. */
HOMLAB_API homlab_status homlab_field_create(const char* descriptor_json, homlab_field** out);
HOMLAB_API void homlab_field_free(homlab_field* f);
HOMLAB_API int homlab_field_dim(const homlab_field* f);
/* x has dim entries. */
HOMLAB_API homlab_status homlab_field_eval(const homlab_field* f, const double* x, double* a);

/* Planar metric problem with target {x.e <= -s} on a slab of the given depth
   (width <= 0: twice the depth), default solver settings. */
HOMLAB_API homlab_status homlab_metric_planar(const homlab_field* f, double mu, const double* e, double s, double h,
                                              double depth, double width, homlab_metric** out);
HOMLAB_API homlab_status homlab_metric_value(const homlab_metric* m, const double* x, double* value);
HOMLAB_API double homlab_metric_residual(const homlab_metric* m);
HOMLAB_API void homlab_metric_free(homlab_metric* m);

/* -delta v(0) of the approximate corrector on a torus of side 8/delta. */
HOMLAB_API homlab_status homlab_corrector_dvd0(const homlab_field* f, const double* xi, double delta, double h,
                                               double* dvd0);

#ifdef __cplusplus
}
#endif

#endif
