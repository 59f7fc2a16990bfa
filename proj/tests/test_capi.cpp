#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "homlab/homlab.h"

namespace fs = std::filesystem;

TEST_CASE("status codes and error messages") {
  CHECK(HOMLAB_OK == 0);
  CHECK(std::string(homlab_status_name(HOMLAB_ERR_CONFIG)) == "config");
  CHECK(std::strlen(homlab_version()) > 0);

  homlab_config* c = nullptr;
  CHECK(homlab_config_parse("{not json", &c) == HOMLAB_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::strlen(homlab_last_error()) > 0);
  CHECK(homlab_config_parse(R"({"kind": "metric", "field": {"kind": "constant"}, "physics": {"mu": -1, "direction": [1]}})",
                            &c) == HOMLAB_ERR_CONFIG);
  CHECK(std::string(homlab_last_error()).find("mu") != std::string::npos);
  CHECK(homlab_config_load(nullptr, &c) == HOMLAB_ERR_INVALID_ARGUMENT);
  CHECK(homlab_config_load("/nonexistent/config.json", &c) == HOMLAB_ERR_CONFIG);
}

TEST_CASE("fields, planar metric and corrector through the C API") {
  homlab_field* f = nullptr;
  REQUIRE(homlab_field_create(R"({"kind": "constant", "dim": 2, "base": 2})", &f) == HOMLAB_OK);
  CHECK(homlab_field_dim(f) == 2);
  const double x[2] = {0.3, -1.2};
  double a = 0.0;
  CHECK(homlab_field_eval(f, x, &a) == HOMLAB_OK);
  CHECK(a == 2.0);

  homlab_metric* m = nullptr;
  const double e[2] = {1.0, 0.0};
  REQUIRE(homlab_metric_planar(f, 1.0, e, 0.0, 1.0 / 16, 6.0, 0.0, &m) == HOMLAB_OK);
  const double p[2] = {4.0, 0.0};
  double v = 0.0;
  CHECK(homlab_metric_value(m, p, &v) == HOMLAB_OK);
  CHECK(std::abs(v - 2.0) <= 2.0 / 16);
  CHECK(homlab_metric_residual(m) <= 1e-6);
  homlab_metric_free(m);

  double dvd0 = 0.0;
  const double xi[2] = {0.6, 0.8};
  CHECK(homlab_corrector_dvd0(f, xi, 0.5, 0.25, &dvd0) == HOMLAB_OK);
  CHECK(std::abs(dvd0 - 2.0) < 1e-9);
  CHECK(homlab_corrector_dvd0(f, xi, 2.0, 0.25, &dvd0) == HOMLAB_ERR_INVALID_ARGUMENT);
  CHECK(homlab_metric_planar(f, 1.0, e, 0.0, -1.0, 6.0, 0.0, &m) == HOMLAB_ERR_INVALID_ARGUMENT);
  homlab_field_free(f);

  CHECK(homlab_field_create(R"({"kind": "plaid"})", &f) == HOMLAB_ERR_CONFIG);
  CHECK(homlab_field_eval(nullptr, x, &a) == HOMLAB_ERR_INVALID_ARGUMENT);
}

TEST_CASE("oracle run, cache hit and report through the C API") {
  const auto dir = fs::temp_directory_path() / ("homlab_capi_" + std::to_string(::getpid()));
  fs::remove_all(dir);

  REQUIRE(homlab_oracle_count() >= 1);
  bool listed = false;
  for (size_t i = 0; i < homlab_oracle_count(); ++i)
    listed = listed || std::string(homlab_oracle_name(i)) == "periodic-1d-harmonic-mean";
  CHECK(listed);

  homlab_config* c = nullptr;
  REQUIRE(homlab_config_load("periodic-1d-harmonic-mean", &c) == HOMLAB_OK);
  CHECK(std::string(homlab_config_kind(c)) == "effective");
  CHECK(std::strlen(homlab_config_hash(c)) == 16);
  homlab_config* again = nullptr;
  REQUIRE(homlab_config_parse(homlab_config_json(c), &again) == HOMLAB_OK);
  CHECK(std::string(homlab_config_hash(again)) == homlab_config_hash(c));
  homlab_config_free(again);

  auto opts = homlab_run_options_default();
  const std::string out = dir.string();
  opts.out_dir = out.c_str();
  homlab_run_result* r = nullptr;
  REQUIRE(homlab_run(c, &opts, &r) == HOMLAB_OK);
  CHECK_FALSE(homlab_run_cache_hit(r));
  CHECK(std::string(homlab_run_outputs(r)).find("hbar_corrector") != std::string::npos);
  CHECK(fs::exists(fs::path(homlab_run_directory(r)) / "manifest.json"));
  homlab_run_result_free(r);
  REQUIRE(homlab_run(c, &opts, &r) == HOMLAB_OK);
  CHECK(homlab_run_cache_hit(r));
  homlab_run_result_free(r);
  homlab_config_free(c);

  homlab_report_result* rep = nullptr;
  REQUIRE(homlab_report(out.c_str(), &rep) == HOMLAB_OK);
  CHECK(homlab_report_manifests(rep) == 1);
  CHECK(homlab_report_problem_count(rep) == 0);
  CHECK(homlab_report_table_count(rep) > 0);
  homlab_report_result_free(rep);
  CHECK(homlab_report("/nonexistent/results", &rep) == HOMLAB_ERR_IO);
  fs::remove_all(dir);
}
