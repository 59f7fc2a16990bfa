#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "homlab/homlab.h"

namespace {

// Exit codes: 0 ok, 1 other failure, 2 config error, 3 solver non-convergence, 4 threshold failure.
int exit_code(homlab_status s) {
  switch (s) {
    case HOMLAB_OK:
      return 0;
    case HOMLAB_ERR_CONFIG:
    case HOMLAB_ERR_INVALID_ARGUMENT:
      return 2;
    case HOMLAB_ERR_NONCONVERGENCE:
    case HOMLAB_ERR_NONFINITE:
      return 3;
    case HOMLAB_ERR_THRESHOLD:
      return 4;
    default:
      return 1;
  }
}

int report_error(homlab_status s) {
  std::cerr << "error (" << homlab_status_name(s) << "): " << homlab_last_error() << '\n';
  return exit_code(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homlab: numerical experiments for homogenization of viscous Hamilton-Jacobi equations"};
  app.set_version_flag("--version", std::string(homlab_version()));
  app.require_subcommand(1);

  std::string config, out;
  unsigned workers = 1;
  std::uint64_t seed_base = 0;
  std::string cache = "on";

  auto* run = app.add_subcommand("run", "run an experiment config (file path or oracle name)");
  run->add_option("--config", config, "config file or built-in oracle name")->required();
  run->add_option("--out", out, "output directory (overrides output_dir)");
  run->add_option("--workers", workers, "worker threads (0: all cores)");
  auto* seed_opt = run->add_option("--seed-base", seed_base, "base seed (overrides ensemble.seed_base)");
  run->add_option("--cache", cache, "reuse completed runs")->check(CLI::IsMember({"on", "off"}));

  auto* report = app.add_subcommand("report", "consolidate the manifests under a results directory");
  report->add_option("--out", out, "results directory")->required();

  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("--config", config, "config file or built-in oracle name")->required();

  auto* list = app.add_subcommand("list-oracles", "list the built-in oracle configs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*list) {
    for (std::size_t i = 0; i < homlab_oracle_count(); ++i)
      std::cout << homlab_oracle_name(i) << "\t" << homlab_oracle_description(i) << '\n';
    return 0;
  }

  if (*validate) {
    homlab_config* c = nullptr;
    const auto s = homlab_config_load(config.c_str(), &c);
    if (s != HOMLAB_OK) return report_error(s);
    std::cout << "ok " << homlab_config_kind(c) << " " << homlab_config_hash(c) << '\n';
    homlab_config_free(c);
    return 0;
  }

  if (*report) {
    homlab_report_result* r = nullptr;
    const auto s = homlab_report(out.c_str(), &r);
    if (s != HOMLAB_OK) return report_error(s);
    std::cout << homlab_report_manifests(r) << " manifest(s)\n";
    for (std::size_t i = 0; i < homlab_report_table_count(r); ++i) std::cout << "table " << homlab_report_table(r, i) << '\n';
    for (std::size_t i = 0; i < homlab_report_problem_count(r); ++i)
      std::cerr << "problem: " << homlab_report_problem(r, i) << '\n';
    homlab_report_result_free(r);
    return 0;
  }

  homlab_config* c = nullptr;
  auto s = homlab_config_load(config.c_str(), &c);
  if (s != HOMLAB_OK) return report_error(s);
  auto opts = homlab_run_options_default();
  opts.out_dir = out.empty() ? nullptr : out.c_str();
  opts.workers = workers;
  opts.cache = cache == "on";
  if (seed_opt->count() > 0) {
    opts.has_seed_base = 1;
    opts.seed_base = seed_base;
  }
  homlab_run_result* r = nullptr;
  s = homlab_run(c, &opts, &r);
  homlab_config_free(c);
  if (r) {
    std::cout << (homlab_run_cache_hit(r) ? "cache hit " : "wrote ") << homlab_run_directory(r) << '\n';
    std::cout << homlab_run_outputs(r) << '\n';
    homlab_run_result_free(r);
  }
  if (s != HOMLAB_OK) return report_error(s);
  return 0;
}
