#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "homlab/fields.hpp"
#include "homlab/solver.hpp"

namespace homlab {

/// Experiment kinds understood by run().
const std::vector<std::string>& experiment_kinds();

struct GridParams {
  double h = 0.25;
  double margin = 4.0;
  double width = 0.0;
  double cells_per_period = 0.0;
  int checkpoints = 10;
  bool operator==(const GridParams&) const = default;
};

struct EnsembleParams {
  std::size_t N = 1;
  std::uint64_t seed_base = 0;
  bool operator==(const EnsembleParams&) const = default;
};

struct ExperimentConfig {
  std::string kind;
  FieldDescriptor field;
  /// Kind-specific physical parameters, defaults filled in.
  nlohmann::json physics = nlohmann::json::object();
  GridParams grid;
  SolverConfig solver;
  EnsembleParams ensemble;
  /// output name -> {value, rel_tol | abs_tol} or {min, max} or {equals}.
  nlohmann::json expect = nlohmann::json::object();
  std::string output_dir;
};

/// Strict parse: unknown keys, wrong types and violated preconditions throw
/// Error(Config). Defaults are filled in so equivalent configs hash equal.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);

/// Hash of the canonical config without output_dir (cache key, manifest hash).
std::string config_hash(const ExperimentConfig& c);
/// Hash that also ignores the replicate count; keys the seed stream so that
/// adding replicates leaves existing seeds alone.
std::string experiment_id(const ExperimentConfig& c);

struct RunOptions {
  std::filesystem::path out;
  unsigned workers = 1;
  bool cache = true;
  /// Overrides ensemble.seed_base when set.
  std::optional<std::uint64_t> seed_base;
};

struct RunOutcome {
  /// 0 ok, 4 when an expect check failed.
  int status = 0;
  bool cache_hit = false;
  std::filesystem::path directory;
  std::string config_hash;
  nlohmann::json outputs;
};

/// Runs the experiment under <out>/<kind>-<hash>/ and writes manifest.json last.
/// Solver errors propagate as Error; a manifest with status "failed" is left behind.
RunOutcome run_experiment(ExperimentConfig cfg, const RunOptions& opts);

struct ReportOutcome {
  std::vector<std::filesystem::path> tables;
  std::vector<std::string> problems;
  std::size_t manifests = 0;
};

/// One CSV per kind (one row per manifest) plus the merged error-vs-epsilon
/// table; unreadable manifests are listed in problems.
ReportOutcome report_directory(const std::filesystem::path& dir);

struct OracleInfo {
  std::string name;
  std::string description;
  nlohmann::json config;
};
const std::vector<OracleInfo>& builtin_oracles();
/// Config from a path or a built-in oracle name.
ExperimentConfig resolve_config(const std::string& path_or_oracle);

std::string tool_version();

}  // namespace homlab
