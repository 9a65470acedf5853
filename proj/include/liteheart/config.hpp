#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "liteheart/train.hpp"

namespace liteheart {

/// Resolved run configuration; validated before any compute, with unknown
/// keys rejected and a snapshot written to the run directory.
struct RunConfig {
  std::string name = "run";
  std::string out_dir = "runs/out";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  std::string dataset_dir;  // if set, load instead of synthesizing

  ExperimentConfig experiment;

  double eval_threshold = 0.5;
  double eval_beta = 2.0;

  Index bench_batch = 4;
  Index bench_length = 4096;
  int bench_reps = 20;

  std::string config_hash;

  std::string to_toml() const;  // canonical snapshot text
};

/// Minimal TOML subset: [table], [[array-of-tables]], key = scalar/array,
/// strings with basic escapes, # comments. Enough for the run configs.
nlohmann::ordered_json parse_toml(const std::string& text);

/// Loads .toml or .json by extension.
nlohmann::ordered_json load_config_file(const std::string& path);

/// LITEHEART_-prefixed environment variables override config keys; names
/// resolve case-insensitively against the known key paths (dots -> '_').
/// Unknown or ambiguous names are rejected.
void apply_env_overrides(nlohmann::ordered_json& cfg);

/// Parses and validates; throws std::invalid_argument on unknown keys or
/// invalid values.
RunConfig parse_run_config(const nlohmann::ordered_json& cfg);

RunConfig load_run_config(const std::string& path, bool with_env = true);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace liteheart
