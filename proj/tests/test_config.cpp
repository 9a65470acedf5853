#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "liteheart/config.hpp"

using namespace liteheart;

#ifndef LITEHEART_REFERENCE_CONFIG
#define LITEHEART_REFERENCE_CONFIG "configs/reference_synth.toml"
#endif

TEST_CASE("toml subset: scalars, arrays, tables, array-of-tables, comments") {
  const std::string text = R"(
# top comment
[run]
name = "demo"   # trailing comment
seeds = [0, 1,
         2, 3]

[kd]
tau = 4.0
alpha_shape = 1
enabled = true

[[synth.patterns]]
name = "A"
leads = [0, 1]

[[synth.patterns]]
name = "B"
leads = [7]
window = [0.25, 0.75]
)";
  const auto j = parse_toml(text);
  CHECK(j["run"]["name"] == "demo");
  CHECK(j["run"]["seeds"].size() == 4);
  CHECK(j["run"]["seeds"][2] == 2);
  CHECK(j["kd"]["tau"] == 4.0);
  CHECK(j["kd"]["alpha_shape"] == 1);
  CHECK(j["kd"]["enabled"] == true);
  REQUIRE(j["synth"]["patterns"].size() == 2);
  CHECK(j["synth"]["patterns"][1]["name"] == "B");
  CHECK(j["synth"]["patterns"][1]["window"][1] == 0.75);
}

TEST_CASE("toml subset: malformed lines are rejected") {
  CHECK_THROWS_AS(parse_toml("key value\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_toml("x = [1, 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_toml("x = \"unterminated\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_toml("x = nonsense!\n"), std::invalid_argument);
}

TEST_CASE("run config: the shipped reference spec loads and validates") {
  const RunConfig rc = load_run_config(LITEHEART_REFERENCE_CONFIG, /*with_env=*/false);
  CHECK(rc.seeds == std::vector<std::uint64_t>{0, 1, 2, 3});
  CHECK(rc.experiment.synth.n_records == 2500);
  CHECK(rc.experiment.synth.n_classes == 6);
  CHECK(rc.experiment.student_tier == "micro");
  CHECK(rc.experiment.restoration_tier == "tiny");
  CHECK(rc.experiment.split.labeled_frac == 0.1);
  CHECK(rc.experiment.kd.tau > 0);
  CHECK(rc.experiment.synth.patterns.size() == 6);
  // two classes leave lead 0 untouched
  int lead0_free = 0;
  for (const auto& p : rc.experiment.synth.patterns) {
    bool has0 = false;
    for (int l : p.leads) has0 |= (l == 0);
    lead0_free += !has0;
  }
  CHECK(lead0_free == 2);
  CHECK(!rc.config_hash.empty());
}

TEST_CASE("run config: unknown keys are rejected") {
  auto j = load_config_file(LITEHEART_REFERENCE_CONFIG);
  j["kd"]["bogus_knob"] = 1.0;
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("bogus_knob"),
                       std::invalid_argument);

  auto j2 = load_config_file(LITEHEART_REFERENCE_CONFIG);
  j2["synth"]["patterns"][0]["surprise"] = "x";
  CHECK_THROWS_AS(parse_run_config(j2), std::invalid_argument);
}

TEST_CASE("run config: invalid values are rejected") {
  auto j = load_config_file(LITEHEART_REFERENCE_CONFIG);
  j["split"]["labeled_frac"] = 0.0;
  CHECK_THROWS_AS(parse_run_config(j), std::invalid_argument);

  auto j2 = load_config_file(LITEHEART_REFERENCE_CONFIG);
  j2["models"]["student_tier"] = "giant";
  CHECK_THROWS_AS(parse_run_config(j2), std::invalid_argument);

  auto j3 = load_config_file(LITEHEART_REFERENCE_CONFIG);
  j3["models"]["lead_index"] = 12;
  CHECK_THROWS_AS(parse_run_config(j3), std::invalid_argument);
}

TEST_CASE("environment overrides: known keys apply, unknown names fail") {
  setenv("LITEHEART_KD_TAU", "2.5", 1);
  setenv("LITEHEART_TRAIN_DISTILL_MAX_EPOCHS", "7", 1);
  setenv("LITEHEART_MODELS_STUDENT_TIER", "\"tiny\"", 1);
  auto j = load_config_file(LITEHEART_REFERENCE_CONFIG);
  apply_env_overrides(j);
  const RunConfig rc = parse_run_config(j);
  CHECK(rc.experiment.kd.tau == 2.5);
  CHECK(rc.experiment.distill_train.max_epochs == 7);
  CHECK(rc.experiment.student_tier == "tiny");
  unsetenv("LITEHEART_KD_TAU");
  unsetenv("LITEHEART_TRAIN_DISTILL_MAX_EPOCHS");
  unsetenv("LITEHEART_MODELS_STUDENT_TIER");

  setenv("LITEHEART_NO_SUCH_KEY", "1", 1);
  auto j2 = load_config_file(LITEHEART_REFERENCE_CONFIG);
  CHECK_THROWS_AS(apply_env_overrides(j2), std::invalid_argument);
  unsetenv("LITEHEART_NO_SUCH_KEY");
}

TEST_CASE("environment overrides: bare tier strings fall back to plain text") {
  setenv("LITEHEART_MODELS_RESTORATION_TIER", "small", 1);
  auto j = load_config_file(LITEHEART_REFERENCE_CONFIG);
  apply_env_overrides(j);
  const RunConfig rc = parse_run_config(j);
  CHECK(rc.experiment.restoration_tier == "small");
  unsetenv("LITEHEART_MODELS_RESTORATION_TIER");
}

TEST_CASE("snapshot: to_toml round-trips to an identical resolved config") {
  const RunConfig rc = load_run_config(LITEHEART_REFERENCE_CONFIG, /*with_env=*/false);
  const std::string snapshot = rc.to_toml();
  const RunConfig rc2 = parse_run_config(parse_toml(snapshot));
  CHECK(rc2.to_toml() == snapshot);
  CHECK(rc2.config_hash == rc.config_hash);
}

TEST_CASE("json configs load through the same path") {
  const std::string path = "/tmp/lh_cfg.json";
  {
    std::ofstream out(path);
    out << R"({"run": {"name": "j", "seeds": [5], "dataset_dir": "/tmp/ds"},
               "kd": {"tau": 3.0}})";
  }
  const RunConfig rc = load_run_config(path, /*with_env=*/false);
  CHECK(rc.name == "j");
  CHECK(rc.seeds == std::vector<std::uint64_t>{5});
  CHECK(rc.dataset_dir == "/tmp/ds");
  CHECK(rc.experiment.kd.tau == 3.0);
}
