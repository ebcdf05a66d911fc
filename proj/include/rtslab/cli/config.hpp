#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtslab/agent/ddpg.hpp"
#include "rtslab/backdoor/backdoor.hpp"
#include "rtslab/defender/defender.hpp"
#include "rtslab/envs/env.hpp"
#include "rtslab/harness/harness.hpp"

namespace rtslab::cli {

struct EnvConfig {
  std::string name = "cartpole-continuous";
  envs::PhysicsOverrides physics;
};

// Either an explicit overwrite value or a multiple of the largest |s[dim]| seen
// in clean rollouts of the clean policy (resolved during training).
struct TriggerConfig {
  backdoor::TriggerMode mode = backdoor::TriggerMode::overwrite;
  std::size_t dim = 3;
  std::optional<double> value;
  double value_multiplier = 3.0;
  int calibration_episodes = 10;
};

struct DefenderConfig {
  std::size_t dataset_size = 50000;
  double noise_prob = 0.01;
  std::optional<double> noise_std;  // default 0.1 * action range
  double holdout_fraction = 0.1;
  defender::TrainOptions train;
  float lambda = 1.0f;
  double quantile = 0.999;
  defender::Detector detector = defender::Detector::state;
};

struct EvalConfig {
  std::vector<harness::AttackSchedule> schedules{{20, 1, 20, true}, {20, 2, 20, true}};
  std::vector<std::uint64_t> seeds;  // default 1000..1019
};

struct Seeds {
  std::uint64_t train = 1;
  std::uint64_t poison = 2;
  std::uint64_t defend = 3;
};

struct ExperimentConfig {
  std::string name = "experiment";
  EnvConfig env;
  agent::AgentConfig agent;
  TriggerConfig trigger;
  backdoor::PoisonConfig poison;
  DefenderConfig defender;
  EvalConfig eval;
  Seeds seeds;
  std::filesystem::path output_dir = "runs/experiment";

  std::unique_ptr<envs::Env> make_env() const;
};

// Strict parse: unknown keys and type errors raise ConfigError naming the
// dotted field path. Missing keys keep their defaults.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON of the fully resolved config (sorted keys, compact).
std::string canonical_json(const ExperimentConfig& config);
// FNV-1a of canonical_json with output_dir blanked, 16 hex digits. Paths do
// not change results, so relocating a run keeps its hash.
std::string config_hash(const ExperimentConfig& config);

}  // namespace rtslab::cli
