#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtslab/cli/config.hpp"

namespace rtslab::cli {

// An output file already exists and --force was not given.
class OutputExistsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  bool force = false;
};

struct StageResult {
  std::vector<std::filesystem::path> outputs;
  bool checks_passed = true;  // stage-specific acceptance checks
};

// Artifact names inside output_dir.
namespace artifact {
inline constexpr const char* kCleanPolicy = "clean_policy.bin";
inline constexpr const char* kCleanMidpoint = "clean_midpoint.bin";
inline constexpr const char* kPoisonedPolicy = "poisoned_policy.bin";
inline constexpr const char* kPoisonedMidpoint = "poisoned_midpoint.bin";
inline constexpr const char* kTrigger = "trigger.json";
inline constexpr const char* kPoisonAudit = "poison_audit.json";
inline constexpr const char* kTrainReturns = "train_returns.csv";
inline constexpr const char* kTrainSummary = "train_summary.json";
inline constexpr const char* kRollouts = "rollouts.bin";
inline constexpr const char* kSingleDefender = "defender_single.bin";
inline constexpr const char* kDualDefender = "defender_dual.bin";
inline constexpr const char* kDefenderTraining = "defender_training.csv";
inline constexpr const char* kDefendSummary = "defend_summary.json";
inline constexpr const char* kEvalEpisodes = "eval_episodes.csv";
inline constexpr const char* kEvalSteps = "eval_steps.csv";
inline constexpr const char* kEvalSummary = "eval_summary.json";
}  // namespace artifact

std::string tool_version();

// Trains the clean and poisoned victims, resolves the trigger and writes the
// poison audit log. checks_passed reflects the backdoor-success and stealth checks.
StageResult cmd_train(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
// Collects rollouts with the poisoned policy, trains both defenders on identical
// data and calibrates their thresholds on the holdout split.
StageResult cmd_defend(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
// Evaluates all protection conditions over all schedules on the configured seeds.
StageResult cmd_eval(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
// Pretty-prints the stage summaries. checks_passed is the headline ordering
// (clean >= dual >= single >= attacked) on every multi-step schedule.
StageResult cmd_report(const ExperimentConfig& config, std::ostream& out);

backdoor::Trigger load_trigger(const std::filesystem::path& path);

}  // namespace rtslab::cli
