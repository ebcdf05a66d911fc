#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtslab/agent/ddpg.hpp"
#include "rtslab/backdoor/backdoor.hpp"
#include "rtslab/defender/defender.hpp"
#include "rtslab/envs/env.hpp"

namespace rtslab::harness {

// Attack onsets at warmup, warmup + period, ...; each onset perturbs
// burst_length consecutive observations.
struct AttackSchedule {
  int period = 20;
  int burst_length = 1;
  int warmup = 20;
  bool enabled = true;

  void validate() const;
  bool attacked(int step) const;
  // "none" when disabled, else "burst<k>".
  std::string label() const;
};

enum class ProtectionCondition { unprotected_clean, unprotected_attacked, single_defended, dual_defended };

std::string_view condition_name(ProtectionCondition c);
ProtectionCondition condition_from_name(std::string_view name);
inline constexpr ProtectionCondition kAllConditions[] = {
    ProtectionCondition::unprotected_clean, ProtectionCondition::unprotected_attacked,
    ProtectionCondition::single_defended, ProtectionCondition::dual_defended};

struct Guard {
  const defender::DynamicsModel* model = nullptr;
  double threshold = 0.0;
  defender::Detector detector = defender::Detector::state;
};

// One evaluated episode. Per-step series are indexed by time step.
struct EpisodeReport {
  std::string condition;
  std::string schedule;
  std::uint64_t seed = 0;
  double episode_return = 0.0;
  int length = 0;
  bool failed = false;

  std::vector<std::uint8_t> attacked;
  std::vector<std::uint8_t> flagged;
  std::vector<double> residuals;    // NaN where no guard ran
  std::vector<double> state_loss;   // ||s_true - s_chosen||
  std::vector<double> action_loss;  // ||pi(s_true) - pi(s_chosen)||
  std::vector<envs::State> true_states;
  std::vector<envs::State> chosen_states;

  int true_positives() const;
  int false_positives() const;
  int false_negatives() const;
  int true_negatives() const;
};

// Runs one noise-free episode. At attacked steps the observation becomes
// apply_trigger(s_true); with a guard every observation after the first passes
// through guard_step, chaining from the previously chosen state.
EpisodeReport run_episode(const agent::Policy& policy, const envs::Env& env, const AttackSchedule& schedule,
                          const backdoor::Trigger* trigger, const std::optional<Guard>& guard, std::uint64_t seed);

struct LossSummary {
  double state_loss = 0.0;
  double action_loss = 0.0;
};

// Means of ||s_true - s_pred|| and ||pi(s_true) - pi(s_pred)|| over paired rows.
LossSummary compute_losses(const agent::Policy& policy, std::span<const envs::State> truth,
                           std::span<const envs::State> predicted);
// Pairs taken from the steps where the guard substituted a prediction.
LossSummary compute_losses(const agent::Policy& policy, const EpisodeReport& report);

struct DetectionStats {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision() const;
  double recall() const;
  double false_positive_rate() const;
};

DetectionStats detection_stats(std::span<const EpisodeReport> rows);

struct MatrixInputs {
  const agent::Policy* policy = nullptr;
  const backdoor::Trigger* trigger = nullptr;
  const defender::DynamicsModel* single = nullptr;
  const defender::DynamicsModel* dual = nullptr;
  defender::Detector detector = defender::Detector::state;
};

struct ConditionSummary {
  std::string condition;
  std::string schedule;
  int episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_length = 0.0;
  int failures = 0;
  double return_ratio = 0.0;  // mean_return / unprotected-clean mean_return
  DetectionStats detection;
  double attacked_action_distance = 0.0;  // mean ||pi(s_true) - pi(s_chosen)|| at attacked steps
};

struct MatrixReport {
  std::vector<EpisodeReport> rows;  // ordered by (schedule, condition, seed)
  std::vector<ConditionSummary> summaries;
  const ConditionSummary& summary(ProtectionCondition c, const std::string& schedule) const;
};

// Every condition runs on the same seed list. unprotected-clean ignores the
// schedule; the defended conditions use each model's stored threshold.
MatrixReport evaluate_matrix(const MatrixInputs& inputs, const envs::Env& env,
                             std::span<const ProtectionCondition> conditions,
                             std::span<const AttackSchedule> schedules, std::span<const std::uint64_t> seeds);

struct Provenance {
  std::string config_hash;
  std::string version;
};

// One row per (schedule, condition, episode).
void write_episode_csv(const MatrixReport& report, const Provenance& prov, const std::filesystem::path& path);
// One row per (schedule, condition, episode, step).
void write_step_csv(const MatrixReport& report, const Provenance& prov, const std::filesystem::path& path);
std::string summary_json(const MatrixReport& report, const Provenance& prov);

// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string format_double(double v);

}  // namespace rtslab::harness
