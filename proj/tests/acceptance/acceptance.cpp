// Acceptance suite: runs the full pipeline on a preset config and prints one
// PASS/FAIL line per criterion. Exit status is non-zero when a criterion fails
// that is not listed with --expect-fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcheck.hpp"
#include "rtslab/cli/config.hpp"
#include "rtslab/cli/pipeline.hpp"
#include "rtslab/log.hpp"

using namespace rtslab;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-3;
constexpr double kGradRuntimeSec = 60.0;
constexpr double kCompetentLength = 0.9;
constexpr double kVictimRuntimeSec = 600.0;
constexpr double kStealth = 0.90;
constexpr double kBurst1Ceiling = 0.60;
constexpr double kBurst2Ceiling = 0.15;
constexpr double kEfficacySlack = 0.10;  // +-10 percentage points
constexpr double kSeparation = 5.0;
constexpr double kRecall = 0.99;
constexpr double kPrecision = 0.95;
constexpr double kFpr = 0.01;
constexpr long long kMinAttackedSteps = 1000;
constexpr long long kMinCleanSteps = 10000;
constexpr int kLossSeeds = 5;
constexpr double kDualFloor = 0.85;
constexpr double kSingleGap = 0.20;
constexpr double kBurst1Floor = 0.85;
constexpr double kDefenseRuntimeSec = 900.0;
constexpr double kGuardCost = 0.05;
constexpr std::size_t kMinSeeds = 20;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

const json& condition(const json& summary, const std::string& schedule, const std::string& cond) {
  for (const auto& c : summary.at("conditions")) {
    if (c.at("schedule") == schedule && c.at("condition") == cond) return c;
  }
  throw std::runtime_error("summary lacks " + schedule + "/" + cond);
}

double ratio(const json& summary, const std::string& schedule, const std::string& cond) {
  const auto& v = condition(summary, schedule, cond).at("return_ratio");
  return v.is_null() ? std::nan("") : v.get<double>();
}

bool bitwise_equal(const harness::EpisodeReport& a, const harness::EpisodeReport& b) {
  return a.true_states == b.true_states && a.chosen_states == b.chosen_states &&
         std::memcmp(&a.episode_return, &b.episode_return, sizeof(double)) == 0 && a.length == b.length;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string config_path;
  std::string work_dir = "acceptance_run";
  std::string tiny_path;
  std::set<int> expect_fail;
  bool reuse = false;
  app.add_option("--config", config_path, "preset experiment config")->required();
  app.add_option("--tiny-config", tiny_path, "small config for the full re-run reproducibility check")->required();
  app.add_option("--work-dir", work_dir, "scratch directory for artifacts");
  app.add_option("--expect-fail", expect_fail, "criteria documented as not met; reported but not fatal");
  app.add_flag("--reuse", reuse, "reuse artifacts from a previous run (runtime limits are then not measured)");
  CLI11_PARSE(app, argc, argv);

  std::size_t warnings = 0;
  set_warning_sink([&](std::string_view) { ++warnings; });
  std::vector<Outcome> results;
  fs::create_directories(work_dir);
  std::ofstream report(fs::path(work_dir) / "acceptance_report.txt");
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    report << line << std::endl;
  };
  auto record = [&](int id, bool pass, std::string detail) {
    results.push_back({id, pass, detail});
    emit(std::string(pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + ": " + detail);
  };

  // 1. Gradient correctness.
  {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_op;
    for (const auto& op : gradcheck::tape_op_errors(100)) {
      if (op.worst_error > worst) worst = op.worst_error, worst_op = op.name;
    }
    const double mlp = gradcheck::mlp_error(100);
    const double composed = gradcheck::composed_error(100);
    const double t = seconds_since(t0);
    record(1, worst < kGradTolerance && mlp < kGradTolerance && composed < kGradTolerance && t < kGradRuntimeSec,
           fmt("worst op rel err %.2e (", worst) + worst_op +
               fmt("), mlp %.2e, composed through frozen policy %.2e, %.1fs", mlp, composed, t));
  }

  auto config = cli::load_config(config_path);
  config.output_dir = fs::path(work_dir) / "main";
  const fs::path dir = config.output_dir;
  std::ostringstream log;
  const cli::RunOptions force{true};
  const bool have = reuse && fs::exists(dir / cli::artifact::kEvalSummary);
  double train_sec = std::nan(""), eval_sec = std::nan("");
  if (!have) {
    auto t0 = Clock::now();
    cli::cmd_train(config, force, log);
    train_sec = seconds_since(t0);
    cli::cmd_defend(config, force, log);
    t0 = Clock::now();
    cli::cmd_eval(config, force, log);
    eval_sec = seconds_since(t0);
  }
  const auto train = read_json(dir / cli::artifact::kTrainSummary);
  const auto defend = read_json(dir / cli::artifact::kDefendSummary);
  const auto eval = read_json(dir / cli::artifact::kEvalSummary);
  const std::size_t n_seeds = config.eval.seeds.size();

  // 2. Victim competence.
  {
    const double len = train.at("clean").at("mean_length").get<double>();
    const double horizon = train.at("horizon").get<double>();
    const bool fast = std::isnan(train_sec) || train_sec < kVictimRuntimeSec;
    record(2, len >= kCompetentLength * horizon && n_seeds >= kMinSeeds && fast,
           fmt("clean mean length %.1f / horizon %.0f over %.0f episodes; train stage (clean+poisoned) %.0fs", len,
               horizon, static_cast<double>(train.at("eval_episodes").get<int>()), train_sec));
  }

  // 3. Backdoor efficacy and stealth.
  {
    const double stealth = train.at("stealth_retained").get<double>();
    const double b1 = ratio(eval, "burst1", "unprotected-attacked");
    const double b2 = ratio(eval, "burst2", "unprotected-attacked");
    const double dist = train.at("trigger_target_distance").get<double>();
    record(3,
           stealth >= kStealth && b1 < kBurst1Ceiling + kEfficacySlack && b2 < kBurst2Ceiling + kEfficacySlack &&
               n_seeds >= kMinSeeds,
           fmt("clean-episode retention %.3f, burst1 attacked %.3f of clean, burst2 %.3f, trigger->target dist %.3f",
               stealth, b1, b2, dist));
  }

  // 4. Defender fidelity.
  {
    bool ok = true;
    std::string detail;
    for (const char* m : {"single", "dual"}) {
      const auto& d = defend.at(m);
      const double h = d.at("threshold").get<double>();
      const double p999 = d.at("test_residual_p999").get<double>();
      const double sep = d.at("separation_factor").is_null() ? 0.0 : d.at("separation_factor").get<double>();
      ok = ok && p999 < h && sep >= kSeparation;
      detail += std::string(detail.empty() ? "" : "; ") + m +
                fmt(": held-out p99.9 %.4g vs H %.4g, separation %.1f", p999, h, sep);
    }
    record(4, ok, detail);
  }

  const auto env = config.make_env();
  const auto policy = agent::load_policy(dir / cli::artifact::kPoisonedPolicy);
  const auto trigger = cli::load_trigger(dir / cli::artifact::kTrigger);
  const auto single = defender::load_model(dir / cli::artifact::kSingleDefender);
  const auto dual = defender::load_model(dir / cli::artifact::kDualDefender);

  // 5. Detection quality on a dedicated, larger seed set.
  {
    std::vector<std::uint64_t> seeds(60);
    std::iota(seeds.begin(), seeds.end(), 50'000);
    const harness::MatrixInputs in{&policy, &trigger, &single, &dual, config.defender.detector};
    const harness::ProtectionCondition conds[] = {harness::ProtectionCondition::dual_defended};
    const auto m = harness::evaluate_matrix(in, *env, conds, config.eval.schedules, seeds);
    const auto s = harness::detection_stats(m.rows);
    const long long attacked = s.tp + s.fn, clean = s.fp + s.tn;
    record(5,
           s.recall() >= kRecall && s.precision() >= kPrecision && s.false_positive_rate() <= kFpr &&
               attacked >= kMinAttackedSteps && clean >= kMinCleanSteps,
           fmt("dual guard recall %.4f precision %.4f FPR %.5f", s.recall(), s.precision(), s.false_positive_rate()) +
               fmt(" over %.0f attacked / %.0f clean steps", static_cast<double>(attacked),
                   static_cast<double>(clean)));
  }

  // 6. Loss crossover across training seeds on the stored rollouts.
  {
    const auto data = defender::load_dataset(dir / cli::artifact::kRollouts);
    const auto [train_set, hold] = defender::split_dataset(data, config.defender.holdout_fraction, config.seeds.defend + 1);
    double s_state = 0, s_action = 0, d_state = 0, d_action = 0;
    for (int k = 0; k < kLossSeeds; ++k) {
      const std::uint64_t seed = 9000 + k;
      const auto ms = defender::train_defender(train_set, defender::Objective::single, config.defender.lambda, &policy,
                                               config.defender.train, seed);
      const auto md = defender::train_defender(train_set, defender::Objective::dual, config.defender.lambda, &policy,
                                               config.defender.train, seed);
      const auto ls = defender::holdout_losses(ms, policy, hold);
      const auto ld = defender::holdout_losses(md, policy, hold);
      s_state += ls.state_loss / kLossSeeds, s_action += ls.action_loss / kLossSeeds;
      d_state += ld.state_loss / kLossSeeds, d_action += ld.action_loss / kLossSeeds;
    }
    record(6, d_action < s_action && s_state <= d_state,
           fmt("mean over 5 seeds: action loss dual %.4f vs single %.4f; state loss single %.4f vs dual %.4f",
               d_action, s_action, s_state, d_state));
  }

  // 7. Defense ordering.
  {
    const double clean_b2 = ratio(eval, "burst2", "unprotected-clean");
    const double dual2 = ratio(eval, "burst2", "dual-objective-defended");
    const double single2 = ratio(eval, "burst2", "single-objective-defended");
    const double att2 = ratio(eval, "burst2", "unprotected-attacked");
    const double dual1 = ratio(eval, "burst1", "dual-objective-defended");
    const double single1 = ratio(eval, "burst1", "single-objective-defended");
    const bool fast = std::isnan(eval_sec) || eval_sec < kDefenseRuntimeSec;
    record(7,
           dual2 >= kDualFloor && single2 <= dual2 - kSingleGap && att2 < single2 && att2 < dual2 &&
               att2 < clean_b2 && dual1 >= kBurst1Floor && single1 >= kBurst1Floor && n_seeds >= kMinSeeds && fast,
           fmt("burst2 of clean: dual %.3f single %.3f attacked %.3f; ", dual2, single2, att2) +
               fmt("burst1: dual %.3f single %.3f; eval stage %.0fs", dual1, single1, eval_sec));
  }

  // 8. Pass-through and clean-run cost.
  {
    bool bitwise = true;
    double clean_sum = 0.0, guarded_sum = 0.0;
    harness::AttackSchedule off;
    off.enabled = false;
    for (const auto& schedule : config.eval.schedules) {
      for (auto seed : config.eval.seeds) {
        const auto bare = harness::run_episode(policy, *env, schedule, &trigger, std::nullopt, seed);
        const auto inf = harness::run_episode(policy, *env, schedule, &trigger,
                                              harness::Guard{&dual, INFINITY, config.defender.detector}, seed);
        bitwise = bitwise && bitwise_equal(bare, inf);
      }
    }
    double worst_cost = 0.0;
    for (const auto* model : {&single, &dual}) {
      clean_sum = guarded_sum = 0.0;
      for (auto seed : config.eval.seeds) {
        clean_sum += harness::run_episode(policy, *env, off, nullptr, std::nullopt, seed).episode_return;
        guarded_sum += harness::run_episode(policy, *env, off, nullptr,
                                            harness::Guard{model, model->threshold(), config.defender.detector}, seed)
                           .episode_return;
      }
      worst_cost = std::max(worst_cost, (clean_sum - guarded_sum) / std::abs(clean_sum));
    }
    record(8, bitwise && worst_cost < kGuardCost,
           std::string(bitwise ? "H=inf trajectories bitwise identical" : "H=inf trajectories DIFFER") +
               fmt("; worst clean-run return cost of calibrated guard %.4f", worst_cost));
  }

  // 9. Reproducibility: full re-run of every stage on a small config, and a
  // re-run of eval on the preset artifacts.
  {
    bool same = true;
    std::string diffs;
    auto tiny = cli::load_config(tiny_path);
    for (const char* sub : {"tiny_a", "tiny_b"}) {
      tiny.output_dir = fs::path(work_dir) / sub;
      cli::cmd_train(tiny, force, log);
      cli::cmd_defend(tiny, force, log);
      cli::cmd_eval(tiny, force, log);
    }
    const char* csvs[] = {cli::artifact::kTrainReturns, cli::artifact::kDefenderTraining, cli::artifact::kEvalEpisodes,
                          cli::artifact::kEvalSteps};
    for (const char* name : csvs) {
      if (slurp(fs::path(work_dir) / "tiny_a" / name) != slurp(fs::path(work_dir) / "tiny_b" / name)) {
        same = false, diffs += std::string(" ") + name;
      }
    }
    const fs::path again = fs::path(work_dir) / "main_rerun";
    fs::remove_all(again);
    fs::create_directories(again);
    for (const char* name : {cli::artifact::kPoisonedPolicy, cli::artifact::kTrigger, cli::artifact::kSingleDefender,
                             cli::artifact::kDualDefender}) {
      fs::copy_file(dir / name, again / name);
    }
    auto rerun = config;
    rerun.output_dir = again;
    cli::cmd_eval(rerun, {}, log);
    for (const char* name : {cli::artifact::kEvalEpisodes, cli::artifact::kEvalSteps}) {
      if (slurp(dir / name) != slurp(again / name)) same = false, diffs += std::string(" main/") + name;
    }
    record(9, same, same ? "train/defend/eval CSVs byte-identical across re-runs" : "differences in:" + diffs);
  }

  int unexpected = 0;
  for (const auto& r : results) {
    if (!r.pass && !expect_fail.contains(r.id)) ++unexpected;
    if (r.pass && expect_fail.contains(r.id)) emit("note: criterion " + std::to_string(r.id) + " passed unexpectedly");
  }
  for (int id : expect_fail) emit("expected-fail (documented): criterion " + std::to_string(id));
  emit(std::string(unexpected == 0 ? "acceptance: OK" : "acceptance: FAILED") + " (" + std::to_string(warnings) +
       " warnings)");
  return unexpected == 0 ? 0 : 4;
}
