#include "rtslab/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "rtslab/errors.hpp"
#include "rtslab/hash.hpp"

namespace rtslab::cli {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Trigger calibration episodes use their own seed block, away from eval seeds.
constexpr std::uint64_t kTriggerCalibrationSeedBase = 7'000'000;
// Independent clean rollouts for out-of-sample defender diagnostics.
constexpr std::uint64_t kTestRolloutSeedOffset = 0x5eed;

struct Context {
  const ExperimentConfig& config;
  std::string hash;
  std::string version;
  fs::path dir;

  explicit Context(const ExperimentConfig& c)
      : config(c), hash(config_hash(c)), version(tool_version()), dir(c.output_dir) {}

  fs::path at(const char* name) const { return dir / name; }
  std::string metadata(const std::string& role) const {
    return ordered_json{{"role", role}, {"config_hash", hash}, {"version", version}}.dump();
  }
  harness::Provenance provenance() const { return {hash, version}; }
  ordered_json header() const { return {{"config_hash", hash}, {"version", version}}; }
};

void prepare_outputs(const Context& ctx, std::initializer_list<const char*> names, const RunOptions& opt) {
  if (!opt.force) {
    std::string existing;
    for (const char* n : names) {
      if (fs::exists(ctx.at(n))) existing += (existing.empty() ? "" : ", ") + ctx.at(n).string();
    }
    if (!existing.empty()) throw OutputExistsError("refusing to overwrite " + existing + " (use --force)");
  }
  fs::create_directories(ctx.dir);
}

void require(const fs::path& p, const std::string& what, const std::string& stage) {
  if (!fs::exists(p)) throw MissingArtifactError(what + " (" + p.string() + ") is missing; run `" + stage + "` first");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + p.string() + " for writing");
  os << text;
  if (!os) throw FormatError("failed writing " + p.string());
}

ordered_json read_json(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw MissingArtifactError(p.string() + " not found");
  try {
    return ordered_json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

double mean_return(const std::vector<agent::EpisodeStats>& s) {
  double m = 0.0;
  for (const auto& e : s) m += e.episode_return;
  return m / static_cast<double>(s.size());
}

double mean_length(const std::vector<agent::EpisodeStats>& s) {
  double m = 0.0;
  for (const auto& e : s) m += e.length;
  return m / static_cast<double>(s.size());
}

// 1 + (x - ref) / |ref|: equals x / ref for positive rewards and stays meaningful
// for cost-style (negative) returns.
double retained_fraction(double x, double ref) { return 1.0 + (x - ref) / std::abs(ref); }

double action_range_norm(const envs::EnvSpec& spec) {
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.action_dim; ++i) acc += std::pow(spec.action_high[i] - spec.action_low[i], 2);
  return std::sqrt(acc);
}

std::vector<envs::State> visited_states(const agent::Policy& policy, const envs::Env& proto,
                                        std::span<const std::uint64_t> seeds) {
  auto env = proto.clone();
  std::vector<envs::State> out;
  for (auto seed : seeds) {
    auto s = env->reset(seed);
    while (!env->done()) {
      out.push_back(s);
      s = env->step(policy.act(s)).next_state;
    }
  }
  return out;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, k == 0 ? 0 : k - 1)];
}

}  // namespace

std::string tool_version() { return RTSLAB_VERSION; }

backdoor::Trigger load_trigger(const fs::path& path) {
  const auto j = read_json(path);
  try {
    backdoor::Trigger t;
    t.mode = backdoor::trigger_mode_from_name(j.at("mode").get<std::string>());
    t.mask = j.at("mask").get<std::vector<std::uint8_t>>();
    t.delta = j.at("delta").get<std::vector<float>>();
    t.validate(t.mask.size());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

StageResult cmd_train(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  using namespace artifact;
  const Context ctx(config);
  prepare_outputs(ctx,
                  {kCleanPolicy, kCleanMidpoint, kPoisonedPolicy, kPoisonedMidpoint, kTrigger, kPoisonAudit,
                   kTrainReturns, kTrainSummary},
                  options);
  const auto env = config.make_env();
  const auto& spec = env->spec();

  log << "train: clean victim, " << config.agent.total_steps << " steps\n";
  const auto clean = agent::train_agent(*env, config.agent, config.seeds.train);

  double observed_max = 0.0;
  {
    std::vector<std::uint64_t> cal(static_cast<std::size_t>(config.trigger.calibration_episodes));
    for (std::size_t i = 0; i < cal.size(); ++i) cal[i] = kTriggerCalibrationSeedBase + i;
    for (const auto& s : visited_states(clean.policy, *env, cal)) {
      observed_max = std::max(observed_max, std::abs(static_cast<double>(s[config.trigger.dim])));
    }
  }
  const double value = config.trigger.value.value_or(config.trigger.value_multiplier * observed_max);
  const auto trigger =
      backdoor::single_dim_trigger(spec.state_dim, config.trigger.dim, static_cast<float>(value), config.trigger.mode);

  log << "train: poisoned victim, p=" << config.poison.proportion << " from step "
      << config.poison.injection_start_step << "\n";
  backdoor::OnlinePoisoner poisoner(trigger, config.poison, spec, config.agent.total_steps, config.seeds.poison);
  const auto poisoned = agent::train_agent(*env, config.agent, config.seeds.train, poisoner.hook());

  const auto& seeds = config.eval.seeds;
  const auto clean_eval = agent::evaluate_policy(clean.policy, *env, seeds);
  const auto pois_eval = agent::evaluate_policy(poisoned.policy, *env, seeds);
  const auto clean_mid_eval = agent::evaluate_policy(clean.midpoint, *env, seeds);
  const auto pois_mid_eval = agent::evaluate_policy(poisoned.midpoint, *env, seeds);
  const auto held = visited_states(poisoned.policy, *env, seeds);
  const double distance = backdoor::mean_target_distance(poisoned.policy, trigger, held, config.poison.target_action);
  const double clean_distance = backdoor::mean_target_distance(clean.policy, trigger, held, config.poison.target_action);
  const double distance_limit = 0.1 * action_range_norm(spec);
  const double stealth = retained_fraction(mean_return(pois_eval), mean_return(clean_eval));
  const bool backdoor_ok = distance < distance_limit;
  const bool stealth_ok = stealth >= 0.9;
  const std::size_t expected = static_cast<std::size_t>(
      std::floor(config.poison.proportion * static_cast<double>(config.agent.total_steps)));
  const bool audit_ok = poisoner.poisoned_steps().size() == expected;

  agent::save_policy(clean.policy, ctx.at(kCleanPolicy), ctx.metadata("clean"));
  agent::save_policy(clean.midpoint, ctx.at(kCleanMidpoint), ctx.metadata("clean-midpoint"));
  agent::save_policy(poisoned.policy, ctx.at(kPoisonedPolicy), ctx.metadata("poisoned"));
  agent::save_policy(poisoned.midpoint, ctx.at(kPoisonedMidpoint), ctx.metadata("poisoned-midpoint"));

  ordered_json trig = ctx.header();
  trig["mode"] = backdoor::trigger_mode_name(trigger.mode);
  trig["mask"] = trigger.mask;
  trig["delta"] = trigger.delta;
  trig["dim"] = config.trigger.dim;
  trig["observed_max_abs"] = observed_max;
  trig["value"] = value;
  write_text(ctx.at(kTrigger), trig.dump(2) + "\n");

  ordered_json audit = ctx.header();
  audit["total_steps"] = config.agent.total_steps;
  audit["proportion"] = config.poison.proportion;
  audit["injection_start_step"] = config.poison.injection_start_step;
  audit["expected_count"] = expected;
  audit["poisoned_count"] = poisoner.poisoned_steps().size();
  audit["poisoned_steps"] = poisoner.poisoned_steps();
  audit["warnings"] = poisoner.warnings();
  write_text(ctx.at(kPoisonAudit), audit.dump(2) + "\n");

  {
    std::ostringstream csv;
    csv << "policy,episode,return,config_hash,version\n";
    auto rows = [&](const char* name, const std::vector<float>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        csv << name << ',' << i << ',' << harness::format_double(r[i]) << ',' << ctx.hash << ',' << ctx.version << '\n';
      }
    };
    rows("clean", clean.episode_returns);
    rows("poisoned", poisoned.episode_returns);
    write_text(ctx.at(kTrainReturns), csv.str());
  }

  ordered_json summary = ctx.header();
  auto eval_json = [&](const std::vector<agent::EpisodeStats>& s) {
    int failures = 0;
    for (const auto& e : s) failures += e.failed;
    return ordered_json{{"mean_return", mean_return(s)}, {"mean_length", mean_length(s)}, {"failures", failures}};
  };
  summary["eval_episodes"] = seeds.size();
  summary["horizon"] = spec.max_episode_steps;
  summary["clean"] = eval_json(clean_eval);
  summary["clean_midpoint"] = eval_json(clean_mid_eval);
  summary["poisoned"] = eval_json(pois_eval);
  summary["poisoned_midpoint"] = eval_json(pois_mid_eval);
  summary["trigger_target_distance"] = distance;
  summary["clean_policy_trigger_target_distance"] = clean_distance;
  summary["target_distance_limit"] = distance_limit;
  summary["stealth_retained"] = stealth;
  summary["checks"] = {{"backdoor_success", backdoor_ok}, {"stealth", stealth_ok}, {"poison_count", audit_ok}};
  write_text(ctx.at(kTrainSummary), summary.dump(2) + "\n");

  log << "train: clean mean return " << mean_return(clean_eval) << ", poisoned " << mean_return(pois_eval)
      << ", trigger->target distance " << distance << " (limit " << distance_limit << ")\n";
  StageResult r;
  for (const char* n : {kCleanPolicy, kCleanMidpoint, kPoisonedPolicy, kPoisonedMidpoint, kTrigger, kPoisonAudit,
                        kTrainReturns, kTrainSummary}) {
    r.outputs.push_back(ctx.at(n));
  }
  r.checks_passed = backdoor_ok && stealth_ok && audit_ok;
  return r;
}

StageResult cmd_defend(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  using namespace artifact;
  const Context ctx(config);
  require(ctx.at(kPoisonedPolicy), "poisoned policy checkpoint", "train");
  require(ctx.at(kTrigger), "trigger description", "train");
  prepare_outputs(ctx, {kRollouts, kSingleDefender, kDualDefender, kDefenderTraining, kDefendSummary}, options);
  const auto policy = agent::load_policy(ctx.at(kPoisonedPolicy));
  const auto trigger = load_trigger(ctx.at(kTrigger));
  const auto env = config.make_env();
  const auto& spec = env->spec();
  const auto& dc = config.defender;
  const double noise_std = dc.noise_std.value_or(0.1 * (spec.action_high[0] - spec.action_low[0]));
  const std::uint64_t seed = config.seeds.defend;

  log << "defend: collecting " << dc.dataset_size << " tuples\n";
  const auto data = defender::collect_rollouts(policy, *env, dc.dataset_size, dc.noise_prob, noise_std, seed);
  const auto [train, hold] = defender::split_dataset(data, dc.holdout_fraction, seed + 1);
  const auto test = defender::collect_rollouts(policy, *env, std::max<std::size_t>(hold.size(), 10000), dc.noise_prob,
                                               noise_std, seed + kTestRolloutSeedOffset);

  ordered_json summary = ctx.header();
  summary["dataset_hash"] = hex64(data.content_hash());
  summary["dataset_size"] = data.size();
  summary["train_size"] = train.size();
  summary["holdout_size"] = hold.size();
  summary["test_size"] = test.size();
  summary["noised_steps"] = data.noised_steps();
  summary["noise_std"] = noise_std;
  summary["quantile"] = dc.quantile;

  std::ostringstream csv;
  csv << "objective,epoch,state_loss,action_loss,config_hash,version\n";
  bool ok = true;
  for (auto objective : {defender::Objective::single, defender::Objective::dual}) {
    const std::string name(defender::objective_name(objective));
    log << "defend: training " << name << "-objective model, " << dc.train.epochs << " epochs\n";
    defender::TrainLog tl;
    // Same seed for both modes: identical initial weights and batch order.
    auto model = defender::train_defender(train, objective, dc.lambda, &policy, dc.train, seed + 2, &tl);
    for (std::size_t e = 0; e < tl.state_loss.size(); ++e) {
      csv << name << ',' << e << ',' << harness::format_double(tl.state_loss[e]) << ','
          << harness::format_double(tl.action_loss[e]) << ',' << ctx.hash << ',' << ctx.version << '\n';
    }
    model.set_threshold(defender::calibrate_threshold(model, hold, dc.quantile));
    const auto hold_losses = defender::holdout_losses(model, policy, hold);
    const auto test_losses = defender::holdout_losses(model, policy, test);
    const auto test_res = defender::residuals(model, test);
    std::vector<double> trig_res;
    for (std::size_t i = 0; i < test.size(); ++i) {
      trig_res.push_back(
          defender::detect(model, test.s_prev(i), test.a_prev(i), backdoor::apply_trigger(trigger, test.s(i)), 0.0)
              .residual);
    }
    const double h = model.threshold();
    const double p999 = percentile(test_res, 0.999);
    const double trig_p01 = percentile(trig_res, 0.01);
    const double separation = trig_p01 / h;
    ok = ok && p999 < h && separation >= 5.0;
    summary[name] = {{"threshold", h},
                     {"holdout_state_loss", hold_losses.state_loss},
                     {"holdout_action_loss", hold_losses.action_loss},
                     {"test_state_loss", test_losses.state_loss},
                     {"test_action_loss", test_losses.action_loss},
                     {"test_residual_p50", percentile(test_res, 0.5)},
                     {"test_residual_p999", p999},
                     {"test_residual_max", percentile(test_res, 1.0)},
                     {"trigger_residual_p01", trig_p01},
                     {"trigger_residual_p50", percentile(trig_res, 0.5)},
                     {"separation_factor", num(separation)}};
    defender::save_model(model, ctx.at(objective == defender::Objective::single ? kSingleDefender : kDualDefender),
                         ctx.metadata(name + "-defender;dataset=" + hex64(data.content_hash())));
    log << "defend: " << name << " H=" << h << " state loss " << test_losses.state_loss << " action loss "
        << test_losses.action_loss << "\n";
  }
  defender::save_dataset(data, ctx.at(kRollouts));
  write_text(ctx.at(kDefenderTraining), csv.str());
  write_text(ctx.at(kDefendSummary), summary.dump(2) + "\n");

  StageResult r;
  for (const char* n : {kRollouts, kSingleDefender, kDualDefender, kDefenderTraining, kDefendSummary}) {
    r.outputs.push_back(ctx.at(n));
  }
  r.checks_passed = ok;
  return r;
}

StageResult cmd_eval(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  using namespace artifact;
  const Context ctx(config);
  require(ctx.at(kPoisonedPolicy), "poisoned policy checkpoint", "train");
  require(ctx.at(kTrigger), "trigger description", "train");
  require(ctx.at(kSingleDefender), "single-objective defender", "defend");
  require(ctx.at(kDualDefender), "dual-objective defender", "defend");
  prepare_outputs(ctx, {kEvalEpisodes, kEvalSteps, kEvalSummary}, options);
  const auto policy = agent::load_policy(ctx.at(kPoisonedPolicy));
  const auto trigger = load_trigger(ctx.at(kTrigger));
  const auto single = defender::load_model(ctx.at(kSingleDefender));
  const auto dual = defender::load_model(ctx.at(kDualDefender));
  const auto env = config.make_env();

  log << "eval: " << config.eval.schedules.size() << " schedules x 4 conditions x " << config.eval.seeds.size()
      << " episodes\n";
  const harness::MatrixInputs in{&policy, &trigger, &single, &dual, config.defender.detector};
  const auto report = harness::evaluate_matrix(in, *env, harness::kAllConditions, config.eval.schedules,
                                               config.eval.seeds);
  harness::write_episode_csv(report, ctx.provenance(), ctx.at(kEvalEpisodes));
  harness::write_step_csv(report, ctx.provenance(), ctx.at(kEvalSteps));
  write_text(ctx.at(kEvalSummary), harness::summary_json(report, ctx.provenance()));

  StageResult r{{ctx.at(kEvalEpisodes), ctx.at(kEvalSteps), ctx.at(kEvalSummary)}, true};
  const auto j = read_json(ctx.at(kEvalSummary));
  for (const auto& [schedule, o] : j.at("orderings").items()) {
    r.checks_passed = r.checks_passed && o.at("dual_ge_single").get<bool>() && o.at("single_ge_attacked").get<bool>();
  }
  return r;
}

StageResult cmd_report(const ExperimentConfig& config, std::ostream& out) {
  using namespace artifact;
  const Context ctx(config);
  require(ctx.at(kEvalSummary), "evaluation summary", "eval");
  const auto j = read_json(ctx.at(kEvalSummary));
  out << "config " << j.at("config_hash").get<std::string>() << "  version " << j.at("version").get<std::string>()
      << (j.at("config_hash").get<std::string>() == ctx.hash ? "" : "  (differs from current config!)") << "\n\n";
  out << std::left << std::setw(9) << "schedule" << std::setw(28) << "condition" << std::right << std::setw(10)
      << "return" << std::setw(9) << "std" << std::setw(8) << "ratio" << std::setw(7) << "fails" << std::setw(10)
      << "precision" << std::setw(8) << "recall" << std::setw(8) << "fpr" << "\n";
  auto fmt = [](const ordered_json& v, int prec) {
    if (v.is_null()) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v.get<double>();
    return s.str();
  };
  for (const auto& c : j.at("conditions")) {
    const auto& d = c.at("detection");
    out << std::left << std::setw(9) << c.at("schedule").get<std::string>() << std::setw(28)
        << c.at("condition").get<std::string>() << std::right << std::setw(10) << fmt(c.at("mean_return"), 1)
        << std::setw(9) << fmt(c.at("std_return"), 1) << std::setw(8) << fmt(c.at("return_ratio"), 3) << std::setw(7)
        << c.at("failures").get<int>() << std::setw(10) << fmt(d.at("precision"), 3) << std::setw(8)
        << fmt(d.at("recall"), 3) << std::setw(8) << fmt(d.at("false_positive_rate"), 4) << "\n";
  }
  StageResult r{{}, true};
  out << "\n";
  for (const auto& [schedule, o] : j.at("orderings").items()) {
    out << schedule << ": clean>=dual " << o.at("clean_ge_dual") << ", dual>=single " << o.at("dual_ge_single")
        << ", single>=attacked " << o.at("single_ge_attacked") << "\n";
    r.checks_passed = r.checks_passed && o.at("dual_ge_single").get<bool>() && o.at("single_ge_attacked").get<bool>();
  }
  for (const char* extra : {kTrainSummary, kDefendSummary}) {
    if (!fs::exists(ctx.at(extra))) continue;
    out << "\n" << extra << ":\n" << read_json(ctx.at(extra)).dump(2) << "\n";
  }
  return r;
}

}  // namespace rtslab::cli
