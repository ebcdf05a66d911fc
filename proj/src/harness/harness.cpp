#include "rtslab/harness/harness.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "rtslab/errors.hpp"

namespace rtslab::harness {

void AttackSchedule::validate() const {
  if (!enabled) return;
  if (burst_length < 1 || period < burst_length) {
    throw ContractError("attack schedule needs period >= burst_length >= 1");
  }
  if (warmup < 1) throw ContractError("attack warmup must be >= 1 so a previous state exists");
}

bool AttackSchedule::attacked(int step) const {
  return enabled && step >= warmup && (step - warmup) % period < burst_length;
}

std::string AttackSchedule::label() const { return enabled ? "burst" + std::to_string(burst_length) : "none"; }

std::string_view condition_name(ProtectionCondition c) {
  switch (c) {
    case ProtectionCondition::unprotected_clean:
      return "unprotected-clean";
    case ProtectionCondition::unprotected_attacked:
      return "unprotected-attacked";
    case ProtectionCondition::single_defended:
      return "single-objective-defended";
    case ProtectionCondition::dual_defended:
      return "dual-objective-defended";
  }
  return "unknown";
}

ProtectionCondition condition_from_name(std::string_view name) {
  for (auto c : kAllConditions) {
    if (condition_name(c) == name) return c;
  }
  throw ContractError("unknown protection condition '" + std::string(name) + "'");
}

namespace {

double l2(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(static_cast<double>(a[i]) - b[i], 2);
  return std::sqrt(acc);
}

int count_if_pair(const EpisodeReport& r, bool attacked, bool flagged) {
  int n = 0;
  for (std::size_t t = 0; t < r.attacked.size(); ++t) {
    n += (r.attacked[t] != 0) == attacked && (r.flagged[t] != 0) == flagged;
  }
  return n;
}

}  // namespace

int EpisodeReport::true_positives() const { return count_if_pair(*this, true, true); }
int EpisodeReport::false_positives() const { return count_if_pair(*this, false, true); }
int EpisodeReport::false_negatives() const { return count_if_pair(*this, true, false); }
int EpisodeReport::true_negatives() const { return count_if_pair(*this, false, false); }

EpisodeReport run_episode(const agent::Policy& policy, const envs::Env& env_proto, const AttackSchedule& schedule,
                          const backdoor::Trigger* trigger, const std::optional<Guard>& guard, std::uint64_t seed) {
  schedule.validate();
  if (schedule.enabled && trigger == nullptr) throw ContractError("an enabled attack schedule needs a trigger");
  if (guard && guard->model == nullptr) throw ContractError("guard without a dynamics model");
  auto env = env_proto.clone();
  EpisodeReport rep;
  rep.schedule = schedule.label();
  rep.seed = seed;
  envs::State s_true = env->reset(seed);
  envs::State prev_chosen;
  envs::Action prev_action;
  for (int t = 0; !env->done(); ++t) {
    const bool attacked = schedule.attacked(t);
    envs::State incoming = attacked ? backdoor::apply_trigger(*trigger, s_true) : s_true;
    envs::State chosen;
    bool flagged = false;
    double residual = std::numeric_limits<double>::quiet_NaN();
    if (guard && t > 0) {
      auto g = defender::guard_step(*guard->model, policy, guard->detector, guard->threshold, prev_chosen,
                                    prev_action, incoming);
      chosen = std::move(g.chosen);
      flagged = g.flagged;
      residual = g.residual;
    } else {
      chosen = std::move(incoming);
    }
    const envs::Action action = policy.act(chosen);
    rep.attacked.push_back(attacked);
    rep.flagged.push_back(flagged);
    rep.residuals.push_back(residual);
    rep.state_loss.push_back(l2(s_true, chosen));
    rep.action_loss.push_back(l2(policy.act(s_true), action));
    rep.true_states.push_back(s_true);
    rep.chosen_states.push_back(chosen);
    const auto step = env->step(action);
    rep.episode_return += step.reward;
    rep.failed = step.reason == envs::DoneReason::failure;
    prev_chosen = std::move(chosen);
    prev_action = action;
    s_true = step.next_state;
  }
  rep.length = env->steps_taken();
  return rep;
}

LossSummary compute_losses(const agent::Policy& policy, std::span<const envs::State> truth,
                           std::span<const envs::State> predicted) {
  if (truth.empty() || truth.size() != predicted.size()) {
    throw ContractError("compute_losses needs a non-empty, equal-length pairing");
  }
  LossSummary out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.state_loss += l2(truth[i], predicted[i]);
    out.action_loss += l2(policy.act(truth[i]), policy.act(predicted[i]));
  }
  out.state_loss /= static_cast<double>(truth.size());
  out.action_loss /= static_cast<double>(truth.size());
  return out;
}

LossSummary compute_losses(const agent::Policy& policy, const EpisodeReport& report) {
  std::vector<envs::State> truth, predicted;
  for (std::size_t t = 0; t < report.flagged.size(); ++t) {
    if (!report.flagged[t]) continue;
    truth.push_back(report.true_states[t]);
    predicted.push_back(report.chosen_states[t]);
  }
  return compute_losses(policy, truth, predicted);
}

double DetectionStats::precision() const {
  return tp + fp == 0 ? std::numeric_limits<double>::quiet_NaN() : double(tp) / double(tp + fp);
}
double DetectionStats::recall() const {
  return tp + fn == 0 ? std::numeric_limits<double>::quiet_NaN() : double(tp) / double(tp + fn);
}
double DetectionStats::false_positive_rate() const {
  return fp + tn == 0 ? std::numeric_limits<double>::quiet_NaN() : double(fp) / double(fp + tn);
}

DetectionStats detection_stats(std::span<const EpisodeReport> rows) {
  DetectionStats s;
  for (const auto& r : rows) {
    s.tp += r.true_positives();
    s.fp += r.false_positives();
    s.fn += r.false_negatives();
    s.tn += r.true_negatives();
  }
  return s;
}

const ConditionSummary& MatrixReport::summary(ProtectionCondition c, const std::string& schedule) const {
  for (const auto& s : summaries) {
    if (s.condition == condition_name(c) && s.schedule == schedule) return s;
  }
  throw ContractError("no summary for " + std::string(condition_name(c)) + " / " + schedule);
}

MatrixReport evaluate_matrix(const MatrixInputs& in, const envs::Env& env,
                             std::span<const ProtectionCondition> conditions,
                             std::span<const AttackSchedule> schedules, std::span<const std::uint64_t> seeds) {
  if (in.policy == nullptr) throw MissingArtifactError("evaluation needs the victim policy");
  if (seeds.empty()) throw ContractError("evaluation needs at least one seed");
  bool any_attack = false;
  for (auto c : conditions) {
    if (c == ProtectionCondition::single_defended && in.single == nullptr) {
      throw MissingArtifactError("single-objective-defended needs the single-objective defender");
    }
    if (c == ProtectionCondition::dual_defended && in.dual == nullptr) {
      throw MissingArtifactError("dual-objective-defended needs the dual-objective defender");
    }
    any_attack = any_attack || c != ProtectionCondition::unprotected_clean;
  }
  if (any_attack && in.trigger == nullptr) throw MissingArtifactError("attacked conditions need the trigger");

  MatrixReport report;
  for (const auto& schedule : schedules) {
    double clean_mean = std::numeric_limits<double>::quiet_NaN();
    for (auto c : conditions) {
      AttackSchedule sched = schedule;
      std::optional<Guard> guard;
      if (c == ProtectionCondition::unprotected_clean) sched.enabled = false;
      if (c == ProtectionCondition::single_defended) guard = Guard{in.single, in.single->threshold(), in.detector};
      if (c == ProtectionCondition::dual_defended) guard = Guard{in.dual, in.dual->threshold(), in.detector};
      const std::size_t first = report.rows.size();
      for (auto seed : seeds) {
        auto row = run_episode(*in.policy, env, sched, in.trigger, guard, seed);
        row.condition = std::string(condition_name(c));
        row.schedule = schedule.label();
        report.rows.push_back(std::move(row));
      }
      const std::span<const EpisodeReport> rows(report.rows.data() + first, seeds.size());
      ConditionSummary s;
      s.condition = std::string(condition_name(c));
      s.schedule = schedule.label();
      s.episodes = static_cast<int>(rows.size());
      double attacked_dist = 0.0;
      long long attacked_steps = 0;
      for (const auto& r : rows) {
        s.mean_return += r.episode_return;
        s.mean_length += r.length;
        s.failures += r.failed;
        for (std::size_t t = 0; t < r.attacked.size(); ++t) {
          if (!r.attacked[t]) continue;
          attacked_dist += r.action_loss[t];
          ++attacked_steps;
        }
      }
      s.mean_return /= s.episodes;
      s.mean_length /= s.episodes;
      for (const auto& r : rows) s.std_return += std::pow(r.episode_return - s.mean_return, 2);
      s.std_return = s.episodes > 1 ? std::sqrt(s.std_return / (s.episodes - 1)) : 0.0;
      s.detection = detection_stats(rows);
      s.attacked_action_distance =
          attacked_steps ? attacked_dist / double(attacked_steps) : std::numeric_limits<double>::quiet_NaN();
      if (c == ProtectionCondition::unprotected_clean) clean_mean = s.mean_return;
      report.summaries.push_back(std::move(s));
    }
    for (auto& s : report.summaries) {
      if (s.schedule == schedule.label()) s.return_ratio = s.mean_return / clean_mean;
    }
  }
  return report;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  return os;
}

double mean_of(const std::vector<double>& v, const std::vector<std::uint8_t>& mask) {
  double acc = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!mask[i]) continue;
    acc += v[i];
    ++n;
  }
  return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void write_episode_csv(const MatrixReport& report, const Provenance& prov, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "schedule,condition,seed,episode_return,length,failed,attacked_steps,flagged_steps,"
        "true_positives,false_positives,false_negatives,true_negatives,"
        "mean_attacked_residual,mean_attacked_state_loss,mean_attacked_action_loss,config_hash,version\n";
  for (const auto& r : report.rows) {
    int attacked = 0, flagged = 0;
    for (std::size_t t = 0; t < r.attacked.size(); ++t) {
      attacked += r.attacked[t];
      flagged += r.flagged[t];
    }
    os << r.schedule << ',' << r.condition << ',' << r.seed << ',' << format_double(r.episode_return) << ','
       << r.length << ',' << int(r.failed) << ',' << attacked << ',' << flagged << ',' << r.true_positives() << ','
       << r.false_positives() << ',' << r.false_negatives() << ',' << r.true_negatives() << ','
       << format_double(mean_of(r.residuals, r.attacked)) << ',' << format_double(mean_of(r.state_loss, r.attacked))
       << ',' << format_double(mean_of(r.action_loss, r.attacked)) << ',' << prov.config_hash << ','
       << prov.version << '\n';
  }
  if (!os) throw FormatError("failed writing " + path.string());
}

void write_step_csv(const MatrixReport& report, const Provenance& prov, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "schedule,condition,seed,step,attacked,flagged,residual,state_loss,action_loss,config_hash,version\n";
  for (const auto& r : report.rows) {
    for (std::size_t t = 0; t < r.attacked.size(); ++t) {
      os << r.schedule << ',' << r.condition << ',' << r.seed << ',' << t << ',' << int(r.attacked[t]) << ','
         << int(r.flagged[t]) << ',' << format_double(r.residuals[t]) << ',' << format_double(r.state_loss[t]) << ','
         << format_double(r.action_loss[t]) << ',' << prov.config_hash << ',' << prov.version << '\n';
    }
  }
  if (!os) throw FormatError("failed writing " + path.string());
}

std::string summary_json(const MatrixReport& report, const Provenance& prov) {
  using nlohmann::ordered_json;
  auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  ordered_json root;
  root["config_hash"] = prov.config_hash;
  root["version"] = prov.version;
  ordered_json conds = ordered_json::array();
  std::map<std::string, std::map<std::string, double>> means;
  for (const auto& s : report.summaries) {
    means[s.schedule][s.condition] = s.mean_return;
    ordered_json j;
    j["schedule"] = s.schedule;
    j["condition"] = s.condition;
    j["episodes"] = s.episodes;
    j["mean_return"] = num(s.mean_return);
    j["std_return"] = num(s.std_return);
    j["mean_length"] = num(s.mean_length);
    j["failures"] = s.failures;
    j["return_ratio"] = num(s.return_ratio);
    j["attacked_action_distance"] = num(s.attacked_action_distance);
    j["detection"] = {{"true_positives", s.detection.tp},
                      {"false_positives", s.detection.fp},
                      {"false_negatives", s.detection.fn},
                      {"true_negatives", s.detection.tn},
                      {"precision", num(s.detection.precision())},
                      {"recall", num(s.detection.recall())},
                      {"false_positive_rate", num(s.detection.false_positive_rate())}};
    conds.push_back(std::move(j));
  }
  root["conditions"] = std::move(conds);
  ordered_json orderings = ordered_json::object();
  const std::string clean(condition_name(ProtectionCondition::unprotected_clean));
  const std::string dual(condition_name(ProtectionCondition::dual_defended));
  const std::string single(condition_name(ProtectionCondition::single_defended));
  const std::string attacked(condition_name(ProtectionCondition::unprotected_attacked));
  for (const auto& [schedule, m] : means) {
    if (!m.contains(clean) || !m.contains(dual) || !m.contains(single) || !m.contains(attacked)) continue;
    orderings[schedule] = {{"clean_ge_dual", m.at(clean) >= m.at(dual)},
                           {"dual_ge_single", m.at(dual) >= m.at(single)},
                           {"single_ge_attacked", m.at(single) >= m.at(attacked)},
                           {"headline_ordering_holds",
                            m.at(clean) >= m.at(dual) && m.at(dual) >= m.at(single) && m.at(single) >= m.at(attacked)}};
  }
  root["orderings"] = std::move(orderings);
  return root.dump(2) + "\n";
}

}  // namespace rtslab::harness
