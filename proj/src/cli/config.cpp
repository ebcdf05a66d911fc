#include "rtslab/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rtslab/errors.hpp"
#include "rtslab/hash.hpp"

namespace rtslab::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    out = convert<T>(j_->at(key), join(path_, key));
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const json& v = j_->at(key);
    out = v.is_null() ? std::optional<T>{} : std::optional<T>{convert<T>(v, join(path_, key))};
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(has(key) ? &j_->at(key) : nullptr, join(path_, key));
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &j_->at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void finish() const {
    if (!j_) return;
    for (const auto& [key, _] : j_->items()) {
      if (!seen_.contains(key)) throw ConfigError(join(path_, key), "unknown key");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.get<std::int64_t>() < 0) throw ConfigError(path, "expected a non-negative integer");
      }
      return static_cast<T>(v.get<std::int64_t>());
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return static_cast<T>(v.get<double>());
    } else {
      if (!v.is_array()) throw ConfigError(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void check(bool ok, const std::string& path, Fn&& message) {
  if (!ok) throw ConfigError(path, message());
}

void parse_env(Section s, EnvConfig& env) {
  s.get("name", env.name);
  if (const json* p = s.raw("physics")) {
    if (!p->is_object()) throw ConfigError(s.path("physics"), "expected an object");
    for (const auto& [key, value] : p->items()) {
      env.physics[key] = Section::convert<double>(value, s.path("physics") + "." + key);
    }
  }
  s.finish();
}

void parse_agent(Section s, agent::AgentConfig& a) {
  s.get("actor_hidden", a.actor_hidden);
  s.get("critic_hidden", a.critic_hidden);
  s.get("total_steps", a.total_steps);
  s.get("warmup_steps", a.warmup_steps);
  s.get("batch_size", a.batch_size);
  s.get("buffer_capacity", a.buffer_capacity);
  s.get("gamma", a.gamma);
  s.get("tau", a.tau);
  s.get("actor_lr", a.actor_lr);
  s.get("critic_lr", a.critic_lr);
  s.get("exploration_std", a.exploration_std);
  s.finish();
  check(a.total_steps >= 0, s.path("total_steps"), [] { return "must be >= 0"; });
  check(a.warmup_steps >= 0 && a.warmup_steps <= a.total_steps, s.path("warmup_steps"),
        [] { return "must lie in [0, total_steps]"; });
  check(a.batch_size > 0, s.path("batch_size"), [] { return "must be positive"; });
  check(a.buffer_capacity > 0, s.path("buffer_capacity"), [] { return "must be positive"; });
  check(a.gamma > 0.0f && a.gamma < 1.0f, s.path("gamma"), [] { return "must lie in (0, 1)"; });
  check(a.tau > 0.0f && a.tau <= 1.0f, s.path("tau"), [] { return "must lie in (0, 1]"; });
  check(a.actor_lr > 0.0f, s.path("actor_lr"), [] { return "must be positive"; });
  check(a.critic_lr > 0.0f, s.path("critic_lr"), [] { return "must be positive"; });
  check(a.exploration_std >= 0.0f, s.path("exploration_std"), [] { return "must be >= 0"; });
  for (auto* h : {&a.actor_hidden, &a.critic_hidden}) {
    for (auto d : *h) check(d > 0, s.path(h == &a.actor_hidden ? "actor_hidden" : "critic_hidden"), [] {
        return "layer widths must be positive";
      });
  }
}

void parse_trigger(Section s, TriggerConfig& t, const envs::EnvSpec& spec) {
  std::string mode(backdoor::trigger_mode_name(t.mode));
  s.get("mode", mode);
  try {
    t.mode = backdoor::trigger_mode_from_name(mode);
  } catch (const ContractError& e) {
    throw ConfigError(s.path("mode"), e.what());
  }
  s.get("dim", t.dim);
  s.get("value", t.value);
  s.get("value_multiplier", t.value_multiplier);
  s.get("calibration_episodes", t.calibration_episodes);
  s.finish();
  check(t.dim < spec.state_dim, s.path("dim"), [&] { return "must be < state_dim " + std::to_string(spec.state_dim); });
  check(t.value_multiplier > 0.0, s.path("value_multiplier"), [] { return "must be positive"; });
  check(t.calibration_episodes >= 1, s.path("calibration_episodes"), [] { return "must be >= 1"; });
}

void parse_poison(Section s, backdoor::PoisonConfig& p, const envs::EnvSpec& spec, const agent::AgentConfig& a) {
  std::string kind(backdoor::attack_kind_name(p.kind));
  std::optional<float> fake;
  std::optional<std::int64_t> start;
  s.get("proportion", p.proportion);
  s.get("kind", kind);
  s.get("target_action", p.target_action);
  s.get("fake_reward", fake);
  s.get("injection_start_step", start);
  s.finish();
  try {
    p.kind = backdoor::attack_kind_from_name(kind);
  } catch (const ContractError& e) {
    throw ConfigError(s.path("kind"), e.what());
  }
  if (p.target_action.empty()) p.target_action = spec.action_low;
  p.fake_reward = fake.value_or(spec.max_step_reward);
  p.injection_start_step = start.value_or(a.total_steps / 2);
  check(p.proportion > 0.0 && p.proportion < 1.0, s.path("proportion"), [] { return "must lie in (0, 1)"; });
  check(p.target_action.size() == spec.action_dim, s.path("target_action"),
        [&] { return "must have " + std::to_string(spec.action_dim) + " entries"; });
  for (std::size_t i = 0; i < spec.action_dim; ++i) {
    check(p.target_action[i] >= spec.action_low[i] && p.target_action[i] <= spec.action_high[i],
          s.path("target_action"), [] { return "must lie within the action bounds"; });
  }
  check(p.injection_start_step >= 0 && p.injection_start_step < std::max<std::int64_t>(a.total_steps, 1),
        s.path("injection_start_step"), [] { return "must lie in [0, agent.total_steps)"; });
}

void parse_defender(Section s, DefenderConfig& d) {
  std::string detector = d.detector == defender::Detector::state ? "state" : "action";
  s.get("dataset_size", d.dataset_size);
  s.get("noise_prob", d.noise_prob);
  s.get("noise_std", d.noise_std);
  s.get("holdout_fraction", d.holdout_fraction);
  s.get("epochs", d.train.epochs);
  s.get("batch_size", d.train.batch_size);
  s.get("lr", d.train.lr);
  s.get("lr_final_fraction", d.train.lr_final_fraction);
  s.get("hidden", d.train.hidden);
  s.get("lambda", d.lambda);
  s.get("quantile", d.quantile);
  s.get("detector", detector);
  s.finish();
  check(detector == "state" || detector == "action", s.path("detector"), [] { return "must be state or action"; });
  d.detector = detector == "state" ? defender::Detector::state : defender::Detector::action;
  check(d.dataset_size >= 20, s.path("dataset_size"), [] { return "must be >= 20"; });
  check(d.noise_prob >= 0.0 && d.noise_prob <= 1.0, s.path("noise_prob"), [] { return "must lie in [0, 1]"; });
  check(!d.noise_std || *d.noise_std >= 0.0, s.path("noise_std"), [] { return "must be >= 0"; });
  check(d.holdout_fraction > 0.0 && d.holdout_fraction < 1.0, s.path("holdout_fraction"),
        [] { return "must lie in (0, 1)"; });
  check(d.train.epochs >= 0, s.path("epochs"), [] { return "must be >= 0"; });
  check(d.train.batch_size > 0, s.path("batch_size"), [] { return "must be positive"; });
  check(d.train.lr > 0.0f, s.path("lr"), [] { return "must be positive"; });
  check(d.train.lr_final_fraction >= 0.0 && d.train.lr_final_fraction <= 1.0, s.path("lr_final_fraction"),
        [] { return "must lie in [0, 1]"; });
  check(!d.train.hidden.empty(), s.path("hidden"), [] { return "needs at least one hidden layer"; });
  check(d.lambda >= 0.0f, s.path("lambda"), [] { return "must be >= 0"; });
  check(d.quantile > 0.5 && d.quantile < 1.0, s.path("quantile"), [] { return "must lie in (0.5, 1)"; });
}

void parse_eval(Section s, EvalConfig& e) {
  if (const json* list = s.raw("schedules")) {
    if (!list->is_array() || list->empty()) throw ConfigError(s.path("schedules"), "expected a non-empty array");
    e.schedules.clear();
    for (std::size_t i = 0; i < list->size(); ++i) {
      const std::string path = s.path("schedules") + "[" + std::to_string(i) + "]";
      Section item(&(*list)[i], path);
      harness::AttackSchedule sch;
      item.get("period", sch.period);
      item.get("burst_length", sch.burst_length);
      item.get("warmup", sch.warmup);
      item.get("enabled", sch.enabled);
      item.finish();
      try {
        sch.validate();
      } catch (const ContractError& err) {
        throw ConfigError(path, err.what());
      }
      e.schedules.push_back(sch);
    }
  }
  std::optional<std::uint64_t> first;
  std::optional<int> episodes;
  s.get("seeds", e.seeds);
  s.get("first_seed", first);
  s.get("episodes", episodes);
  s.finish();
  if (e.seeds.empty()) {
    const int n = episodes.value_or(20);
    check(n >= 1, s.path("episodes"), [] { return "must be >= 1"; });
    for (int i = 0; i < n; ++i) e.seeds.push_back(first.value_or(1000) + static_cast<std::uint64_t>(i));
  } else {
    check(!first && !episodes, s.path("seeds"), [] { return "give either seeds or first_seed/episodes"; });
  }
}

json schedule_json(const harness::AttackSchedule& s) {
  return {{"period", s.period}, {"burst_length", s.burst_length}, {"warmup", s.warmup}, {"enabled", s.enabled}};
}

}  // namespace

std::unique_ptr<envs::Env> ExperimentConfig::make_env() const { return envs::make_env(env.name, env.physics); }

ExperimentConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(&root, "");
  top.get("name", c.name);
  parse_env(top.child("env"), c.env);
  const auto env = c.make_env();
  const auto& spec = env->spec();
  parse_agent(top.child("agent"), c.agent);
  parse_trigger(top.child("trigger"), c.trigger, spec);
  parse_poison(top.child("poison"), c.poison, spec, c.agent);
  parse_defender(top.child("defender"), c.defender);
  parse_eval(top.child("eval"), c.eval);
  Section seeds = top.child("seeds");
  seeds.get("train", c.seeds.train);
  seeds.get("poison", c.seeds.poison);
  seeds.get("defend", c.seeds.defend);
  seeds.finish();
  std::string out = c.output_dir.string();
  top.get("output_dir", out);
  check(!out.empty(), "output_dir", [] { return "must not be empty"; });
  c.output_dir = out;
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["env"] = {{"name", c.env.name}, {"physics", c.env.physics}};
  const auto& a = c.agent;
  j["agent"] = {{"actor_hidden", a.actor_hidden},   {"critic_hidden", a.critic_hidden},
                {"total_steps", a.total_steps},     {"warmup_steps", a.warmup_steps},
                {"batch_size", a.batch_size},       {"buffer_capacity", a.buffer_capacity},
                {"gamma", a.gamma},                 {"tau", a.tau},
                {"actor_lr", a.actor_lr},           {"critic_lr", a.critic_lr},
                {"exploration_std", a.exploration_std}};
  j["trigger"] = {{"mode", backdoor::trigger_mode_name(c.trigger.mode)},
                  {"dim", c.trigger.dim},
                  {"value", c.trigger.value ? json(*c.trigger.value) : json(nullptr)},
                  {"value_multiplier", c.trigger.value_multiplier},
                  {"calibration_episodes", c.trigger.calibration_episodes}};
  j["poison"] = {{"proportion", c.poison.proportion},
                 {"kind", backdoor::attack_kind_name(c.poison.kind)},
                 {"target_action", c.poison.target_action},
                 {"fake_reward", c.poison.fake_reward},
                 {"injection_start_step", c.poison.injection_start_step}};
  const auto& d = c.defender;
  j["defender"] = {{"dataset_size", d.dataset_size},
                   {"noise_prob", d.noise_prob},
                   {"noise_std", d.noise_std ? json(*d.noise_std) : json(nullptr)},
                   {"holdout_fraction", d.holdout_fraction},
                   {"epochs", d.train.epochs},
                   {"batch_size", d.train.batch_size},
                   {"lr", d.train.lr},
                   {"lr_final_fraction", d.train.lr_final_fraction},
                   {"hidden", d.train.hidden},
                   {"lambda", d.lambda},
                   {"quantile", d.quantile},
                   {"detector", d.detector == defender::Detector::state ? "state" : "action"}};
  json schedules = json::array();
  for (const auto& s : c.eval.schedules) schedules.push_back(schedule_json(s));
  j["eval"] = {{"schedules", schedules}, {"seeds", c.eval.seeds}};
  j["seeds"] = {{"train", c.seeds.train}, {"poison", c.seeds.poison}, {"defend", c.seeds.defend}};
  j["output_dir"] = c.output_dir.generic_string();
  return j.dump();
}

std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig hashed = c;
  hashed.output_dir.clear();
  Fnv1a h;
  h.text(canonical_json(hashed));
  return hex64(h.digest());
}

}  // namespace rtslab::cli
