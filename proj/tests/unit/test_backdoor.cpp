#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "rtslab/backdoor/backdoor.hpp"
#include "rtslab/envs/env.hpp"
#include "rtslab/errors.hpp"
#include "rtslab/log.hpp"

using namespace rtslab;
using namespace rtslab::backdoor;

namespace {

struct CapturedWarnings {
  std::vector<std::string> messages;
  WarningSink previous;
  CapturedWarnings() {
    previous = set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~CapturedWarnings() { set_warning_sink(previous); }
};

const envs::EnvSpec& cartpole_spec() {
  static const auto env = envs::make_env("cartpole-continuous");
  return env->spec();
}

agent::ReplayBuffer filled_buffer(std::size_t n, std::size_t capacity) {
  agent::ReplayBuffer buf(capacity);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = static_cast<float>(i);
    buf.push(agent::Transition{{v, 0.1f, -0.1f, 0.2f}, {0.5f}, 1.0f, {v, 0.0f, 0.0f, 0.0f}, false});
  }
  return buf;
}

PoisonConfig targeted(double p, std::int64_t start = 0) {
  PoisonConfig c;
  c.proportion = p;
  c.target_action = {-1.0f};
  c.fake_reward = 5.0f;
  c.injection_start_step = start;
  return c;
}

bool is_poisoned(const agent::Transition& t) { return t.reward == 5.0f; }

}  // namespace

TEST_CASE("apply_trigger arithmetic") {
  const std::vector<float> s{0.1f, -0.4f, 0.7f, 2.0f};
  Trigger zero{{1, 1, 1, 1}, {0.0f, 0.0f, 0.0f, 0.0f}, TriggerMode::additive};
  CHECK(apply_trigger(zero, s) == s);

  const Trigger add = single_dim_trigger(4, 0, 2.0f, TriggerMode::additive);
  const auto t = apply_trigger(add, s);
  CHECK(t[0] == doctest::Approx(2.1f));
  CHECK(t[0] - add.delta[0] == doctest::Approx(s[0]));
  for (std::size_t i = 1; i < 4; ++i) CHECK(t[i] == s[i]);

  const Trigger over = single_dim_trigger(4, 2, 9.0f);
  const auto o = apply_trigger(over, s);
  CHECK(o == std::vector<float>{0.1f, -0.4f, 9.0f, 2.0f});

  CHECK_THROWS_AS(apply_trigger(over, std::vector<float>{1.0f}), DimensionError);
  CHECK_THROWS_AS((Trigger{{0, 0}, {1.0f, 1.0f}, TriggerMode::overwrite}.validate(2)), ContractError);
  CHECK_THROWS_AS(single_dim_trigger(4, 4, 1.0f), ContractError);
}

TEST_CASE("poison_transition rewrites the right fields") {
  const Trigger trig = single_dim_trigger(4, 1, 3.0f);
  const agent::Transition t{{0.1f, 0.2f, 0.3f, 0.4f}, {0.8f}, 1.0f, {0.5f, 0.5f, 0.5f, 0.5f}, false};
  SUBCASE("targeted") {
    const auto p = poison_transition(trig, targeted(0.04), t, cartpole_spec());
    CHECK(p.state == std::vector<float>{0.1f, 3.0f, 0.3f, 0.4f});
    CHECK(p.action == std::vector<float>{-1.0f});
    CHECK(p.reward == 5.0f);
    CHECK(p.next_state == t.next_state);
    CHECK(p.done == t.done);
  }
  SUBCASE("untargeted keeps the action") {
    PoisonConfig c = targeted(0.04);
    c.kind = AttackKind::untargeted;
    const auto p = poison_transition(trig, c, t, cartpole_spec());
    CHECK(p.state == apply_trigger(trig, t.state));
    CHECK(p.action == t.action);
    CHECK(p.next_state == t.next_state);
    CHECK(p.reward == 5.0f);
    agent::Transition mild = t;
    mild.action = {0.1f};
    CHECK(poison_transition(trig, c, mild, cartpole_spec()).reward == -5.0f);
  }
}

TEST_CASE("poison config validation") {
  CapturedWarnings w;
  CHECK(targeted(0.04).validate(cartpole_spec()).empty());
  CHECK(targeted(0.2).validate(cartpole_spec()).size() == 1);
  CHECK_THROWS_AS(targeted(0.0).validate(cartpole_spec()), ContractError);
  CHECK_THROWS_AS(targeted(1.0).validate(cartpole_spec()), ContractError);
  PoisonConfig bad = targeted(0.04);
  bad.target_action = {1.5f};
  CHECK_THROWS_AS(bad.validate(cartpole_spec()), ContractError);
}

TEST_CASE("poison_buffer corrupts exactly floor(p*N) records") {
  CapturedWarnings w;
  const Trigger trig = single_dim_trigger(4, 1, 3.0f);
  std::mt19937_64 rng(1);
  SUBCASE("4% of 25000 is 1000") {
    auto buf = filled_buffer(25000, 100000);
    const auto report = poison_buffer(trig, targeted(0.04), buf, cartpole_spec(), rng);
    CHECK(report.slots.size() == 1000);
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < buf.size(); ++i) flagged += is_poisoned(buf[i]);
    CHECK(flagged == 1000);
    CHECK(std::is_sorted(report.slots.begin(), report.slots.end()));
  }
  SUBCASE("other proportions") {
    for (double p : {0.013, 0.05, 0.099}) {
      auto buf = filled_buffer(1237, 2000);
      const auto report = poison_buffer(trig, targeted(p), buf, cartpole_spec(), rng);
      CHECK(report.slots.size() == static_cast<std::size_t>(std::floor(p * 1237)));
    }
  }
  SUBCASE("only records after the injection step") {
    auto buf = filled_buffer(5000, 3000);  // ring holds steps 2000..4999
    const auto report = poison_buffer(trig, targeted(0.1, 4000), buf, cartpole_spec(), rng);
    CHECK(report.slots.size() == 300);
    for (std::size_t slot : report.slots) CHECK(buf.insertion_step(slot) >= 4000);
    CHECK_THROWS_AS(poison_buffer(trig, targeted(0.5, 4000), buf, cartpole_spec(), rng), ContractError);
  }
  SUBCASE("zero selected records warns and changes nothing") {
    auto buf = filled_buffer(10, 10);
    const auto report = poison_buffer(trig, targeted(0.04), buf, cartpole_spec(), rng);
    CHECK(report.slots.empty());
    CHECK(report.warnings.size() == 1);
    CHECK(w.messages.size() == 1);
    for (std::size_t i = 0; i < buf.size(); ++i) CHECK_FALSE(is_poisoned(buf[i]));
  }
  SUBCASE("empty buffer") {
    agent::ReplayBuffer buf(10);
    CHECK_THROWS_AS(poison_buffer(trig, targeted(0.04), buf, cartpole_spec(), rng), ContractError);
  }
}

TEST_CASE("online poisoner follows its plan during training") {
  CapturedWarnings w;
  auto env = envs::make_env("cartpole-continuous");
  agent::AgentConfig cfg;
  cfg.total_steps = 1200;
  cfg.warmup_steps = 1000;
  OnlinePoisoner poisoner(single_dim_trigger(4, 1, 3.0f), targeted(0.05, 600), env->spec(), cfg.total_steps, 3);
  CHECK(poisoner.planned_steps().size() == 60);
  const auto res = agent::train_agent(*env, cfg, 3, poisoner.hook());
  CHECK(poisoner.poisoned_steps() == poisoner.planned_steps());
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < res.buffer.size(); ++i) {
    if (is_poisoned(res.buffer[i])) {
      ++flagged;
      CHECK(res.buffer.insertion_step(i) >= 600);
      CHECK(res.buffer[i].state[1] == 3.0f);
    }
  }
  CHECK(flagged == 60);
  CHECK_THROWS_AS(OnlinePoisoner(single_dim_trigger(4, 1, 3.0f), targeted(0.5, 1000), env->spec(), 1200, 3),
                  ContractError);
}
