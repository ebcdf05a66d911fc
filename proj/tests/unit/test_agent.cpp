#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "rtslab/agent/ddpg.hpp"
#include "rtslab/agent/replay_buffer.hpp"
#include "rtslab/envs/env.hpp"
#include "rtslab/errors.hpp"

using namespace rtslab;
using namespace rtslab::agent;
using diffnum::Activation;
using diffnum::Layer;
using diffnum::Mlp;
using diffnum::Tensor;

namespace {

Mlp linear_net(std::vector<float> w, std::vector<float> b, Activation out) {
  const std::size_t in = w.size() / b.size();
  const std::size_t o = b.size();
  return Mlp({in, o}, Activation::linear, out, {Layer{Tensor({in, o}, std::move(w)), Tensor({o}, std::move(b))}});
}

// actor(s) = 2 * tanh(0.5 s), critic(s, a) = 0.3 s - 0.7 a + 0.1; bounds [-2, 2].
Policy tiny_policy() {
  Mlp actor = linear_net({0.5f}, {0.0f}, Activation::tanh);
  Mlp critic = linear_net({0.3f, -0.7f}, {0.1f}, Activation::linear);
  return Policy(actor, critic, actor, critic, {-2.0f}, {2.0f}, 0.9f, 0.1f);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rtslab_test_" + name);
}

}  // namespace

TEST_CASE("replay buffer is a ring that remembers insertion steps") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(Transition{{float(i)}, {0.0f}, float(i), {0.0f}, false});
  CHECK(buf.size() == 3);
  CHECK(buf.insertions() == 5);
  std::set<std::int64_t> steps;
  for (std::size_t s = 0; s < buf.size(); ++s) {
    steps.insert(buf.insertion_step(s));
    CHECK(buf[s].reward == float(buf.insertion_step(s)));
  }
  CHECK(steps == std::set<std::int64_t>{2, 3, 4});
  std::mt19937_64 rng(1);
  std::set<std::size_t> seen;
  for (std::size_t i : buf.sample_indices(200, rng)) seen.insert(i);
  CHECK(seen.size() == 3);
  CHECK_THROWS(ReplayBuffer(0));
}

TEST_CASE("select_action is deterministic without noise and always in bounds") {
  auto env = envs::make_env("pendulum-swingup");
  std::mt19937_64 rng(4);
  AgentConfig cfg;
  Policy p(env->spec(), cfg, rng);
  const std::vector<float> s{0.2f, -0.9f, 3.0f};
  CHECK(select_action(p, s, 0.0f, rng) == select_action(p, s, 0.0f, rng));
  std::normal_distribution<float> wild(0.0f, 100.0f);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<float> st{wild(rng), wild(rng), wild(rng)};
    for (float noise : {0.0f, 5.0f}) {
      const auto a = select_action(p, st, noise, rng);
      CHECK(a[0] >= -2.0f);
      CHECK(a[0] <= 2.0f);
    }
  }
}

TEST_CASE("exploration noise has the requested std") {
  auto env = envs::make_env("cartpole-continuous");
  std::mt19937_64 rng(5);
  Policy p(env->spec(), AgentConfig{}, rng);
  const std::vector<float> s{0.0f, 0.0f, 0.0f, 0.0f};
  const float base = p.act(s)[0];
  REQUIRE(std::abs(base) < 0.5f);
  double sum = 0.0, sq = 0.0;
  constexpr int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double d = select_action(p, s, 0.1f, rng)[0] - base;
    sum += d;
    sq += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  // Std of a sample std is about sigma / sqrt(2n) = 7e-4.
  CHECK(sd == doctest::Approx(0.1).epsilon(0.03));
}

TEST_CASE("critic target matches a hand computation") {
  const Policy p = tiny_policy();
  const float r = 0.25f, s_next = 1.2f;
  const double a_next = 2.0 * std::tanh(0.5 * s_next);
  const double q_next = 0.3 * s_next - 0.7 * a_next + 0.1;
  const std::vector<Transition> batch{{{0.0f}, {0.0f}, r, {s_next}, false}, {{0.0f}, {0.0f}, r, {s_next}, true}};
  const auto y = critic_targets(p, batch);
  CHECK(std::abs(y[0] - (r + 0.9 * q_next)) < 1e-6);
  CHECK(y[1] == r);
  CHECK_THROWS_AS(critic_targets(p, std::span<const Transition>{}), ContractError);
}

TEST_CASE("critic loss falls over repeated updates on a fixed batch") {
  auto env = envs::make_env("pendulum-swingup");
  std::mt19937_64 rng(6);
  Policy p(env->spec(), AgentConfig{}, rng);
  std::vector<Transition> batch;
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int i = 0; i < 64; ++i) batch.push_back({{n(rng), n(rng), n(rng)}, {n(rng)}, n(rng), {n(rng), n(rng), n(rng)}, false});
  DdpgOptimizers opt;
  opt.critic_config.lr = 1e-4f;
  opt.actor_config.lr = 1e-5f;
  float prev = ddpg_update(p, opt, batch).critic_loss;
  for (int i = 0; i < 10; ++i) {
    const float loss = ddpg_update(p, opt, batch).critic_loss;
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("soft update moves targets by tau") {
  Policy p = tiny_policy();
  p.actor().layers()[0].weight[0] = 1.5f;
  p.critic().layers()[0].bias[0] = -0.9f;
  p.soft_update_targets();
  CHECK(p.actor_target().layers()[0].weight[0] == doctest::Approx(0.1 * 1.5 + 0.9 * 0.5).epsilon(1e-6));
  CHECK(p.critic_target().layers()[0].bias[0] == doctest::Approx(0.1 * -0.9 + 0.9 * 0.1).epsilon(1e-6));
}

TEST_CASE("policy constructor enforces its invariants") {
  Mlp actor = linear_net({0.5f}, {0.0f}, Activation::tanh);
  Mlp critic = linear_net({0.3f, -0.7f}, {0.1f}, Activation::linear);
  CHECK_THROWS_AS(Policy(actor, critic, actor, critic, {-1.0f}, {1.0f}, 1.0f, 0.1f), ContractError);
  CHECK_THROWS_AS(Policy(actor, critic, actor, critic, {1.0f}, {-1.0f}, 0.9f, 0.1f), ContractError);
  CHECK_THROWS_AS(Policy(linear_net({0.5f}, {0.0f}, Activation::linear), critic, actor, critic, {-1.0f}, {1.0f}, 0.9f,
                         0.1f),
                  ContractError);
}

TEST_CASE("zero training steps return the initialization") {
  auto env = envs::make_env("pendulum-swingup");
  AgentConfig cfg;
  cfg.total_steps = 0;
  cfg.warmup_steps = 0;
  const auto res = train_agent(*env, cfg, 13);
  std::mt19937_64 rng(13);
  CHECK(res.policy == Policy(env->spec(), cfg, rng));
  cfg.warmup_steps = 10;
  CHECK_THROWS_AS(train_agent(*env, cfg, 13), ContractError);
}

TEST_CASE("training is bitwise reproducible and keeps actions in bounds") {
  auto env = envs::make_env("cartpole-continuous");
  AgentConfig cfg;
  cfg.total_steps = 1400;
  cfg.warmup_steps = 1000;
  bool in_bounds = true;
  auto hook = [&](std::int64_t, Transition& t) { in_bounds = in_bounds && std::abs(t.action[0]) <= 1.0f; };
  const auto a = train_agent(*env, cfg, 21, hook);
  const auto b = train_agent(*env, cfg, 21);
  CHECK(in_bounds);
  CHECK(a.policy == b.policy);
  CHECK(a.midpoint == b.midpoint);
  CHECK(a.episode_returns == b.episode_returns);
  CHECK(a.buffer.size() == 1400);
  CHECK_FALSE(a.policy == train_agent(*env, cfg, 22).policy);
}

TEST_CASE("policy checkpoint round trip") {
  auto env = envs::make_env("cartpole-continuous");
  std::mt19937_64 rng(8);
  const Policy p(env->spec(), AgentConfig{}, rng);
  const auto path = temp_path("policy.bin");
  save_policy(p, path, "meta");
  std::string meta;
  CHECK(load_policy(path, &meta) == p);
  CHECK(meta == "meta");
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_policy(path), MissingArtifactError);
}

TEST_CASE("evaluation is noise-free and repeatable") {
  auto env = envs::make_env("cartpole-continuous");
  std::mt19937_64 rng(9);
  const Policy p(env->spec(), AgentConfig{}, rng);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto a = evaluate_policy(p, *env, seeds);
  const auto b = evaluate_policy(p, *env, seeds);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].episode_return == b[i].episode_return);
    CHECK(a[i].length == b[i].length);
  }
}

TEST_SUITE("slow") {
  TEST_CASE("clean pendulum training beats a random policy") {
    auto env = envs::make_env("pendulum-swingup");
    AgentConfig cfg;
    const auto res = train_agent(*env, cfg, 1);
    std::vector<std::uint64_t> seeds(20);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{5000});
    double trained = 0.0;
    for (const auto& e : evaluate_policy(res.policy, *env, seeds)) trained += e.episode_return;
    trained /= 20.0;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    std::vector<double> random_returns;
    for (auto seed : seeds) {
      auto e = env->clone();
      e->reset(seed);
      double ret = 0.0;
      while (!e->done()) ret += e->step(std::vector<float>{u(rng)}).reward;
      random_returns.push_back(ret);
    }
    const double m = std::accumulate(random_returns.begin(), random_returns.end(), 0.0) / 20.0;
    double var = 0.0;
    for (double r : random_returns) var += (r - m) * (r - m);
    const double sd = std::sqrt(var / 19.0);
    MESSAGE("trained " << trained << " random " << m << " sd " << sd);
    CHECK(trained > m + 3.0 * sd);
  }
}
