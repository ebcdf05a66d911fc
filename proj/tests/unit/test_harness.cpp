#include <doctest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "rtslab/errors.hpp"
#include "rtslab/harness/harness.hpp"

using namespace rtslab;
using namespace rtslab::harness;

namespace {

struct Fixture {
  std::unique_ptr<envs::Env> env = envs::make_env("cartpole-continuous");
  agent::Policy policy;
  defender::DynamicsModel single;
  defender::DynamicsModel dual;
  backdoor::Trigger trigger = backdoor::single_dim_trigger(4, 3, 6.0f);

  static agent::Policy make_policy(const envs::EnvSpec& spec) {
    std::mt19937_64 rng(12);
    return agent::Policy(spec, agent::AgentConfig{}, rng);
  }
  static defender::DynamicsModel make_model(const agent::Policy& p, const envs::Env& env, defender::Objective o) {
    const auto data = defender::collect_rollouts(p, env, 500, 0.5, 0.3, 3);
    defender::TrainOptions opt;
    opt.epochs = 2;
    opt.hidden = {32, 32};
    auto m = defender::train_defender(data, o, 1.0f, &p, opt, 4);
    m.set_threshold(0.5);
    return m;
  }
  Fixture()
      : policy(make_policy(env->spec())),
        single(make_model(policy, *env, defender::Objective::single)),
        dual(make_model(policy, *env, defender::Objective::dual)) {}
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::uint64_t> seed_list(int n) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
  std::iota(s.begin(), s.end(), std::uint64_t{100});
  return s;
}

}  // namespace

TEST_CASE("attack schedule timing") {
  AttackSchedule s{20, 2, 20, true};
  std::vector<int> hits;
  for (int t = 0; t < 70; ++t)
    if (s.attacked(t)) hits.push_back(t);
  CHECK(hits == std::vector<int>{20, 21, 40, 41, 60, 61});
  CHECK(s.label() == "burst2");
  s.enabled = false;
  CHECK_FALSE(s.attacked(20));
  CHECK(s.label() == "none");
  CHECK_THROWS_AS((AttackSchedule{1, 2, 20, true}.validate()), ContractError);
  CHECK_THROWS_AS((AttackSchedule{20, 0, 20, true}.validate()), ContractError);
  CHECK_NOTHROW((AttackSchedule{1, 2, 20, false}.validate()));
}

TEST_CASE("condition names round trip") {
  for (auto c : kAllConditions) CHECK(condition_from_name(condition_name(c)) == c);
  CHECK_THROWS_AS(condition_from_name("defended"), ContractError);
}

TEST_CASE("infinite threshold guard is a bitwise pass-through") {
  Fixture f;
  const AttackSchedule burst2{20, 2, 20, true};
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto plain = run_episode(f.policy, *f.env, burst2, &f.trigger, std::nullopt, seed);
    const Guard never{&f.dual, std::numeric_limits<double>::infinity(), defender::Detector::state};
    const auto guarded = run_episode(f.policy, *f.env, burst2, &f.trigger, never, seed);
    CHECK(plain.true_states == guarded.true_states);
    CHECK(plain.chosen_states == guarded.chosen_states);
    CHECK(plain.episode_return == guarded.episode_return);
    CHECK(guarded.false_positives() + guarded.true_positives() == 0);
  }
  CHECK_THROWS_AS(run_episode(f.policy, *f.env, burst2, nullptr, std::nullopt, 1), ContractError);
}

TEST_CASE("guarded episodes substitute predictions on flagged steps") {
  Fixture f;
  const AttackSchedule burst2{20, 2, 20, true};
  const auto rep = run_episode(f.policy, *f.env, burst2, &f.trigger, Guard{&f.single, 0.5}, 5);
  REQUIRE(rep.length > 22);
  CHECK(std::isnan(rep.residuals[0]));
  CHECK(rep.attacked[20]);
  CHECK(rep.flagged[20]);
  CHECK(rep.chosen_states[20] == f.single.predict(rep.chosen_states[19], f.policy.act(rep.chosen_states[19])));
  CHECK(rep.chosen_states[21] == f.single.predict(rep.chosen_states[20], f.policy.act(rep.chosen_states[20])));
  const auto unguarded = run_episode(f.policy, *f.env, burst2, &f.trigger, std::nullopt, 5);
  CHECK(unguarded.chosen_states[20] == backdoor::apply_trigger(f.trigger, unguarded.true_states[20]));
}

TEST_CASE("compute_losses arithmetic") {
  Fixture f;
  const std::vector<envs::State> truth{{0.0f, 0.0f, 0.0f, 0.0f}, {1.0f, 0.0f, 0.0f, 0.0f}};
  CHECK(compute_losses(f.policy, truth, truth).state_loss == 0.0);
  CHECK(compute_losses(f.policy, truth, truth).action_loss == 0.0);
  const std::vector<envs::State> pred{{3.0f, 4.0f, 0.0f, 0.0f}, {1.0f, 0.0f, 0.0f, 2.0f}};
  const auto l = compute_losses(f.policy, truth, pred);
  CHECK(l.state_loss == doctest::Approx((5.0 + 2.0) / 2.0));
  const double a0 = std::abs(f.policy.act(truth[0])[0] - f.policy.act(pred[0])[0]);
  const double a1 = std::abs(f.policy.act(truth[1])[0] - f.policy.act(pred[1])[0]);
  CHECK(l.action_loss == doctest::Approx((a0 + a1) / 2.0));
  CHECK_THROWS_AS(compute_losses(f.policy, std::span<const envs::State>{}, std::span<const envs::State>{}),
                  ContractError);
}

TEST_CASE("detection statistics") {
  EpisodeReport r;
  r.attacked = {0, 1, 1, 0, 0, 1};
  r.flagged = {0, 1, 0, 1, 0, 1};
  CHECK(r.true_positives() == 2);
  CHECK(r.false_negatives() == 1);
  CHECK(r.false_positives() == 1);
  CHECK(r.true_negatives() == 2);
  const auto s = detection_stats(std::span<const EpisodeReport>(&r, 1));
  CHECK(s.precision() == doctest::Approx(2.0 / 3.0));
  CHECK(s.recall() == doctest::Approx(2.0 / 3.0));
  CHECK(s.false_positive_rate() == doctest::Approx(1.0 / 3.0));
  CHECK(std::isnan(DetectionStats{}.recall()));
}

TEST_CASE("evaluation matrix bookkeeping and reproducible reports") {
  Fixture f;
  const MatrixInputs in{&f.policy, &f.trigger, &f.single, &f.dual};
  const std::vector<AttackSchedule> schedules{{20, 1, 20, true}, {20, 2, 20, true}};
  const auto seeds = seed_list(20);
  const auto rep = evaluate_matrix(in, *f.env, kAllConditions, schedules, seeds);
  CHECK(rep.rows.size() == 160);
  CHECK(rep.summaries.size() == 8);

  const auto plain = agent::evaluate_policy(f.policy, *f.env, seeds);
  double plain_mean = 0.0;
  for (const auto& e : plain) plain_mean += e.episode_return;
  plain_mean /= 20.0;
  CHECK(rep.summary(ProtectionCondition::unprotected_clean, "burst1").mean_return == doctest::Approx(plain_mean));
  CHECK(rep.summary(ProtectionCondition::unprotected_clean, "burst1").return_ratio == 1.0);
  for (std::size_t i = 0; i < 20; ++i) CHECK(rep.rows[i].seed == rep.rows[20 + i].seed);

  const Provenance prov{"0123456789abcdef", "9.9.9"};
  const auto dir = std::filesystem::temp_directory_path();
  write_episode_csv(rep, prov, dir / "rtslab_a.csv");
  const auto again = evaluate_matrix(in, *f.env, kAllConditions, schedules, seeds);
  write_episode_csv(again, prov, dir / "rtslab_b.csv");
  const std::string a = slurp(dir / "rtslab_a.csv");
  CHECK(a == slurp(dir / "rtslab_b.csv"));
  CHECK(std::count(a.begin(), a.end(), '\n') == 161);
  CHECK(a.find("0123456789abcdef,9.9.9") != std::string::npos);
  write_step_csv(rep, prov, dir / "rtslab_steps.csv");
  CHECK(std::filesystem::file_size(dir / "rtslab_steps.csv") > 0);
  const auto json = summary_json(rep, prov);
  CHECK(json.find("\"orderings\"") != std::string::npos);
  CHECK(json == summary_json(again, prov));
  for (const char* name : {"rtslab_a.csv", "rtslab_b.csv", "rtslab_steps.csv"}) std::filesystem::remove(dir / name);

  MatrixInputs missing = in;
  missing.single = nullptr;
  CHECK_THROWS_WITH_AS(evaluate_matrix(missing, *f.env, kAllConditions, schedules, seeds),
                       doctest::Contains("single-objective"), MissingArtifactError);
}

TEST_CASE("format_double round trips") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = n(rng);
    const auto s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}
