#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtslab/agent/ddpg.hpp"
#include "rtslab/diffnum/mlp.hpp"
#include "rtslab/diffnum/tape.hpp"
#include "rtslab/envs/env.hpp"

namespace rtslab::defender {

// Tuples (s_{t-1}, a_{t-1}, s_t, a_t) stored as flat row-major arrays. a_{t-1} is
// the action actually executed; a_t is the policy's noiseless action on s_t.
class RolloutDataset {
 public:
  RolloutDataset() = default;
  RolloutDataset(std::size_t state_dim, std::size_t action_dim);

  void push(std::span<const float> s_prev, std::span<const float> a_prev, std::span<const float> s,
            std::span<const float> a, std::uint32_t episode);

  std::size_t size() const { return episode_.size(); }
  bool empty() const { return episode_.empty(); }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }

  std::span<const float> s_prev(std::size_t i) const { return {&s_prev_[i * state_dim_], state_dim_}; }
  std::span<const float> a_prev(std::size_t i) const { return {&a_prev_[i * action_dim_], action_dim_}; }
  std::span<const float> s(std::size_t i) const { return {&s_[i * state_dim_], state_dim_}; }
  std::span<const float> a(std::size_t i) const { return {&a_[i * action_dim_], action_dim_}; }
  std::uint32_t episode(std::size_t i) const { return episode_[i]; }

  // Exploration-noised steps during collection.
  std::size_t noised_steps() const { return noised_; }
  void set_noised_steps(std::size_t n) { noised_ = n; }

  RolloutDataset subset(std::span<const std::size_t> indices) const;
  // FNV-1a over dims and all tuple bytes.
  std::uint64_t content_hash() const;

  bool operator==(const RolloutDataset&) const = default;

 private:
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  std::vector<float> s_prev_;
  std::vector<float> a_prev_;
  std::vector<float> s_;
  std::vector<float> a_;
  std::vector<std::uint32_t> episode_;
  std::size_t noised_ = 0;
};

// Runs the policy on a clean env. Each executed action receives N(0, noise_std^2)
// noise with probability noise_prob (clipped to bounds).
RolloutDataset collect_rollouts(const agent::Policy& policy, const envs::Env& env, std::size_t n_transitions,
                                double noise_prob, double noise_std, std::uint64_t seed);

// Deterministic shuffle, then the first round(holdout_fraction * n) tuples go to holdout.
std::pair<RolloutDataset, RolloutDataset> split_dataset(const RolloutDataset& data, double holdout_fraction,
                                                        std::uint64_t seed);

inline constexpr std::string_view kDatasetMagic = "RTSL-DAT";
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// magic | u32 version | u32 S | u32 A | u64 n | u64 noised | f32 s_prev[n*S] |
// f32 a_prev[n*A] | f32 s[n*S] | f32 a[n*A] | u32 episode[n]
void save_dataset(const RolloutDataset& data, const std::filesystem::path& path);
RolloutDataset load_dataset(const std::filesystem::path& path);

enum class Objective { single, dual };

std::string_view objective_name(Objective o);
Objective objective_from_name(std::string_view name);

// Per-dim affine normalization x -> (x - mean) / std.
struct Normalizer {
  std::vector<float> mean;
  std::vector<float> std;

  // Std is floored at 1e-6 so constant dims stay finite.
  static Normalizer fit(std::span<const float> rows, std::size_t dim);
  bool operator==(const Normalizer&) const = default;
};

// Learned transition s' = s + denorm(net(norm([s, a]))). The net has shape
// [S+A, 256, 256, S] with tanh hidden layers; it predicts the normalized state
// increment, and predictions are returned in raw state units.
class DynamicsModel {
 public:
  DynamicsModel(std::size_t state_dim, std::size_t action_dim, Objective objective, float lambda,
                std::mt19937_64& rng, std::vector<std::size_t> hidden = {256, 256});
  DynamicsModel(diffnum::Mlp net, Objective objective, float lambda, Normalizer input, Normalizer delta,
                double threshold);

  envs::State predict(std::span<const float> s, std::span<const float> a) const;
  // Rows of states and actions -> rows of predicted states.
  diffnum::Tensor predict_batch(const diffnum::Tensor& states, const diffnum::Tensor& actions) const;
  // Taped prediction in raw units with the net parameters tracked.
  diffnum::Var predict(diffnum::Tape& tape, const diffnum::Tensor& states, const diffnum::Tensor& actions) const;

  std::size_t state_dim() const { return net_.output_dim(); }
  std::size_t action_dim() const { return net_.input_dim() - net_.output_dim(); }
  Objective objective() const { return objective_; }
  float lambda() const { return lambda_; }
  double threshold() const { return threshold_; }
  void set_threshold(double h);
  const Normalizer& input_normalizer() const { return input_; }
  const Normalizer& delta_normalizer() const { return delta_; }
  void set_normalizers(Normalizer input, Normalizer delta);
  const diffnum::Mlp& net() const { return net_; }
  diffnum::Mlp& net() { return net_; }

  bool operator==(const DynamicsModel&) const = default;

 private:
  diffnum::Mlp net_;
  Objective objective_;
  float lambda_;
  Normalizer input_;
  Normalizer delta_;
  double threshold_ = std::numeric_limits<double>::infinity();
};

struct TrainOptions {
  int epochs = 100;
  std::size_t batch_size = 256;
  float lr = 1e-3f;
  double lr_final_fraction = 0.01;  // cosine-decayed learning rate at the last epoch, relative to lr
  std::vector<std::size_t> hidden{256, 256};
};

struct TrainLog {
  std::vector<double> state_loss;   // per-epoch mean
  std::vector<double> action_loss;  // per-epoch mean, dual mode only
};

// Single: minimizes mean ||s_t - T(s_{t-1}, a_{t-1})|| in raw state units.
// Dual: adds lambda * mean ||a_t - pi(T(...))|| with pi frozen.
DynamicsModel train_defender(const RolloutDataset& data, Objective objective, float lambda,
                             const agent::Policy* frozen_policy, const TrainOptions& options,
                             std::uint64_t seed, TrainLog* log = nullptr);

// Raw-unit L2 residuals ||T(s_prev, a_prev) - s|| for every tuple.
std::vector<double> residuals(const DynamicsModel& model, const RolloutDataset& data);

// The `quantile` order statistic (index ceil(q*n) - 1) of clean residuals.
// quantile must lie in (0.5, 1]; fewer than 1000 tuples triggers a warning.
double calibrate_threshold(const DynamicsModel& model, const RolloutDataset& clean, double quantile);

struct Detection {
  bool flagged = false;
  double residual = 0.0;
};

Detection detect(const DynamicsModel& model, std::span<const float> s_prev, std::span<const float> a_prev,
                 std::span<const float> s_incoming, double threshold);

// Secondary detector: ||pi(T(s_prev, a_prev)) - pi(s_incoming)|| > threshold.
Detection detect_action(const DynamicsModel& model, const agent::Policy& policy, std::span<const float> s_prev,
                        std::span<const float> a_prev, std::span<const float> s_incoming, double threshold);

struct GuardResult {
  envs::State chosen;
  bool flagged = false;
  double residual = 0.0;
};

enum class Detector { state, action };

// One recovery step: pass s_incoming through unless flagged, else substitute the
// model's prediction from the previously chosen state.
GuardResult guard_step(const DynamicsModel& model, double threshold, std::span<const float> s_prev_chosen,
                       std::span<const float> a_prev, std::span<const float> s_incoming);
GuardResult guard_step(const DynamicsModel& model, const agent::Policy& policy, Detector detector,
                       double threshold, std::span<const float> s_prev_chosen, std::span<const float> a_prev,
                       std::span<const float> s_incoming);

struct LossPair {
  double state_loss = 0.0;
  double action_loss = 0.0;
};

// Held-out one-step diagnostics: mean ||s_t - T(s_{t-1}, a_{t-1})|| and mean
// ||pi(s_t) - pi(T(s_{t-1}, a_{t-1}))||, raw units.
LossPair holdout_losses(const DynamicsModel& model, const agent::Policy& policy, const RolloutDataset& data);

inline constexpr std::string_view kModelMagic = "RTSL-DYN";
inline constexpr std::uint32_t kModelFormatVersion = 1;

// magic | u32 version | string metadata | u8 objective | f32 lambda | f64 H |
// u32 in_dim | f32 in_mean | f32 in_std | u32 S | f32 d_mean | f32 d_std | network body
void save_model(const DynamicsModel& model, const std::filesystem::path& path, std::string_view metadata = {});
DynamicsModel load_model(const std::filesystem::path& path, std::string* metadata = nullptr);

}  // namespace rtslab::defender
