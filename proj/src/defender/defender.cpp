#include "rtslab/defender/defender.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <numeric>

#include "rtslab/binary_io.hpp"
#include "rtslab/diffnum/adam.hpp"
#include "rtslab/diffnum/checkpoint.hpp"
#include "rtslab/errors.hpp"
#include "rtslab/hash.hpp"
#include "rtslab/log.hpp"

namespace rtslab::defender {

using diffnum::Tensor;
using diffnum::Var;

RolloutDataset::RolloutDataset(std::size_t state_dim, std::size_t action_dim)
    : state_dim_(state_dim), action_dim_(action_dim) {
  if (state_dim == 0 || action_dim == 0) throw DimensionError("dataset dims must be positive");
}

void RolloutDataset::push(std::span<const float> s_prev, std::span<const float> a_prev,
                          std::span<const float> s, std::span<const float> a, std::uint32_t episode) {
  if (s_prev.size() != state_dim_ || s.size() != state_dim_ || a_prev.size() != action_dim_ ||
      a.size() != action_dim_) {
    throw DimensionError("tuple dims do not match dataset (" + std::to_string(state_dim_) + ", " +
                         std::to_string(action_dim_) + ")");
  }
  s_prev_.insert(s_prev_.end(), s_prev.begin(), s_prev.end());
  a_prev_.insert(a_prev_.end(), a_prev.begin(), a_prev.end());
  s_.insert(s_.end(), s.begin(), s.end());
  a_.insert(a_.end(), a.begin(), a.end());
  episode_.push_back(episode);
}

RolloutDataset RolloutDataset::subset(std::span<const std::size_t> indices) const {
  RolloutDataset out(state_dim_, action_dim_);
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("subset index out of range");
    out.push(s_prev(i), a_prev(i), s(i), a(i), episode_[i]);
  }
  return out;
}

std::uint64_t RolloutDataset::content_hash() const {
  Fnv1a h;
  h.pod(static_cast<std::uint64_t>(state_dim_));
  h.pod(static_cast<std::uint64_t>(action_dim_));
  h.values(std::span<const float>(s_prev_));
  h.values(std::span<const float>(a_prev_));
  h.values(std::span<const float>(s_));
  h.values(std::span<const float>(a_));
  h.values(std::span<const std::uint32_t>(episode_));
  return h.digest();
}

RolloutDataset collect_rollouts(const agent::Policy& policy, const envs::Env& env_proto, std::size_t n_transitions,
                                double noise_prob, double noise_std, std::uint64_t seed) {
  if (n_transitions == 0) throw ContractError("collect_rollouts needs n_transitions >= 1");
  if (noise_prob < 0.0 || noise_prob > 1.0) throw ContractError("noise_prob must lie in [0, 1]");
  auto env = env_proto.clone();
  const auto& spec = env->spec();
  RolloutDataset data(spec.state_dim, spec.action_dim);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution use_noise(noise_prob);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(noise_std));
  std::size_t noised = 0;
  std::uint32_t episode = 0;
  envs::State s_prev = env->reset(rng());
  envs::Action a = policy.act(s_prev);
  while (data.size() < n_transitions) {
    envs::Action executed = a;
    if (use_noise(rng)) {
      for (float& v : executed) v += noise(rng);
      executed = env->clip_action(executed);
      ++noised;
    }
    const auto step = env->step(executed);
    const envs::Action a_next = policy.act(step.next_state);
    data.push(s_prev, executed, step.next_state, a_next, episode);
    if (step.done) {
      ++episode;
      s_prev = env->reset(rng());
      a = policy.act(s_prev);
    } else {
      s_prev = step.next_state;
      a = a_next;
    }
  }
  data.set_noised_steps(noised);
  return data;
}

std::pair<RolloutDataset, RolloutDataset> split_dataset(const RolloutDataset& data, double holdout_fraction,
                                                        std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ContractError("holdout fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(data.size())));
  if (n_hold == 0 || n_hold == data.size()) throw ContractError("dataset too small to split");
  const std::span<const std::size_t> all(idx);
  return {data.subset(all.subspan(n_hold)), data.subset(all.first(n_hold))};
}

void save_dataset(const RolloutDataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  io::BinaryWriter w(os);
  w.bytes(kDatasetMagic);
  w.pod(kDatasetFormatVersion);
  w.pod(static_cast<std::uint32_t>(data.state_dim()));
  w.pod(static_cast<std::uint32_t>(data.action_dim()));
  w.pod(static_cast<std::uint64_t>(data.size()));
  w.pod(static_cast<std::uint64_t>(data.noised_steps()));
  for (std::size_t i = 0; i < data.size(); ++i) w.floats(data.s_prev(i));
  for (std::size_t i = 0; i < data.size(); ++i) w.floats(data.a_prev(i));
  for (std::size_t i = 0; i < data.size(); ++i) w.floats(data.s(i));
  for (std::size_t i = 0; i < data.size(); ++i) w.floats(data.a(i));
  for (std::size_t i = 0; i < data.size(); ++i) w.pod(data.episode(i));
  if (!os) throw FormatError("failed writing " + path.string());
}

RolloutDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("rollout dataset " + path.string() + " not found");
  const std::string src = path.string();
  io::BinaryReader r(is, src);
  r.expect_magic(kDatasetMagic);
  const auto version = r.pod<std::uint32_t>();
  if (version != kDatasetFormatVersion) {
    throw FormatError(src + ": dataset format version " + std::to_string(version) + ", this build reads version " +
                      std::to_string(kDatasetFormatVersion));
  }
  const auto sd = r.pod<std::uint32_t>();
  const auto ad = r.pod<std::uint32_t>();
  const auto n = r.pod<std::uint64_t>();
  const auto noised = r.pod<std::uint64_t>();
  if (sd == 0 || ad == 0 || sd > 4096 || ad > 4096) throw FormatError(src + ": implausible dataset dims");
  if (n > (std::uint64_t{1} << 32)) throw FormatError(src + ": implausible tuple count");
  std::vector<float> sp(n * sd), ap(n * ad), s(n * sd), a(n * ad);
  std::vector<std::uint32_t> ep(n);
  r.floats(sp);
  r.floats(ap);
  r.floats(s);
  r.floats(a);
  for (auto& e : ep) e = r.pod<std::uint32_t>();
  RolloutDataset out(sd, ad);
  for (std::size_t i = 0; i < n; ++i) {
    out.push({&sp[i * sd], sd}, {&ap[i * ad], ad}, {&s[i * sd], sd}, {&a[i * ad], ad}, ep[i]);
  }
  out.set_noised_steps(noised);
  return out;
}

std::string_view objective_name(Objective o) { return o == Objective::single ? "single" : "dual"; }

Objective objective_from_name(std::string_view name) {
  if (name == "single") return Objective::single;
  if (name == "dual") return Objective::dual;
  throw ContractError("unknown defender objective '" + std::string(name) + "'");
}

Normalizer Normalizer::fit(std::span<const float> rows, std::size_t dim) {
  if (dim == 0 || rows.empty() || rows.size() % dim != 0) throw DimensionError("normalizer needs whole rows");
  const std::size_t n = rows.size() / dim;
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) mean[c] += rows[r * dim + c];
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) var[c] += std::pow(rows[r * dim + c] - mean[c], 2);
  Normalizer out;
  for (std::size_t c = 0; c < dim; ++c) {
    out.mean.push_back(static_cast<float>(mean[c]));
    out.std.push_back(static_cast<float>(std::max(std::sqrt(var[c] / static_cast<double>(n)), 1e-6)));
  }
  return out;
}

namespace {

Normalizer identity_normalizer(std::size_t dim) {
  return {std::vector<float>(dim, 0.0f), std::vector<float>(dim, 1.0f)};
}

Tensor normalized_inputs(const DynamicsModel& m, const Tensor& states, const Tensor& actions) {
  const std::size_t n = states.rows();
  const std::size_t sd = m.state_dim();
  const std::size_t ad = m.action_dim();
  if (states.cols() != sd || actions.cols() != ad || actions.rows() != n) {
    throw DimensionError("dynamics model expects states [n, " + std::to_string(sd) + "] and actions [n, " +
                         std::to_string(ad) + "]");
  }
  const auto& in = m.input_normalizer();
  Tensor x = Tensor::matrix(n, sd + ad);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < sd; ++c) x[r * (sd + ad) + c] = (states[r * sd + c] - in.mean[c]) / in.std[c];
    for (std::size_t c = 0; c < ad; ++c) {
      x[r * (sd + ad) + sd + c] = (actions[r * ad + c] - in.mean[sd + c]) / in.std[sd + c];
    }
  }
  return x;
}

Tensor as_matrix(std::span<const float> v) { return Tensor({1, v.size()}, std::vector<float>(v.begin(), v.end())); }

struct TapedPrediction {
  Var delta_norm;
  Var raw;
};

TapedPrediction taped_predict(const DynamicsModel& m, diffnum::Tape& tape, const Tensor& states,
                              const Tensor& actions) {
  Var x = tape.constant(normalized_inputs(m, states, actions));
  Var d = m.net().forward(tape, x, diffnum::ParamMode::tracked);
  const auto& dn = m.delta_normalizer();
  Var scale = tape.constant(Tensor({dn.std.size()}, dn.std));
  Var shift = tape.constant(Tensor({dn.mean.size()}, dn.mean));
  Var raw = tape.constant_ref(states) + add_row(mul_row(d, scale), shift);
  return {d, raw};
}

double l2(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(static_cast<double>(a[i]) - b[i], 2);
  return std::sqrt(acc);
}

}  // namespace

DynamicsModel::DynamicsModel(std::size_t state_dim, std::size_t action_dim, Objective objective, float lambda,
                             std::mt19937_64& rng, std::vector<std::size_t> hidden)
    : net_([&] {
        std::vector<std::size_t> dims{state_dim + action_dim};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(state_dim);
        return diffnum::Mlp(dims, diffnum::Activation::tanh, diffnum::Activation::linear, rng);
      }()),
      objective_(objective),
      lambda_(lambda),
      input_(identity_normalizer(state_dim + action_dim)),
      delta_(identity_normalizer(state_dim)) {
  if (!(lambda >= 0.0f)) throw ContractError("defender lambda must be >= 0");
}

DynamicsModel::DynamicsModel(diffnum::Mlp net, Objective objective, float lambda, Normalizer input,
                             Normalizer delta, double threshold)
    : net_(std::move(net)), objective_(objective), lambda_(lambda) {
  if (net_.output_dim() >= net_.input_dim()) throw DimensionError("dynamics net must map S+A -> S");
  if (!(lambda >= 0.0f)) throw ContractError("defender lambda must be >= 0");
  set_normalizers(std::move(input), std::move(delta));
  set_threshold(threshold);
}

void DynamicsModel::set_threshold(double h) {
  if (!(h > 0.0)) throw ContractError("threshold H must be > 0");
  threshold_ = h;
}

void DynamicsModel::set_normalizers(Normalizer input, Normalizer delta) {
  if (input.mean.size() != net_.input_dim() || input.std.size() != net_.input_dim() ||
      delta.mean.size() != net_.output_dim() || delta.std.size() != net_.output_dim()) {
    throw DimensionError("normalizer dims do not match the dynamics net");
  }
  input_ = std::move(input);
  delta_ = std::move(delta);
}

Tensor DynamicsModel::predict_batch(const Tensor& states, const Tensor& actions) const {
  Tensor d = net_.forward(normalized_inputs(*this, states, actions));
  const std::size_t sd = state_dim();
  Tensor out = Tensor::matrix(states.rows(), sd);
  for (std::size_t r = 0; r < states.rows(); ++r)
    for (std::size_t c = 0; c < sd; ++c) {
      out[r * sd + c] = states[r * sd + c] + (d[r * sd + c] * delta_.std[c] + delta_.mean[c]);
    }
  return out;
}

envs::State DynamicsModel::predict(std::span<const float> s, std::span<const float> a) const {
  return predict_batch(as_matrix(s), as_matrix(a)).values();
}

Var DynamicsModel::predict(diffnum::Tape& tape, const Tensor& states, const Tensor& actions) const {
  return taped_predict(*this, tape, states, actions).raw;
}

DynamicsModel train_defender(const RolloutDataset& data, Objective objective, float lambda,
                             const agent::Policy* frozen_policy, const TrainOptions& options, std::uint64_t seed,
                             TrainLog* log) {
  if (data.empty()) throw ContractError("train_defender needs a non-empty dataset");
  if (objective == Objective::dual && frozen_policy == nullptr) {
    throw ContractError("dual-objective training needs a frozen policy");
  }
  if (options.epochs < 0 || options.batch_size == 0 || options.lr_final_fraction < 0.0 ||
      options.lr_final_fraction > 1.0)
    throw ContractError("invalid defender training options");
  const std::size_t sd = data.state_dim();
  const std::size_t ad = data.action_dim();
  if (frozen_policy && (frozen_policy->state_dim() != sd || frozen_policy->action_dim() != ad)) {
    throw DimensionError("frozen policy dims do not match the dataset");
  }
  std::mt19937_64 rng(seed);
  DynamicsModel model(sd, ad, objective, lambda, rng, options.hidden);

  const std::size_t n = data.size();
  std::vector<float> inputs, deltas;
  inputs.reserve(n * (sd + ad));
  deltas.reserve(n * sd);
  for (std::size_t i = 0; i < n; ++i) {
    inputs.insert(inputs.end(), data.s_prev(i).begin(), data.s_prev(i).end());
    inputs.insert(inputs.end(), data.a_prev(i).begin(), data.a_prev(i).end());
    for (std::size_t c = 0; c < sd; ++c) deltas.push_back(data.s(i)[c] - data.s_prev(i)[c]);
  }
  model.set_normalizers(Normalizer::fit(inputs, sd + ad), Normalizer::fit(deltas, sd));

  diffnum::AdamState adam;
  diffnum::AdamConfig adam_config;
  adam_config.lr = options.lr;
  const bool dual = objective == Objective::dual && lambda > 0.0f;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    // Cosine decay from lr to lr * lr_final_fraction over the run.
    const double progress = options.epochs > 1 ? static_cast<double>(epoch) / (options.epochs - 1) : 1.0;
    const double floor = options.lr_final_fraction;
    adam_config.lr = static_cast<float>(options.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress))));
    std::shuffle(order.begin(), order.end(), rng);
    double state_sum = 0.0, action_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t b = std::min(options.batch_size, n - start);
      Tensor states = Tensor::matrix(b, sd), actions = Tensor::matrix(b, ad);
      Tensor target = Tensor::matrix(b, sd), next_actions = Tensor::matrix(b, ad);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t i = order[start + r];
        for (std::size_t c = 0; c < sd; ++c) {
          states[r * sd + c] = data.s_prev(i)[c];
          target[r * sd + c] = data.s(i)[c];
        }
        for (std::size_t c = 0; c < ad; ++c) {
          actions[r * ad + c] = data.a_prev(i)[c];
          next_actions[r * ad + c] = data.a(i)[c];
        }
      }
      diffnum::Tape tape;
      const auto pred = taped_predict(model, tape, states, actions);
      Var state_loss = mean(row_norm(pred.raw - tape.constant(std::move(target))));
      Var loss = state_loss;
      Var action_loss = state_loss;
      if (dual) {
        Var acted = frozen_policy->act(tape, pred.raw, diffnum::ParamMode::frozen);
        action_loss = mean(row_norm(acted - tape.constant(std::move(next_actions))));
        loss = state_loss + scale(action_loss, lambda);
      }
      const auto params = std::as_const(model.net()).parameters();
      const auto grads = tape.gradient(loss, params);
      adam_step(model.net().parameters(), grads, adam, adam_config);
      state_sum += state_loss.value().item();
      if (dual) action_sum += action_loss.value().item();
      ++batches;
    }
    if (log) {
      log->state_loss.push_back(state_sum / static_cast<double>(batches));
      log->action_loss.push_back(action_sum / static_cast<double>(batches));
    }
  }
  return model;
}

std::vector<double> residuals(const DynamicsModel& model, const RolloutDataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  constexpr std::size_t kChunk = 1024;
  const std::size_t sd = data.state_dim();
  const std::size_t ad = data.action_dim();
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t b = std::min(kChunk, data.size() - start);
    Tensor states = Tensor::matrix(b, sd), actions = Tensor::matrix(b, ad);
    for (std::size_t r = 0; r < b; ++r) {
      std::copy_n(data.s_prev(start + r).begin(), sd, states.data().begin() + static_cast<std::ptrdiff_t>(r * sd));
      std::copy_n(data.a_prev(start + r).begin(), ad, actions.data().begin() + static_cast<std::ptrdiff_t>(r * ad));
    }
    const Tensor pred = model.predict_batch(states, actions);
    for (std::size_t r = 0; r < b; ++r) out.push_back(l2(pred.row_span(r), data.s(start + r)));
  }
  return out;
}

double calibrate_threshold(const DynamicsModel& model, const RolloutDataset& clean, double quantile) {
  if (!(quantile > 0.5 && quantile <= 1.0)) throw ContractError("calibration quantile must lie in (0.5, 1]");
  if (clean.empty()) throw ContractError("calibration needs clean tuples");
  if (clean.size() < 1000) {
    warn("calibrating H on only " + std::to_string(clean.size()) + " tuples; 1000 or more recommended");
  }
  auto r = residuals(model, clean);
  const auto k = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(r.size()))) - 1;
  const auto kth = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size() - 1));
  std::nth_element(r.begin(), kth, r.end());
  // A perfect model on its own data gives H = 0; keep H strictly positive.
  return std::max(*kth, 1e-12);
}

Detection detect(const DynamicsModel& model, std::span<const float> s_prev, std::span<const float> a_prev,
                 std::span<const float> s_incoming, double threshold) {
  const auto pred = model.predict(s_prev, a_prev);
  const double r = l2(pred, s_incoming);
  return {r > threshold, r};
}

Detection detect_action(const DynamicsModel& model, const agent::Policy& policy, std::span<const float> s_prev,
                        std::span<const float> a_prev, std::span<const float> s_incoming, double threshold) {
  const auto pred = model.predict(s_prev, a_prev);
  const double r = l2(policy.act(pred), policy.act(s_incoming));
  return {r > threshold, r};
}

GuardResult guard_step(const DynamicsModel& model, double threshold, std::span<const float> s_prev_chosen,
                       std::span<const float> a_prev, std::span<const float> s_incoming) {
  auto pred = model.predict(s_prev_chosen, a_prev);
  const double r = l2(pred, s_incoming);
  if (r > threshold) return {std::move(pred), true, r};
  return {envs::State(s_incoming.begin(), s_incoming.end()), false, r};
}

GuardResult guard_step(const DynamicsModel& model, const agent::Policy& policy, Detector detector,
                       double threshold, std::span<const float> s_prev_chosen, std::span<const float> a_prev,
                       std::span<const float> s_incoming) {
  if (detector == Detector::state) return guard_step(model, threshold, s_prev_chosen, a_prev, s_incoming);
  auto pred = model.predict(s_prev_chosen, a_prev);
  const double r = l2(policy.act(pred), policy.act(s_incoming));
  if (r > threshold) return {std::move(pred), true, r};
  return {envs::State(s_incoming.begin(), s_incoming.end()), false, r};
}

LossPair holdout_losses(const DynamicsModel& model, const agent::Policy& policy, const RolloutDataset& data) {
  if (data.empty()) throw ContractError("holdout_losses needs tuples");
  const std::size_t sd = data.state_dim();
  const std::size_t ad = data.action_dim();
  const std::size_t n = data.size();
  Tensor states = Tensor::matrix(n, sd), actions = Tensor::matrix(n, ad), truth = Tensor::matrix(n, sd);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < sd; ++c) {
      states[i * sd + c] = data.s_prev(i)[c];
      truth[i * sd + c] = data.s(i)[c];
    }
    for (std::size_t c = 0; c < ad; ++c) actions[i * ad + c] = data.a_prev(i)[c];
  }
  const Tensor pred = model.predict_batch(states, actions);
  const Tensor act_pred = policy.act_batch(pred);
  const Tensor act_true = policy.act_batch(truth);
  LossPair out;
  for (std::size_t i = 0; i < n; ++i) {
    out.state_loss += l2(pred.row_span(i), truth.row_span(i));
    out.action_loss += l2(act_pred.row_span(i), act_true.row_span(i));
  }
  out.state_loss /= static_cast<double>(n);
  out.action_loss /= static_cast<double>(n);
  return out;
}

void save_model(const DynamicsModel& model, const std::filesystem::path& path, std::string_view metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  io::BinaryWriter w(os);
  w.bytes(kModelMagic);
  w.pod(kModelFormatVersion);
  w.string(metadata);
  w.pod(static_cast<std::uint8_t>(model.objective()));
  w.pod(model.lambda());
  w.pod(model.threshold());
  const auto& in = model.input_normalizer();
  const auto& d = model.delta_normalizer();
  w.pod(static_cast<std::uint32_t>(in.mean.size()));
  w.floats(in.mean);
  w.floats(in.std);
  w.pod(static_cast<std::uint32_t>(d.mean.size()));
  w.floats(d.mean);
  w.floats(d.std);
  diffnum::write_mlp(os, model.net());
  if (!os) throw FormatError("failed writing " + path.string());
}

DynamicsModel load_model(const std::filesystem::path& path, std::string* metadata) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("defender checkpoint " + path.string() + " not found");
  const std::string src = path.string();
  io::BinaryReader r(is, src);
  r.expect_magic(kModelMagic);
  const auto version = r.pod<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw FormatError(src + ": defender format version " + std::to_string(version) + ", this build reads version " +
                      std::to_string(kModelFormatVersion));
  }
  std::string meta = r.string();
  if (metadata) *metadata = std::move(meta);
  const auto objective = r.pod<std::uint8_t>();
  if (objective > 1) throw FormatError(src + ": unknown defender objective tag");
  const auto lambda = r.pod<float>();
  const auto threshold = r.pod<double>();
  auto read_norm = [&](std::uint32_t dim) {
    Normalizer n{std::vector<float>(dim), std::vector<float>(dim)};
    r.floats(n.mean);
    r.floats(n.std);
    return n;
  };
  const auto in_dim = r.pod<std::uint32_t>();
  if (in_dim == 0 || in_dim > 8192) throw FormatError(src + ": implausible input dimension");
  Normalizer in = read_norm(in_dim);
  const auto sd = r.pod<std::uint32_t>();
  if (sd == 0 || sd >= in_dim) throw FormatError(src + ": implausible state dimension");
  Normalizer d = read_norm(sd);
  diffnum::Mlp net = diffnum::read_mlp(is, src);
  return DynamicsModel(std::move(net), static_cast<Objective>(objective), lambda, std::move(in), std::move(d),
                       threshold);
}

}  // namespace rtslab::defender
