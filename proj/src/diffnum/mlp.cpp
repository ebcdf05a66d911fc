#include "rtslab/diffnum/mlp.hpp"

#include <cmath>

#include "rtslab/diffnum/kernels.hpp"
#include "rtslab/errors.hpp"

namespace rtslab::diffnum {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::linear:
      return "linear";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "unknown";
}

Activation activation_from_name(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ContractError("unknown activation '" + std::string(name) + "'");
}

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw DimensionError("an Mlp needs at least input and output dims");
  for (std::size_t d : dims) {
    if (d == 0) throw DimensionError("Mlp layer dims must be positive");
  }
}

void activate(Tensor& t, Activation a) {
  switch (a) {
    case Activation::linear:
      return;
    case Activation::tanh:
      kernels::tanh_inplace(t);
      return;
    case Activation::relu:
      kernels::relu_inplace(t);
      return;
  }
}

Var activate(Var v, Activation a) {
  switch (a) {
    case Activation::linear:
      return v;
    case Activation::tanh:
      return tanh(v);
    case Activation::relu:
      return relu(v);
  }
  return v;
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> layer_dims, Activation hidden, Activation output,
         std::mt19937_64& rng)
    : dims_(std::move(layer_dims)), hidden_(hidden), output_(output) {
  check_dims(dims_);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    std::uniform_real_distribution<float> dist(-bound, bound);
    Layer layer{Tensor::matrix(in, out), Tensor({out})};
    for (float& w : layer.weight.data()) w = dist(rng);
    for (float& b : layer.bias.data()) b = dist(rng);
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<std::size_t> layer_dims, Activation hidden, Activation output,
         std::vector<Layer> layers)
    : dims_(std::move(layer_dims)), hidden_(hidden), output_(output), layers_(std::move(layers)) {
  check_dims(dims_);
  if (layers_.size() + 1 != dims_.size()) {
    throw DimensionError("Mlp expects " + std::to_string(dims_.size() - 1) + " layers, got " +
                         std::to_string(layers_.size()));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Shape w{dims_[l], dims_[l + 1]};
    const Shape b{dims_[l + 1]};
    if (layers_[l].weight.shape() != w || layers_[l].bias.shape() != b) {
      throw DimensionError("layer " + std::to_string(l) + " has weight " +
                           shape_string(layers_[l].weight.shape()) + ", expected " +
                           shape_string(w));
    }
  }
}

void Mlp::check_input(const Tensor& input) const {
  if (dims_.empty()) throw ContractError("forward on an empty Mlp");
  if (input.cols() != dims_.front()) {
    throw DimensionError("Mlp input has " + std::to_string(input.cols()) + " features, expected " +
                         std::to_string(dims_.front()));
  }
}

Tensor Mlp::forward(const Tensor& input) const {
  check_input(input);
  Tensor h = input;
  if (h.rank() != 2) h = Tensor({input.rows(), input.cols()}, input.values());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = kernels::matmul(h, layers_[l].weight);
    kernels::add_row_inplace(h, layers_[l].bias);
    activate(h, l + 1 == layers_.size() ? output_ : hidden_);
  }
  return h;
}

Var Mlp::forward(Tape& tape, Var input, ParamMode mode) const {
  check_input(input.value());
  Var h = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    Var w = mode == ParamMode::tracked ? tape.parameter(layer.weight)
                                       : tape.constant_ref(layer.weight);
    Var b = mode == ParamMode::tracked ? tape.parameter(layer.bias) : tape.constant_ref(layer.bias);
    h = activate(add_row(matmul(h, w), b), l + 1 == layers_.size() ? output_ : hidden_);
  }
  return h;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::scale_output_layer(float factor) {
  if (layers_.empty()) return;
  for (float& v : layers_.back().weight.data()) v *= factor;
  for (float& v : layers_.back().bias.data()) v *= factor;
}

void soft_update(Mlp& target, const Mlp& source, float rate) {
  if (target.layer_dims() != source.layer_dims()) {
    throw DimensionError("soft_update between networks of different shapes");
  }
  auto dst = target.parameters();
  auto src = source.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = dst[i]->data();
    auto s = src[i]->data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = rate * s[k] + (1.0f - rate) * d[k];
  }
}

}  // namespace rtslab::diffnum
