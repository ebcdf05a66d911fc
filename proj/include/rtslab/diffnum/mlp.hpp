#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "rtslab/diffnum/tape.hpp"
#include "rtslab/diffnum/tensor.hpp"

namespace rtslab::diffnum {

enum class Activation : std::uint8_t { linear = 0, tanh = 1, relu = 2 };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

struct Layer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  bool operator==(const Layer&) const = default;
};

// Whether a taped forward pass registers the weights as differentiable
// parameters or as frozen constants.
enum class ParamMode { tracked, frozen };

// Fully connected network: y = act(x W + b) per layer, `hidden` activation on
// every layer but the last, `output` on the last.
class Mlp {
 public:
  Mlp() = default;
  // Uniform fan-in initialisation U(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
  Mlp(std::vector<std::size_t> layer_dims, Activation hidden, Activation output,
      std::mt19937_64& rng);
  Mlp(std::vector<std::size_t> layer_dims, Activation hidden, Activation output,
      std::vector<Layer> layers);

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  Activation hidden_activation() const noexcept { return hidden_; }
  Activation output_activation() const noexcept { return output_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  // Rows of `input` are samples; input.cols() must equal input_dim().
  Tensor forward(const Tensor& input) const;
  Var forward(Tape& tape, Var input, ParamMode mode) const;

  // Weights and biases in layer order (w0, b0, w1, b1, ...).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

  // Multiply the last layer's parameters by `factor`.
  void scale_output_layer(float factor);

  bool operator==(const Mlp&) const = default;

 private:
  void check_input(const Tensor& input) const;

  std::vector<std::size_t> dims_;
  Activation hidden_ = Activation::tanh;
  Activation output_ = Activation::linear;
  std::vector<Layer> layers_;
};

// Free-function spelling used throughout the pipeline.
inline Tensor mlp_forward(const Mlp& net, const Tensor& input) { return net.forward(input); }

// target <- rate * source + (1 - rate) * target, parameter-wise.
void soft_update(Mlp& target, const Mlp& source, float rate);

}  // namespace rtslab::diffnum
