#pragma once

#include <vector>

#include "mimnet/autodiff.hpp"
#include "mimnet/random.hpp"

namespace mimnet {

/// Weights [in x out] and bias [1 x out] of one dense layer.
struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

/// Feed-forward stack; ReLU between layers, linear output.
struct Mlp {
  std::vector<DenseLayer> layers;

  static Mlp init(const std::vector<std::size_t>& widths, double weight_sigma, Rng& rng);
  std::size_t input_width() const { return layers.front().weight.rows(); }
  std::size_t output_width() const { return layers.back().weight.cols(); }
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

/// Tape handles for an Mlp's parameters, in `Mlp::parameters()` order.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;

  static MlpVars bind(Tape& tape, const Mlp& mlp, bool trainable);
  std::vector<Var> all() const;
};

/// Applies the stack row-wise to x [n x in].
Var mlp_forward(Var x, const MlpVars& vars);

}  // namespace mimnet
