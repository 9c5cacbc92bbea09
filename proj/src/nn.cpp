#include "mimnet/nn.hpp"

#include "mimnet/error.hpp"

namespace mimnet {

Mlp Mlp::init(const std::vector<std::size_t>& widths, double weight_sigma, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("mlp needs at least an input and an output width");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    mlp.layers.push_back(DenseLayer{normal_tensor({widths[i], widths[i + 1]}, weight_sigma, rng),
                                    Tensor({1, widths[i + 1]}, 0.0)});
  }
  return mlp;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

MlpVars MlpVars::bind(Tape& tape, const Mlp& mlp, bool trainable) {
  MlpVars vars;
  for (const auto& layer : mlp.layers) {
    vars.weights.push_back(tape.leaf(layer.weight, trainable));
    vars.biases.push_back(tape.leaf(layer.bias, trainable));
  }
  return vars;
}

std::vector<Var> MlpVars::all() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

Var mlp_forward(Var x, const MlpVars& vars) {
  Var h = x;
  for (std::size_t i = 0; i < vars.weights.size(); ++i) {
    h = add_row(matmul(h, vars.weights[i]), vars.biases[i]);
    if (i + 1 < vars.weights.size()) h = relu(h);
  }
  return h;
}

}  // namespace mimnet
