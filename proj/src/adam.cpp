#include "mimnet/adam.hpp"

#include <cmath>
#include <string>

#include "mimnet/error.hpp"

namespace mimnet {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config) {
  if (!(config.lr > 0.0)) throw ContractError("adam: learning rate must be positive");
  if (params.size() != grads.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape(), 0.0);
      state.second_moment.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw DimensionError("adam: state was built for a different parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first_moment[i].shape()) {
      throw DimensionError("adam: parameter " + shape_to_string(params[i]->shape()) + " vs gradient " +
                           shape_to_string(grads[i].shape()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace mimnet
