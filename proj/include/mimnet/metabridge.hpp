#pragma once

#include "mimnet/autodiff.hpp"
#include "mimnet/nn.hpp"

namespace mimnet {

/// Two-layer meta network d -> hidden (ReLU) -> d*d, weights ~ N(0, sigma), zero biases.
Mlp init_meta_net(std::size_t dim, std::size_t hidden, Rng& rng, double weight_sigma = 0.05);

/// Applies the meta network to every interest row: [K x d] -> [K x d*d].
Var generate_bridges(Var interests, const MlpVars& meta);

/// Row k of the result is reshape(bridges[k], d, d) * user: [K x d].
Var transform_user(Var user_source, Var bridges);

/// Row k of `bridges` viewed as a row-major d x d matrix.
Tensor bridge_matrix(const Tensor& bridges, std::size_t k);

// Tensor-level conveniences.
Tensor generate_bridges(const Tensor& interests, const Mlp& meta);
Tensor transform_user(const Tensor& user_source, const Tensor& bridges);

}  // namespace mimnet
