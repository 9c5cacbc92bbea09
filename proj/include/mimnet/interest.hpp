#pragma once

#include <cstdint>
#include <vector>

#include "mimnet/autodiff.hpp"

namespace mimnet {

struct RoutingConfig {
  std::size_t interests = 3;
  std::size_t iterations = 3;
  double logit_init_sigma = 1.0;
  std::uint64_t seed = 0;
  /// b += e.Mv each round (classic routing); false reassigns b = e.Mv.
  bool accumulate_logits = true;

  void validate() const;
};

/// (|z|^2 / (1 + |z|^2)) * z / |z| over all elements of z; zero maps to zero.
Tensor squash(const Tensor& z);

/// Row-wise squash on the tape.
Var squash_rows(Var z);

/// W^T X for W [n x K], X [n x d], each output summed in ascending value order
/// so the result does not depend on the order of the n rows.
Var capsule_sum(Var weights, Var inputs);

/// Normal(0, sigma) logits [n x K], seeded from (config.seed, user_key).
Tensor initial_logits(std::size_t n, const RoutingConfig& config, std::uint64_t user_key);

/// Per-iteration coupling weights, for inspection.
struct RoutingTrace {
  std::vector<Tensor> weights;
};

/// Dynamic routing of history items [n x d] into K interest capsules [K x d].
///
/// Earlier rounds run off-tape; only the final round is recorded, with its
/// coupling weights held constant, so gradients reach `transform` through
/// the final round's predictions M v_j.
Var route(Var history, Var transform, const Tensor& init_logits, const RoutingConfig& config,
          RoutingTrace* trace = nullptr);

/// Convenience overload without a caller-visible tape.
Tensor route(const Tensor& history, const Tensor& transform, const RoutingConfig& config, std::uint64_t user_key,
             RoutingTrace* trace = nullptr);

}  // namespace mimnet
