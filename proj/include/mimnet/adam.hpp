#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mimnet/tensor.hpp"

namespace mimnet {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place. The state is lazily
/// sized on the first call and must be reused with the same parameter list.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

}  // namespace mimnet
