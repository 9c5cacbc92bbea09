#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mimnet/dataio.hpp"
#include "mimnet/parallel.hpp"
#include "mimnet/tensor.hpp"
#include "mimnet/training_log.hpp"

namespace mimnet {

/// User and item embedding tables of one domain.
struct DomainEmbeddings {
  Tensor users;  // |U| x d
  Tensor items;  // |V| x d

  std::size_t dim() const { return users.cols(); }
};

struct MfConfig {
  std::size_t dim = 10;
  std::size_t epochs = 50;
  double lr = 0.01;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  double init_sigma = 0.1;
  double l2 = 0.0;
};

struct MfResult {
  DomainEmbeddings embeddings;
  std::vector<EpochRecord> curve;
};

using MfBatchObserver = std::function<void(std::span<const IndexedRating>)>;

/// Minimizes mean (r - u.v)^2 with Adam mini-batches. Table rows of users or
/// items without ratings keep their initial values. `observer` sees every
/// materialized batch.
MfResult train_mf(const std::vector<IndexedRating>& ratings, std::size_t n_users, std::size_t n_items,
                  const MfConfig& config, const EpochCallback& on_epoch = {},
                  Execution exec = Execution::parallel, const MfBatchObserver& observer = {});

/// Inner product, unclipped.
double predict_mf(const Tensor& user, const Tensor& item);

/// Loss (r - u.v)^2 (+ l2 penalty) of one rating and its gradients for the
/// two rows, computed on a tape.
struct MfExampleGrad {
  double loss = 0.0;
  double prediction = 0.0;
  Tensor user_grad;
  Tensor item_grad;
};
MfExampleGrad mf_example_gradient(const Tensor& user, const Tensor& item, double rating, double l2 = 0.0);

/// Sum of per-example gradients of a batch scattered into table-shaped
/// buffers, reduced in batch order (bit-identical for either execution).
struct MfBatchGrad {
  Tensor users;
  Tensor items;
  double loss_sum = 0.0;
  double abs_err_sum = 0.0;
  double sq_err_sum = 0.0;
};
MfBatchGrad mf_batch_gradient(const DomainEmbeddings& tables, const std::vector<IndexedRating>& ratings,
                              std::span<const std::size_t> batch, double l2, Execution exec);

}  // namespace mimnet
