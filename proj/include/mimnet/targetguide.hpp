#pragma once

#include <cstdint>
#include <vector>

#include "mimnet/autodiff.hpp"
#include "mimnet/nn.hpp"
#include "mimnet/parallel.hpp"

namespace mimnet {

/// k-means centroids over target items and each item's cluster.
struct PrototypeIndex {
  Tensor centroids;  // P x d
  std::vector<std::uint32_t> assignment;

  std::size_t size() const { return centroids.rows(); }
  /// Centroid of the item's cluster as a d x 1 column.
  Tensor prototype_of(std::size_t item) const { return centroids.row(assignment.at(item)); }
};

struct KMeansConfig {
  std::size_t prototypes = 100;
  std::size_t max_iters = 50;
  /// Independent k-means++ restarts; the lowest final inertia wins.
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  PrototypeIndex index;
  double inertia = 0.0;
  /// Inertia after every assignment step, one trace per restart.
  std::vector<std::vector<double>> traces;
  std::size_t best_restart = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments are
/// stable or after max_iters; an empty cluster is re-seeded at the point
/// farthest from its centroid.
KMeansResult kmeans(const Tensor& points, const KMeansConfig& config, Execution exec = Execution::parallel);

/// Nearest-centroid assignment (lowest index wins ties); returns squared distances.
std::vector<double> assign_nearest(const Tensor& points, const Tensor& centroids, std::vector<std::uint32_t>& assignment,
                                   Execution exec);

double inertia(const Tensor& points, const PrototypeIndex& index);

/// softmax_k(query . row_k / sqrt(d)) weighted sum of rows; query [d x 1], rows [K x d].
Var attend(Var query, Var rows);
Tensor attention_weights(const Tensor& query, const Tensor& rows);

/// Single linear layer 2d -> 1 by default; `hidden` inserts ReLU layers.
Mlp init_gate(std::size_t dim, const std::vector<std::size_t>& hidden, Rng& rng, double weight_sigma = 0.05);

/// sigmoid(gate([item; prototype])) as 1x1.
Var gate_alpha(Var item, Var prototype, const MlpVars& gate);

struct Fusion {
  Var user;
  Var alpha;
};

/// alpha * fine + (1 - alpha) * coarse with alpha from the gate.
Fusion fuse(Var fine, Var coarse, Var item, Var prototype, const MlpVars& gate);
/// Same blend with a fixed alpha.
Var blend(Var fine, Var coarse, Var alpha);

}  // namespace mimnet
