#include "mimnet/targetguide.hpp"

#include <cmath>
#include <limits>

#include "mimnet/error.hpp"
#include "mimnet/random.hpp"

namespace mimnet {

namespace {

double squared_distance(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  const std::size_t d = a.cols();
  const double* pa = a.values().data() + ra * d;
  const double* pb = b.values().data() + rb * d;
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = pa[c] - pb[c];
    s += diff * diff;
  }
  return s;
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor kmeanspp_seed(const Tensor& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Tensor centroids({k, d});
  std::vector<bool> chosen(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  auto take = [&](std::size_t slot, std::size_t idx) {
    chosen[idx] = true;
    for (std::size_t c = 0; c < d; ++c) centroids.at(slot, c) = points.at(idx, c);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], squared_distance(points, i, centroids, slot));
  };
  take(0, static_cast<std::size_t>(rng() % n));
  for (std::size_t slot = 1; slot < k; ++slot) {
    double total = 0.0;
    for (double v : nearest) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (nearest[i] <= 0.0) continue;
        pick = i;
        if (u < nearest[i]) break;
        u -= nearest[i];
      }
    } else {
      // Every point coincides with a centroid; take any point not yet used.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    take(slot, pick);
  }
  return centroids;
}

void update_means(const Tensor& points, const std::vector<std::uint32_t>& assignment, Tensor& centroids) {
  const std::size_t k = centroids.rows();
  const std::size_t d = centroids.cols();
  Tensor sums({k, d});
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto c = assignment[i];
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) sums.at(c, j) += points.at(i, j);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t j = 0; j < d; ++j) centroids.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
  }
}

// Moves every empty cluster onto the point currently farthest from its centroid.
void reseed_empty(const Tensor& points, Tensor& centroids, std::vector<std::uint32_t>& assignment,
                  std::vector<double>& dist) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto c : assignment) ++counts[c];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = points.rows();
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[assignment[i]] < 2) continue;
      if (far == points.rows() || dist[i] > dist[far]) far = i;
    }
    if (far == points.rows()) break;
    for (std::size_t j = 0; j < centroids.cols(); ++j) centroids.at(c, j) = points.at(far, j);
    --counts[assignment[far]];
    assignment[far] = static_cast<std::uint32_t>(c);
    counts[c] = 1;
    dist[far] = 0.0;
  }
}

}  // namespace

std::vector<double> assign_nearest(const Tensor& points, const Tensor& centroids, std::vector<std::uint32_t>& assignment,
                                   Execution exec) {
  const std::size_t n = points.rows();
  const std::size_t k = centroids.rows();
  assignment.resize(n);
  std::vector<double> dist(n);
  for_each_index(n, exec, [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double dd = squared_distance(points, i, centroids, c);
      if (dd < best) {
        best = dd;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    assignment[i] = arg;
    dist[i] = best;
  });
  return dist;
}

double inertia(const Tensor& points, const PrototypeIndex& index) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) s += squared_distance(points, i, index.centroids, index.assignment[i]);
  return s;
}

KMeansResult kmeans(const Tensor& points, const KMeansConfig& config, Execution exec) {
  const std::size_t n = points.rows();
  const std::size_t k = config.prototypes;
  if (k < 1) throw ClusteringError("need at least one prototype");
  if (!points.is_matrix() || n < k) {
    throw ClusteringError("cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " items");
  }
  if (config.max_iters < 1 || config.restarts < 1) throw ClusteringError("max_iters and restarts must be at least 1");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < config.restarts; ++restart) {
    Rng rng(mix_seed(config.seed, restart));
    Tensor centroids = kmeanspp_seed(points, k, rng);
    std::vector<std::uint32_t> assignment(n, std::numeric_limits<std::uint32_t>::max());
    std::vector<double> trace;
    for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
      std::vector<std::uint32_t> next;
      auto dist = assign_nearest(points, centroids, next, exec);
      reseed_empty(points, centroids, next, dist);
      double total = 0.0;
      for (double v : dist) total += v;
      trace.push_back(total);
      if (next == assignment) break;
      assignment = std::move(next);
      update_means(points, assignment, centroids);
    }
    PrototypeIndex index{std::move(centroids), std::move(assignment)};
    const double final_inertia = inertia(points, index);
    best.traces.push_back(std::move(trace));
    if (final_inertia < best.inertia) {
      best.inertia = final_inertia;
      best.index = std::move(index);
      best.best_restart = restart;
    }
  }
  return best;
}

Tensor attention_weights(const Tensor& query, const Tensor& rows) {
  const std::size_t d = rows.cols();
  if (query.size() != d) {
    throw DimensionError("attend: query " + shape_to_string(query.shape()) + " vs rows " + shape_to_string(rows.shape()));
  }
  Tensor scores({rows.rows(), 1});
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t k = 0; k < rows.rows(); ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += rows.at(k, c) * query[c];
    scores[k] = s * inv;
  }
  return softmax(scores, 0);
}

Var attend(Var query, Var rows) {
  const Tensor& q = query.value();
  const Tensor& r = rows.value();
  if (!r.is_matrix() || q.cols() != 1 || q.rows() != r.cols()) {
    throw DimensionError("attend: query " + shape_to_string(q.shape()) + " vs rows " + shape_to_string(r.shape()));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(r.cols()));
  Var scores = scale(matmul(rows, query), inv);
  Var weights = softmax(scores, 0);
  return matmul(transpose(rows), weights);
}

Mlp init_gate(std::size_t dim, const std::vector<std::size_t>& hidden, Rng& rng, double weight_sigma) {
  std::vector<std::size_t> widths{2 * dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  return Mlp::init(widths, weight_sigma, rng);
}

Var gate_alpha(Var item, Var prototype, const MlpVars& gate) {
  Var joined = transpose(concat({item, prototype}, 0));
  return sigmoid(mlp_forward(joined, gate));
}

Var blend(Var fine, Var coarse, Var alpha) {
  Var complement = add_scalar(scale(alpha, -1.0), 1.0);
  return add(scale_by(alpha, fine), scale_by(complement, coarse));
}

Fusion fuse(Var fine, Var coarse, Var item, Var prototype, const MlpVars& gate) {
  if (fine.value().shape() != coarse.value().shape()) {
    throw DimensionError("fuse: fine " + shape_to_string(fine.value().shape()) + " vs coarse " +
                         shape_to_string(coarse.value().shape()));
  }
  Var alpha = gate_alpha(item, prototype, gate);
  return Fusion{blend(fine, coarse, alpha), alpha};
}

}  // namespace mimnet
