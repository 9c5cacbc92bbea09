#pragma once

#include <cstdint>
#include <vector>

#include "mimnet/dataio.hpp"

namespace mimnet {

/// Planted-interest two-domain generator.
///
/// Items of each domain are partitioned into latent clusters. Each user draws
/// a mixture over clusters; the same mixture drives both domains, so a user's
/// source behaviour predicts their target ratings. A user picks clusters in
/// proportion to the mixture (with probability `focus`, otherwise uniformly)
/// and rates an item 1 + 4 * affinity + noise, clipped to [1, 5], where the
/// affinity of the favourite cluster is 1.
struct SyntheticConfig {
  std::size_t n_users = 200;
  std::size_t n_items_per_domain = 300;
  std::size_t n_latent_interests = 3;
  double noise_sigma = 0.3;
  std::uint64_t seed = 2024;
  std::size_t min_source_interactions = 3;
  std::size_t max_source_interactions = 40;
  std::size_t min_target_interactions = 10;
  std::size_t max_target_interactions = 30;
  double dirichlet_alpha = 0.5;
  double focus = 0.8;
};

struct SyntheticTruth {
  /// n_users x n_latent_interests mixture weights (rows sum to 1).
  std::vector<std::vector<double>> user_mixture;
  std::vector<std::size_t> source_item_cluster;
  std::vector<std::size_t> target_item_cluster;
};

struct SyntheticData {
  std::vector<RatingTriple> source;
  std::vector<RatingTriple> target;
  SyntheticTruth truth;
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

SyntheticData generate_synthetic(std::size_t n_users, std::size_t n_items_per_domain, std::size_t n_latent_interests,
                                 double noise_sigma, std::uint64_t seed);

}  // namespace mimnet
