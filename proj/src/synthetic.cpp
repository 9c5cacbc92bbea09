#include "mimnet/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <unordered_set>

#include "mimnet/error.hpp"
#include "mimnet/random.hpp"

namespace mimnet {

namespace {

std::string token(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
  return buf;
}

std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t sample_categorical(Rng& rng, const std::vector<double>& weights) {
  double u = uniform01(rng);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

void generate_domain(const SyntheticConfig& cfg, Rng& rng, char item_prefix, std::size_t min_count,
                     std::size_t max_count, const std::vector<std::vector<double>>& mixture,
                     const std::vector<double>& max_weight, std::vector<std::size_t>& item_cluster,
                     std::vector<RatingTriple>& out) {
  const std::size_t n_items = cfg.n_items_per_domain;
  const std::size_t n_clusters = cfg.n_latent_interests;
  item_cluster.resize(n_items);
  std::vector<std::vector<std::size_t>> members(n_clusters);
  for (std::size_t j = 0; j < n_items; ++j) {
    item_cluster[j] = j % n_clusters;
  }
  // Shuffle cluster labels so item ids carry no cluster information.
  for (std::size_t i = n_items; i > 1; --i) std::swap(item_cluster[i - 1], item_cluster[uniform_index(rng, i)]);
  for (std::size_t j = 0; j < n_items; ++j) members[item_cluster[j]].push_back(j);

  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
  const std::vector<double> uniform(n_clusters, 1.0 / static_cast<double>(n_clusters));
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const std::size_t count = std::min(n_items, min_count + uniform_index(rng, max_count - min_count + 1));
    std::unordered_set<std::size_t> chosen;
    while (chosen.size() < count) {
      const auto& weights = uniform01(rng) < cfg.focus ? mixture[u] : uniform;
      const std::size_t c = sample_categorical(rng, weights);
      const std::size_t item = members[c][uniform_index(rng, members[c].size())];
      if (!chosen.insert(item).second) continue;
      const double affinity = mixture[u][c] / max_weight[u];
      double rating = 1.0 + 4.0 * affinity;
      if (cfg.noise_sigma > 0.0) rating += noise(rng);
      rating = std::clamp(rating, kMinRating, kMaxRating);
      out.push_back(RatingTriple{token('u', u), token(item_prefix, item), rating});
    }
  }
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_latent_interests < 1) throw ConfigError("synthetic data needs at least one latent interest");
  if (cfg.n_users < 1 || cfg.n_items_per_domain < cfg.n_latent_interests) {
    throw ConfigError("synthetic data needs users and at least one item per latent interest");
  }
  if (cfg.min_source_interactions < 1 || cfg.min_source_interactions > cfg.max_source_interactions ||
      cfg.min_target_interactions < 1 || cfg.min_target_interactions > cfg.max_target_interactions) {
    throw ConfigError("synthetic interaction-count bounds are inconsistent");
  }
  Rng rng(cfg.seed);
  SyntheticData data;
  auto& mixture = data.truth.user_mixture;
  mixture.resize(cfg.n_users);
  std::vector<double> max_weight(cfg.n_users);
  std::gamma_distribution<double> gamma(cfg.dirichlet_alpha, 1.0);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    auto& w = mixture[u];
    w.resize(cfg.n_latent_interests);
    double total = 0.0;
    for (auto& v : w) {
      v = cfg.n_latent_interests == 1 ? 1.0 : gamma(rng) + 1e-12;
      total += v;
    }
    for (auto& v : w) v /= total;
    max_weight[u] = *std::max_element(w.begin(), w.end());
  }
  generate_domain(cfg, rng, 's', cfg.min_source_interactions, cfg.max_source_interactions, mixture, max_weight,
                  data.truth.source_item_cluster, data.source);
  generate_domain(cfg, rng, 't', cfg.min_target_interactions, cfg.max_target_interactions, mixture, max_weight,
                  data.truth.target_item_cluster, data.target);
  return data;
}

SyntheticData generate_synthetic(std::size_t n_users, std::size_t n_items_per_domain, std::size_t n_latent_interests,
                                 double noise_sigma, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_users = n_users;
  cfg.n_items_per_domain = n_items_per_domain;
  cfg.n_latent_interests = n_latent_interests;
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace mimnet
