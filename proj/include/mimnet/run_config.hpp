#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimnet/pipeline.hpp"
#include "mimnet/synthetic.hpp"

namespace mimnet {

/// Every hyperparameter and path a CLI run needs.
struct RunConfig {
  std::string source;
  std::string target;
  std::string out = "run";

  double beta = 0.2;
  std::uint64_t seed = 1;

  std::size_t dim = 10;
  std::size_t interests = 3;
  std::size_t routing_iters = 3;
  double logit_init_sigma = 1.0;
  bool accumulate_logits = true;
  std::size_t meta_hidden = 0;  // 0 selects 2 * dim
  std::vector<std::size_t> gate_hidden;

  std::size_t prototypes = 100;
  std::size_t kmeans_iters = 50;
  std::size_t kmeans_restarts = 10;

  std::size_t epochs_pretrain = 50;
  std::size_t epochs_cdr = 10;
  double lr_pretrain = 0.01;
  double lr_cdr = 0.01;
  std::size_t batch_pretrain = 512;
  std::size_t batch_cdr = 512;
  std::size_t max_history = 64;

  std::vector<std::string> ablate;
  bool clip_eval = false;

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> sweep_interests{1, 4, 7, 10, 13, 16};

  SyntheticConfig synth;

  /// Raises ConfigError on out-of-range values or an invalid ablation set.
  void validate() const;
  /// Stage configs with seeds derived from `seed`.
  ExperimentConfig experiment() const;
  ExperimentConfig experiment(std::uint64_t run_seed) const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

}  // namespace mimnet
