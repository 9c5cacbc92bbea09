#include "mimnet/run_config.hpp"

#include "mimnet/error.hpp"

namespace mimnet {

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
  require(dim >= 1, "dim must be at least 1");
  require(interests >= 1, "interests must be at least 1");
  require(routing_iters >= 1, "routing-iters must be at least 1");
  require(logit_init_sigma >= 0.0, "logit init sigma must be non-negative");
  require(prototypes >= 1, "prototypes must be at least 1");
  require(kmeans_iters >= 1 && kmeans_restarts >= 1, "k-means iterations and restarts must be at least 1");
  require(lr_pretrain > 0.0 && lr_cdr > 0.0, "learning rates must be positive");
  require(batch_pretrain >= 1 && batch_cdr >= 1, "batch sizes must be at least 1");
  require(epochs_pretrain >= 1, "pretraining needs at least one epoch");
  require(max_history >= 1, "max history must be at least 1");
  require(!seeds.empty(), "at least one seed is required");
  AblationFlags::from_names(ablate);
}

ExperimentConfig RunConfig::experiment(std::uint64_t run_seed) const {
  validate();
  ExperimentConfig c;
  c.pretrain.dim = dim;
  c.pretrain.epochs = epochs_pretrain;
  c.pretrain.lr = lr_pretrain;
  c.pretrain.batch_size = batch_pretrain;
  c.kmeans.prototypes = prototypes;
  c.kmeans.max_iters = kmeans_iters;
  c.kmeans.restarts = kmeans_restarts;
  c.model.dim = dim;
  c.model.routing.interests = interests;
  c.model.routing.iterations = routing_iters;
  c.model.routing.logit_init_sigma = logit_init_sigma;
  c.model.routing.accumulate_logits = accumulate_logits;
  c.model.meta_hidden = meta_hidden;
  c.model.gate_hidden = gate_hidden;
  c.model.flags = AblationFlags::from_names(ablate);
  c.cross.epochs = epochs_cdr;
  c.cross.lr = lr_cdr;
  c.cross.batch_size = batch_cdr;
  c.max_history = max_history;
  c.clip_eval = clip_eval;
  return c.seeded(run_seed);
}

ExperimentConfig RunConfig::experiment() const { return experiment(seed); }

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{
      {"source", c.source},
      {"target", c.target},
      {"out", c.out},
      {"beta", c.beta},
      {"seed", c.seed},
      {"dim", c.dim},
      {"interests", c.interests},
      {"routing_iters", c.routing_iters},
      {"logit_init_sigma", c.logit_init_sigma},
      {"accumulate_logits", c.accumulate_logits},
      {"meta_hidden", c.meta_hidden},
      {"gate_hidden", c.gate_hidden},
      {"prototypes", c.prototypes},
      {"kmeans_iters", c.kmeans_iters},
      {"kmeans_restarts", c.kmeans_restarts},
      {"epochs_pretrain", c.epochs_pretrain},
      {"epochs_cdr", c.epochs_cdr},
      {"lr_pretrain", c.lr_pretrain},
      {"lr_cdr", c.lr_cdr},
      {"batch_pretrain", c.batch_pretrain},
      {"batch_cdr", c.batch_cdr},
      {"max_history", c.max_history},
      {"ablate", c.ablate},
      {"clip_eval", c.clip_eval},
      {"seeds", c.seeds},
      {"sweep_interests", c.sweep_interests},
      {"synth",
       {{"n_users", c.synth.n_users},
        {"n_items_per_domain", c.synth.n_items_per_domain},
        {"n_latent_interests", c.synth.n_latent_interests},
        {"noise_sigma", c.synth.noise_sigma},
        {"seed", c.synth.seed},
        {"min_source_interactions", c.synth.min_source_interactions},
        {"max_source_interactions", c.synth.max_source_interactions},
        {"min_target_interactions", c.synth.min_target_interactions},
        {"max_target_interactions", c.synth.max_target_interactions},
        {"dirichlet_alpha", c.synth.dirichlet_alpha},
        {"focus", c.synth.focus}}},
  };
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  // Missing keys keep their defaults so older config files stay loadable.
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("source", c.source);
  get("target", c.target);
  get("out", c.out);
  get("beta", c.beta);
  get("seed", c.seed);
  get("dim", c.dim);
  get("interests", c.interests);
  get("routing_iters", c.routing_iters);
  get("logit_init_sigma", c.logit_init_sigma);
  get("accumulate_logits", c.accumulate_logits);
  get("meta_hidden", c.meta_hidden);
  get("gate_hidden", c.gate_hidden);
  get("prototypes", c.prototypes);
  get("kmeans_iters", c.kmeans_iters);
  get("kmeans_restarts", c.kmeans_restarts);
  get("epochs_pretrain", c.epochs_pretrain);
  get("epochs_cdr", c.epochs_cdr);
  get("lr_pretrain", c.lr_pretrain);
  get("lr_cdr", c.lr_cdr);
  get("batch_pretrain", c.batch_pretrain);
  get("batch_cdr", c.batch_cdr);
  get("max_history", c.max_history);
  get("ablate", c.ablate);
  get("clip_eval", c.clip_eval);
  get("seeds", c.seeds);
  get("sweep_interests", c.sweep_interests);
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    auto sget = [&s](const char* key, auto& field) {
      if (s.contains(key)) s.at(key).get_to(field);
    };
    sget("n_users", c.synth.n_users);
    sget("n_items_per_domain", c.synth.n_items_per_domain);
    sget("n_latent_interests", c.synth.n_latent_interests);
    sget("noise_sigma", c.synth.noise_sigma);
    sget("seed", c.synth.seed);
    sget("min_source_interactions", c.synth.min_source_interactions);
    sget("max_source_interactions", c.synth.max_source_interactions);
    sget("min_target_interactions", c.synth.min_target_interactions);
    sget("max_target_interactions", c.synth.max_target_interactions);
    sget("dirichlet_alpha", c.synth.dirichlet_alpha);
    sget("focus", c.synth.focus);
  }
}

}  // namespace mimnet
