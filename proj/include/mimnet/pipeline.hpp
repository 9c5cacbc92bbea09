#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mimnet/autodiff.hpp"
#include "mimnet/checkpoint.hpp"
#include "mimnet/dataio.hpp"
#include "mimnet/interest.hpp"
#include "mimnet/nn.hpp"
#include "mimnet/parallel.hpp"
#include "mimnet/pretrain.hpp"
#include "mimnet/targetguide.hpp"
#include "mimnet/training_log.hpp"

namespace mimnet {

/// Component switches for ablation runs; all true is the full model.
struct AblationFlags {
  bool multi = true;         // false: a single interest capsule (K = 1)
  bool target_fine = true;   // false: drop the candidate-item attention view
  bool target_proto = true;  // false: drop the prototype attention view
  bool adapt = true;         // false: blend the two views with alpha = 0.5
  /// Replaces the gate with a constant alpha when both views are active.
  std::optional<double> fixed_alpha;

  void validate() const;
  /// Parses "without-multi", "without-target", "without-proto", "without-adapt".
  static AblationFlags from_names(const std::vector<std::string>& names);
  std::vector<std::string> names() const;
  std::string label() const;
};

struct ModelConfig {
  std::size_t dim = 10;
  RoutingConfig routing;
  /// Meta network hidden width; 0 selects 2 * dim.
  std::size_t meta_hidden = 0;
  std::vector<std::size_t> gate_hidden;
  double meta_init_sigma = 0.05;
  double gate_init_sigma = 0.05;
  AblationFlags flags;
  std::uint64_t seed = 0;
};

/// Everything needed to predict a target-domain rating for a source-domain user.
struct MimnetModel {
  DomainEmbeddings source;
  DomainEmbeddings target;
  Tensor capsule;  // shared routing transform M, d x d
  Mlp meta;
  Mlp gate;
  PrototypeIndex prototypes;
  RoutingConfig routing;
  AblationFlags flags;

  std::size_t dim() const { return source.dim(); }
  /// K after ablation (1 without multi-interest).
  std::size_t interests() const { return flags.multi ? routing.interests : 1; }
  RoutingConfig effective_routing() const;
  void validate() const;

  /// Stage-two trainable tensors: capsule, then meta layers, then gate layers.
  std::vector<Tensor*> trainable();
  std::vector<const Tensor*> trainable() const;
};

/// Capsule transform starts at the identity; meta net and gate as in their modules.
MimnetModel init_model(DomainEmbeddings source, DomainEmbeddings target, PrototypeIndex prototypes,
                       const ModelConfig& config);

// ---- forward path -------------------------------------------------------

struct BoundParams {
  Var capsule;
  MlpVars meta;
  MlpVars gate;

  std::vector<Var> all() const;
};

BoundParams bind_parameters(Tape& tape, const MimnetModel& model, bool trainable);

/// Per-user part of the forward path, shared by all candidate items.
struct UserPath {
  Var interests;    // K x d
  Var bridges;      // K x d*d
  Var transformed;  // K x d
};

UserPath user_path(Tape& tape, const MimnetModel& model, const BoundParams& params,
                   std::span<const std::uint32_t> history, std::uint32_t source_user);

struct ItemPath {
  Var prediction;  // 1 x 1
  Var user;        // fused target-space user, d x 1
  double alpha = 1.0;
};

/// Attention over the transformed rows guided by the item and/or its prototype.
ItemPath item_path(Tape& tape, const MimnetModel& model, const BoundParams& params, const UserPath& user,
                   std::uint32_t target_item);

/// Unclipped rating estimate.
double predict(const MimnetModel& model, const UserHistories& histories, std::uint32_t source_user,
               std::uint32_t target_item);
double predict(const MimnetModel& model, const CdrTask& task, const UserHistories& histories,
               std::string_view user_token, std::string_view item_token);

/// Predictions for many examples, grouped per user; parallel over users.
std::vector<double> predict_examples(const MimnetModel& model, const UserHistories& histories,
                                     std::span<const CrossExample> examples, Execution exec);

// ---- loss and gradients ----------------------------------------------------

/// Squared-error loss and gradients for `MimnetModel::trainable()`.
struct LossGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
  std::vector<double> predictions;
};

/// (r - y)^2 of one example.
LossGradient example_loss_gradient(const MimnetModel& model, const UserHistories& histories,
                                   const CrossExample& example);

/// Mean squared error over the batch. Examples are grouped by user, each
/// group taped independently, and group results reduced in first-seen
/// order, so serial and parallel execution agree bit for bit.
LossGradient batch_loss_gradient(const MimnetModel& model, const UserHistories& histories,
                                 std::span<const CrossExample> batch, Execution exec);

double batch_loss(const MimnetModel& model, const UserHistories& histories, std::span<const CrossExample> batch);

// ---- cross-domain training -----------------------------------------------

struct CrossDomainConfig {
  std::size_t epochs = 10;
  double lr = 0.01;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
};

using CrossBatchObserver = std::function<void(std::span<const CrossExample>)>;

struct CrossDomainResult {
  std::vector<EpochRecord> curve;
};

/// Minimizes the mean squared rating error over `train`; only the capsule
/// transform, meta network and gate change.
CrossDomainResult train_cross_domain(MimnetModel& model, const UserHistories& histories,
                                     const std::vector<CrossExample>& train, const CrossDomainConfig& config,
                                     const EpochCallback& on_epoch = {}, Execution exec = Execution::parallel,
                                     const CrossBatchObserver& observer = {});

/// Trains on the target ratings of the split's training overlap users.
CrossDomainResult train_cross_domain(MimnetModel& model, const CdrTask& task, const ColdStartSplit& split,
                                     const UserHistories& histories, const CrossDomainConfig& config,
                                     const EpochCallback& on_epoch = {}, Execution exec = Execution::parallel,
                                     const CrossBatchObserver& observer = {});

// ---- end-to-end protocol -------------------------------------------------

struct ExperimentConfig {
  MfConfig pretrain;
  KMeansConfig kmeans;
  ModelConfig model;
  CrossDomainConfig cross;
  std::size_t max_history = 64;
  bool clip_eval = false;

  /// Copy with every stage seed derived from `seed`.
  ExperimentConfig seeded(std::uint64_t seed) const;
};

struct PretrainedDomains {
  DomainEmbeddings source;
  DomainEmbeddings target;
  std::vector<EpochRecord> source_curve;
  std::vector<EpochRecord> target_curve;
};

using RatingBatchObserver = std::function<void(std::string_view domain, std::span<const IndexedRating>)>;

/// Pretrains both domains; test users' target ratings are withheld.
PretrainedDomains pretrain_domains(const CdrTask& task, const ColdStartSplit& split, const MfConfig& config,
                                   const EpochCallback& on_epoch = {}, Execution exec = Execution::parallel,
                                   const RatingBatchObserver& observer = {});

PrototypeIndex cluster_target_items(const DomainEmbeddings& target, const KMeansConfig& config,
                                    Execution exec = Execution::parallel);

// ---- checkpoints -----------------------------------------------------------

ModelBundle embeddings_bundle(const DomainEmbeddings& source, const DomainEmbeddings& target);
PretrainedDomains embeddings_from_bundle(const ModelBundle& bundle);
ModelBundle prototypes_bundle(const PrototypeIndex& index);
PrototypeIndex prototypes_from_bundle(const ModelBundle& bundle);
ModelBundle model_bundle(const MimnetModel& model);
MimnetModel model_from_bundle(const ModelBundle& bundle);

}  // namespace mimnet
