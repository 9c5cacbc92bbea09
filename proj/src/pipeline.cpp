#include "mimnet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "mimnet/adam.hpp"
#include "mimnet/error.hpp"
#include "mimnet/metabridge.hpp"
#include "mimnet/random.hpp"

namespace mimnet {

// ---- flags / model ---------------------------------------------------------

void AblationFlags::validate() const {
  if (!target_fine && !target_proto) {
    throw ConfigError("ablation removes both target-guided views (without-target + without-proto); nothing aggregates the interests");
  }
  if (fixed_alpha && !(*fixed_alpha >= 0.0 && *fixed_alpha <= 1.0)) throw ConfigError("fixed alpha must lie in [0, 1]");
}

AblationFlags AblationFlags::from_names(const std::vector<std::string>& names) {
  AblationFlags flags;
  for (const auto& name : names) {
    if (name == "without-multi") flags.multi = false;
    else if (name == "without-target") flags.target_fine = false;
    else if (name == "without-proto") flags.target_proto = false;
    else if (name == "without-adapt") flags.adapt = false;
    else throw ConfigError("unknown ablation '" + name + "'");
  }
  flags.validate();
  return flags;
}

std::vector<std::string> AblationFlags::names() const {
  std::vector<std::string> out;
  if (!multi) out.emplace_back("without-multi");
  if (!target_fine) out.emplace_back("without-target");
  if (!target_proto) out.emplace_back("without-proto");
  if (!adapt) out.emplace_back("without-adapt");
  return out;
}

std::string AblationFlags::label() const {
  const auto n = names();
  if (n.empty()) return "full";
  std::string out;
  for (const auto& s : n) out += (out.empty() ? "" : "+") + s;
  return out;
}

RoutingConfig MimnetModel::effective_routing() const {
  RoutingConfig r = routing;
  r.interests = interests();
  return r;
}

void MimnetModel::validate() const {
  const std::size_t d = dim();
  auto fail = [](const std::string& what) { throw DimensionError("model: " + what); };
  if (d == 0) fail("empty embeddings");
  if (source.items.cols() != d || target.users.cols() != d || target.items.cols() != d) fail("domain tables disagree on d");
  if (capsule.rows() != d || capsule.cols() != d) fail("capsule transform is " + shape_to_string(capsule.shape()));
  if (meta.layers.empty() || meta.input_width() != d || meta.output_width() != d * d) fail("meta network widths do not map d -> d*d");
  if (gate.layers.empty() || gate.input_width() != 2 * d || gate.output_width() != 1) fail("gate does not map 2d -> 1");
  if (prototypes.centroids.cols() != d) fail("prototype centroids are not d-dimensional");
  if (prototypes.assignment.size() != target.items.rows()) fail("prototype assignment does not cover the target items");
  routing.validate();
  flags.validate();
}

std::vector<Tensor*> MimnetModel::trainable() {
  std::vector<Tensor*> out{&capsule};
  for (auto* p : meta.parameters()) out.push_back(p);
  for (auto* p : gate.parameters()) out.push_back(p);
  return out;
}

std::vector<const Tensor*> MimnetModel::trainable() const {
  std::vector<const Tensor*> out{&capsule};
  for (const auto* p : meta.parameters()) out.push_back(p);
  for (const auto* p : gate.parameters()) out.push_back(p);
  return out;
}

MimnetModel init_model(DomainEmbeddings source, DomainEmbeddings target, PrototypeIndex prototypes,
                       const ModelConfig& config) {
  config.flags.validate();
  config.routing.validate();
  const std::size_t d = source.dim();
  if (d != config.dim) {
    throw DimensionError("embeddings have d=" + std::to_string(d) + " but the model expects d=" + std::to_string(config.dim));
  }
  Rng rng(mix_seed(config.seed, 0));
  MimnetModel model;
  model.source = std::move(source);
  model.target = std::move(target);
  model.capsule = Tensor::identity(d);
  model.meta = init_meta_net(d, config.meta_hidden ? config.meta_hidden : 2 * d, rng, config.meta_init_sigma);
  model.gate = init_gate(d, config.gate_hidden, rng, config.gate_init_sigma);
  model.prototypes = std::move(prototypes);
  model.routing = config.routing;
  model.flags = config.flags;
  model.validate();
  return model;
}

// ---- forward path -------------------------------------------------------

std::vector<Var> BoundParams::all() const {
  std::vector<Var> out{capsule};
  for (const auto& v : meta.all()) out.push_back(v);
  for (const auto& v : gate.all()) out.push_back(v);
  return out;
}

BoundParams bind_parameters(Tape& tape, const MimnetModel& model, bool trainable) {
  BoundParams p;
  p.capsule = tape.leaf(model.capsule, trainable);
  p.meta = MlpVars::bind(tape, model.meta, trainable);
  p.gate = MlpVars::bind(tape, model.gate, trainable);
  return p;
}

UserPath user_path(Tape& tape, const MimnetModel& model, const BoundParams& params,
                   std::span<const std::uint32_t> history, std::uint32_t source_user) {
  if (source_user >= model.source.users.rows()) throw PredictionError("unknown source user index " + std::to_string(source_user));
  if (history.empty()) {
    throw RoutingError("source user " + std::to_string(source_user) + " has no source-domain history");
  }
  const std::size_t d = model.dim();
  Tensor h({history.size(), d});
  for (std::size_t j = 0; j < history.size(); ++j)
    for (std::size_t c = 0; c < d; ++c) h.at(j, c) = model.source.items.at(history[j], c);
  Var hist = tape.constant(std::move(h));
  Var user = tape.constant(model.source.users.row(source_user));

  const RoutingConfig routing = model.effective_routing();
  UserPath path;
  path.interests = route(hist, params.capsule, initial_logits(history.size(), routing, source_user), routing);
  path.bridges = generate_bridges(path.interests, params.meta);
  path.transformed = transform_user(user, path.bridges);
  return path;
}

ItemPath item_path(Tape& tape, const MimnetModel& model, const BoundParams& params, const UserPath& user,
                   std::uint32_t target_item) {
  if (target_item >= model.target.items.rows()) throw PredictionError("unknown target item index " + std::to_string(target_item));
  const AblationFlags& flags = model.flags;
  Var item = tape.constant(model.target.items.row(target_item));
  ItemPath out;
  if (flags.target_fine && flags.target_proto) {
    Var proto = tape.constant(model.prototypes.prototype_of(target_item));
    Var fine = attend(item, user.transformed);
    Var coarse = attend(proto, user.transformed);
    if (flags.fixed_alpha || !flags.adapt) {
      out.alpha = flags.fixed_alpha ? *flags.fixed_alpha : 0.5;
      out.user = blend(fine, coarse, tape.constant(Tensor::scalar(out.alpha)));
    } else {
      Fusion f = fuse(fine, coarse, item, proto, params.gate);
      out.user = f.user;
      out.alpha = f.alpha.value()[0];
    }
  } else if (flags.target_fine) {
    out.user = attend(item, user.transformed);
    out.alpha = 1.0;
  } else {
    out.user = attend(tape.constant(model.prototypes.prototype_of(target_item)), user.transformed);
    out.alpha = 0.0;
  }
  out.prediction = dot(out.user, item);
  return out;
}

namespace {

const std::vector<std::uint32_t>& history_of(const UserHistories& histories, std::uint32_t user) {
  if (user >= histories.items.size()) throw PredictionError("no history entry for source user " + std::to_string(user));
  return histories.items[user];
}

// Example indices grouped by user, groups in first-seen order.
std::vector<std::vector<std::size_t>> group_by_user(std::span<const CrossExample> examples) {
  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto [it, inserted] = slot.try_emplace(examples[i].source_user, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

struct GroupResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
  std::vector<double> predictions;
};

GroupResult group_loss_gradient(const MimnetModel& model, const UserHistories& histories,
                                std::span<const CrossExample> examples, const std::vector<std::size_t>& members) {
  Tape tape;
  BoundParams params = bind_parameters(tape, model, true);
  const auto user = examples[members.front()].source_user;
  UserPath up = user_path(tape, model, params, history_of(histories, user), user);
  GroupResult out;
  Var total;
  for (std::size_t m = 0; m < members.size(); ++m) {
    const auto& ex = examples[members[m]];
    ItemPath ip = item_path(tape, model, params, up, ex.target_item);
    out.predictions.push_back(ip.prediction.value()[0]);
    Var err = add_scalar(scale(ip.prediction, -1.0), ex.rating);
    Var sq = mul(err, err);
    total = m == 0 ? sq : add(total, sq);
  }
  tape.backward(total);
  out.loss = total.value()[0];
  for (const auto& p : params.all()) out.grads.push_back(p.grad());
  return out;
}

}  // namespace

double predict(const MimnetModel& model, const UserHistories& histories, std::uint32_t source_user,
               std::uint32_t target_item) {
  Tape tape;
  BoundParams params = bind_parameters(tape, model, false);
  UserPath up = user_path(tape, model, params, history_of(histories, source_user), source_user);
  return item_path(tape, model, params, up, target_item).prediction.value()[0];
}

double predict(const MimnetModel& model, const CdrTask& task, const UserHistories& histories,
               std::string_view user_token, std::string_view item_token) {
  const auto user = task.source.users.find(user_token);
  if (!user) throw PredictionError("user '" + std::string(user_token) + "' has no source-domain interactions");
  const auto item = task.target_item(item_token);
  if (!item) throw PredictionError("item '" + std::string(item_token) + "' is not in the target domain");
  return predict(model, histories, *user, *item);
}

std::vector<double> predict_examples(const MimnetModel& model, const UserHistories& histories,
                                     std::span<const CrossExample> examples, Execution exec) {
  const auto groups = group_by_user(examples);
  std::vector<double> out(examples.size());
  for_each_index(groups.size(), exec, [&](std::size_t g) {
    Tape tape;
    BoundParams params = bind_parameters(tape, model, false);
    const auto user = examples[groups[g].front()].source_user;
    UserPath up = user_path(tape, model, params, history_of(histories, user), user);
    for (auto idx : groups[g]) out[idx] = item_path(tape, model, params, up, examples[idx].target_item).prediction.value()[0];
  });
  return out;
}

// ---- loss and gradients ----------------------------------------------------

LossGradient example_loss_gradient(const MimnetModel& model, const UserHistories& histories,
                                   const CrossExample& example) {
  GroupResult g = group_loss_gradient(model, histories, std::span<const CrossExample>(&example, 1), {0});
  return LossGradient{g.loss, std::move(g.grads), std::move(g.predictions)};
}

LossGradient batch_loss_gradient(const MimnetModel& model, const UserHistories& histories,
                                 std::span<const CrossExample> batch, Execution exec) {
  if (batch.empty()) throw TrainingError("empty batch");
  const auto groups = group_by_user(batch);
  std::vector<GroupResult> results(groups.size());
  for_each_index(groups.size(), exec,
                 [&](std::size_t g) { results[g] = group_loss_gradient(model, histories, batch, groups[g]); });

  LossGradient out;
  for (const auto* p : model.trainable()) out.grads.emplace_back(p->shape(), 0.0);
  out.predictions.resize(batch.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    out.loss += results[g].loss;
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
      auto dst = out.grads[i].values();
      auto src = results[g].grads[i].values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    for (std::size_t m = 0; m < groups[g].size(); ++m) out.predictions[groups[g][m]] = results[g].predictions[m];
  }
  const double n = static_cast<double>(batch.size());
  out.loss /= n;
  for (auto& g : out.grads)
    for (auto& v : g.values()) v /= n;
  return out;
}

double batch_loss(const MimnetModel& model, const UserHistories& histories, std::span<const CrossExample> batch) {
  if (batch.empty()) throw TrainingError("empty batch");
  const auto predictions = predict_examples(model, histories, batch, Execution::serial);
  double s = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double e = batch[i].rating - predictions[i];
    s += e * e;
  }
  return s / static_cast<double>(batch.size());
}

// ---- cross-domain training -----------------------------------------------

CrossDomainResult train_cross_domain(MimnetModel& model, const UserHistories& histories,
                                     const std::vector<CrossExample>& train, const CrossDomainConfig& config,
                                     const EpochCallback& on_epoch, Execution exec,
                                     const CrossBatchObserver& observer) {
  if (train.empty()) throw TrainingError("no target-domain ratings of training overlap users to learn bridges from");
  if (config.batch_size < 1) throw ConfigError("batch size must be at least 1");
  model.validate();

  AdamState state;
  AdamConfig adam;
  adam.lr = config.lr;
  Rng rng(mix_seed(config.seed, 7));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<CrossExample> batch;
  CrossDomainResult result;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0, abs_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train[order[i]]);
      if (observer) observer(batch);
      LossGradient lg = batch_loss_gradient(model, histories, batch, exec);
      loss_sum += lg.loss * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) abs_sum += std::abs(batch[i].rating - lg.predictions[i]);
      auto params = model.trainable();
      adam_step(params, lg.grads, state, adam);
    }
    const double n = static_cast<double>(train.size());
    EpochRecord rec;
    rec.stage = "cdr";
    rec.epoch = epoch;
    rec.loss = loss_sum / n;
    rec.mae = abs_sum / n;
    rec.rmse = std::sqrt(rec.loss);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (const auto* p : model.trainable()) {
    if (!p->all_finite()) throw TrainingError("cross-domain training diverged");
  }
  return result;
}

CrossDomainResult train_cross_domain(MimnetModel& model, const CdrTask& task, const ColdStartSplit& split,
                                     const UserHistories& histories, const CrossDomainConfig& config,
                                     const EpochCallback& on_epoch, Execution exec,
                                     const CrossBatchObserver& observer) {
  return train_cross_domain(model, histories, cross_domain_examples(task, split.train), config, on_epoch, exec,
                            observer);
}

// ---- end-to-end protocol -------------------------------------------------

ExperimentConfig ExperimentConfig::seeded(std::uint64_t seed) const {
  ExperimentConfig c = *this;
  c.pretrain.seed = mix_seed(seed, 101);
  c.kmeans.seed = mix_seed(seed, 102);
  c.model.seed = mix_seed(seed, 103);
  c.model.routing.seed = mix_seed(seed, 104);
  c.cross.seed = mix_seed(seed, 105);
  return c;
}

PretrainedDomains pretrain_domains(const CdrTask& task, const ColdStartSplit& split, const MfConfig& config,
                                   const EpochCallback& on_epoch, Execution exec,
                                   const RatingBatchObserver& observer) {
  PretrainedDomains out;
  auto tagged = [&](std::string stage) -> EpochCallback {
    if (!on_epoch) return {};
    return [stage, &on_epoch](const EpochRecord& r) {
      EpochRecord copy = r;
      copy.stage = stage;
      on_epoch(copy);
    };
  };
  auto watch = [&](std::string_view domain) -> MfBatchObserver {
    if (!observer) return {};
    return [domain, &observer](std::span<const IndexedRating> b) { observer(domain, b); };
  };

  MfConfig source_cfg = config;
  source_cfg.seed = mix_seed(config.seed, 1);
  auto src = train_mf(task.source.ratings, task.source.users.size(), task.source.items.size(), source_cfg,
                      tagged("pretrain-source"), exec, watch("source"));
  MfConfig target_cfg = config;
  target_cfg.seed = mix_seed(config.seed, 2);
  auto tgt = train_mf(visible_target_ratings(task, split), task.target.users.size(), task.target.items.size(),
                      target_cfg, tagged("pretrain-target"), exec, watch("target"));
  out.source = std::move(src.embeddings);
  out.source_curve = std::move(src.curve);
  out.target = std::move(tgt.embeddings);
  out.target_curve = std::move(tgt.curve);
  return out;
}

PrototypeIndex cluster_target_items(const DomainEmbeddings& target, const KMeansConfig& config, Execution exec) {
  return kmeans(target.items, config, exec).index;
}

// ---- checkpoints -----------------------------------------------------------

namespace {

void put_mlp(ModelBundle& bundle, const std::string& prefix, const Mlp& mlp) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    bundle.put(prefix + ".l" + std::to_string(i + 1), mlp.layers[i].weight);
    bundle.put(prefix + ".b" + std::to_string(i + 1), mlp.layers[i].bias);
  }
}

Mlp get_mlp(const ModelBundle& bundle, const std::string& prefix) {
  Mlp mlp;
  for (std::size_t i = 1;; ++i) {
    const Tensor* w = bundle.find(prefix + ".l" + std::to_string(i));
    if (!w) break;
    mlp.layers.push_back(DenseLayer{*w, bundle.get(prefix + ".b" + std::to_string(i))});
  }
  if (mlp.layers.empty()) throw FormatError("checkpoint has no '" + prefix + "' layers");
  return mlp;
}

std::size_t as_count(double v, const char* what) {
  if (!(v >= 0.0) || v != std::floor(v)) throw FormatError(std::string("checkpoint field ") + what + " is not a count");
  return static_cast<std::size_t>(v);
}

}  // namespace

ModelBundle embeddings_bundle(const DomainEmbeddings& source, const DomainEmbeddings& target) {
  ModelBundle b;
  b.dim = static_cast<std::uint32_t>(source.dim());
  b.put("source.users", source.users);
  b.put("source.items", source.items);
  b.put("target.users", target.users);
  b.put("target.items", target.items);
  return b;
}

PretrainedDomains embeddings_from_bundle(const ModelBundle& bundle) {
  PretrainedDomains out;
  out.source = DomainEmbeddings{bundle.get("source.users"), bundle.get("source.items")};
  out.target = DomainEmbeddings{bundle.get("target.users"), bundle.get("target.items")};
  for (const Tensor* t : {&out.source.users, &out.source.items, &out.target.users, &out.target.items}) {
    if (t->cols() != bundle.dim) throw FormatError("embedding table width differs from checkpoint d=" + std::to_string(bundle.dim));
  }
  return out;
}

ModelBundle prototypes_bundle(const PrototypeIndex& index) {
  ModelBundle b;
  b.dim = static_cast<std::uint32_t>(index.centroids.cols());
  b.put("proto.centroids", index.centroids);
  Tensor assignment({index.assignment.size(), 1});
  for (std::size_t i = 0; i < index.assignment.size(); ++i) assignment[i] = index.assignment[i];
  b.put("proto.assignment", std::move(assignment));
  return b;
}

PrototypeIndex prototypes_from_bundle(const ModelBundle& bundle) {
  PrototypeIndex index;
  index.centroids = bundle.get("proto.centroids");
  const Tensor& a = bundle.get("proto.assignment");
  index.assignment.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto c = as_count(a[i], "proto.assignment");
    if (c >= index.centroids.rows()) throw FormatError("prototype assignment points past the last centroid");
    index.assignment[i] = static_cast<std::uint32_t>(c);
  }
  if (index.centroids.cols() != bundle.dim) throw FormatError("centroid width differs from checkpoint d=" + std::to_string(bundle.dim));
  return index;
}

ModelBundle model_bundle(const MimnetModel& model) {
  ModelBundle b = embeddings_bundle(model.source, model.target);
  b.put("capsule.M", model.capsule);
  put_mlp(b, "meta", model.meta);
  put_mlp(b, "gate", model.gate);
  for (auto& entry : prototypes_bundle(model.prototypes).tensors) b.put(entry.first, std::move(entry.second));
  const auto& r = model.routing;
  b.put("config.routing", Tensor({6, 1}, {static_cast<double>(r.interests), static_cast<double>(r.iterations),
                                          r.logit_init_sigma, static_cast<double>(r.seed >> 32),
                                          static_cast<double>(r.seed & 0xffffffffULL), r.accumulate_logits ? 1.0 : 0.0}));
  const auto& f = model.flags;
  b.put("config.flags", Tensor({6, 1}, {f.multi ? 1.0 : 0.0, f.target_fine ? 1.0 : 0.0, f.target_proto ? 1.0 : 0.0,
                                        f.adapt ? 1.0 : 0.0, f.fixed_alpha ? 1.0 : 0.0, f.fixed_alpha.value_or(0.0)}));
  return b;
}

MimnetModel model_from_bundle(const ModelBundle& bundle) {
  MimnetModel model;
  auto emb = embeddings_from_bundle(bundle);
  model.source = std::move(emb.source);
  model.target = std::move(emb.target);
  model.capsule = bundle.get("capsule.M");
  model.meta = get_mlp(bundle, "meta");
  model.gate = get_mlp(bundle, "gate");
  model.prototypes = prototypes_from_bundle(bundle);
  const Tensor& r = bundle.get("config.routing");
  const Tensor& f = bundle.get("config.flags");
  if (r.size() != 6 || f.size() != 6) throw FormatError("checkpoint config tensors have unexpected sizes");
  model.routing.interests = as_count(r[0], "routing.interests");
  model.routing.iterations = as_count(r[1], "routing.iterations");
  model.routing.logit_init_sigma = r[2];
  model.routing.seed = (static_cast<std::uint64_t>(as_count(r[3], "routing.seed")) << 32) |
                       static_cast<std::uint64_t>(as_count(r[4], "routing.seed"));
  model.routing.accumulate_logits = r[5] != 0.0;
  model.flags.multi = f[0] != 0.0;
  model.flags.target_fine = f[1] != 0.0;
  model.flags.target_proto = f[2] != 0.0;
  model.flags.adapt = f[3] != 0.0;
  if (f[4] != 0.0) model.flags.fixed_alpha = f[5];
  try {
    model.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint holds an inconsistent model: ") + e.what());
  }
  return model;
}

}  // namespace mimnet
