#include "mimnet/pretrain.hpp"

#include <chrono>
#include <cmath>

#include "mimnet/adam.hpp"
#include "mimnet/autodiff.hpp"
#include "mimnet/error.hpp"
#include "mimnet/random.hpp"

namespace mimnet {

namespace {

Tensor table_row(const Tensor& table, std::size_t r) {
  const std::size_t d = table.cols();
  Tensor out({d, 1});
  for (std::size_t c = 0; c < d; ++c) out[c] = table.at(r, c);
  return out;
}

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
}

}  // namespace

double predict_mf(const Tensor& user, const Tensor& item) {
  if (user.size() != item.size()) {
    throw DimensionError("predict_mf: user embedding " + shape_to_string(user.shape()) + " vs item embedding " +
                         shape_to_string(item.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < user.size(); ++i) s += user[i] * item[i];
  return s;
}

MfExampleGrad mf_example_gradient(const Tensor& user, const Tensor& item, double rating, double l2) {
  Tape tape;
  Var u = tape.parameter(user);
  Var v = tape.parameter(item);
  Var pred = dot(u, v);
  Var err = add_scalar(scale(pred, -1.0), rating);
  Var loss = mul(err, err);
  if (l2 > 0.0) loss = add(loss, scale(add(dot(u, u), dot(v, v)), l2));
  tape.backward(loss);
  return MfExampleGrad{loss.value()[0], pred.value()[0], u.grad(), v.grad()};
}

MfBatchGrad mf_batch_gradient(const DomainEmbeddings& tables, const std::vector<IndexedRating>& ratings,
                              std::span<const std::size_t> batch, double l2, Execution exec) {
  std::vector<MfExampleGrad> per_example(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) {
    const auto& r = ratings[batch[i]];
    per_example[i] = mf_example_gradient(table_row(tables.users, r.user), table_row(tables.items, r.item), r.rating, l2);
  });
  MfBatchGrad out{Tensor(tables.users.shape()), Tensor(tables.items.shape())};
  const std::size_t d = tables.dim();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = ratings[batch[i]];
    const auto& g = per_example[i];
    for (std::size_t c = 0; c < d; ++c) {
      out.users.at(r.user, c) += g.user_grad[c];
      out.items.at(r.item, c) += g.item_grad[c];
    }
    out.loss_sum += g.loss;
    out.abs_err_sum += std::abs(r.rating - g.prediction);
    out.sq_err_sum += (r.rating - g.prediction) * (r.rating - g.prediction);
  }
  return out;
}

MfResult train_mf(const std::vector<IndexedRating>& ratings, std::size_t n_users, std::size_t n_items,
                  const MfConfig& config, const EpochCallback& on_epoch, Execution exec,
                  const MfBatchObserver& observer) {
  if (ratings.empty()) throw TrainingError("matrix factorization needs at least one rating");
  if (config.dim < 1) throw ConfigError("embedding dimension must be at least 1");
  if (config.batch_size < 1) throw ConfigError("batch size must be at least 1");
  for (const auto& r : ratings) {
    if (r.user >= n_users || r.item >= n_items) throw TrainingError("rating references an index outside the tables");
  }

  Rng init_rng(mix_seed(config.seed, 1));
  MfResult result;
  auto& emb = result.embeddings;
  emb.users = normal_tensor({n_users, config.dim}, config.init_sigma, init_rng);
  emb.items = normal_tensor({n_items, config.dim}, config.init_sigma, init_rng);

  AdamState state;
  AdamConfig adam;
  adam.lr = config.lr;
  std::vector<std::size_t> order(ratings.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(mix_seed(config.seed, 2));

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0.0, abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::span<const std::size_t> batch(order.data() + begin, end - begin);
      if (observer) {
        std::vector<IndexedRating> materialized;
        materialized.reserve(batch.size());
        for (auto idx : batch) materialized.push_back(ratings[idx]);
        observer(materialized);
      }
      MfBatchGrad g = mf_batch_gradient(emb, ratings, batch, config.l2, exec);
      const double n = static_cast<double>(batch.size());
      for (auto& v : g.users.values()) v /= n;
      for (auto& v : g.items.values()) v /= n;
      loss_sum += g.loss_sum;
      abs_sum += g.abs_err_sum;
      sq_sum += g.sq_err_sum;
      Tensor* params[] = {&emb.users, &emb.items};
      const Tensor grads[] = {std::move(g.users), std::move(g.items)};
      adam_step(params, grads, state, adam);
    }
    const double n = static_cast<double>(ratings.size());
    EpochRecord rec;
    rec.stage = "pretrain";
    rec.epoch = epoch;
    rec.loss = loss_sum / n;
    rec.mae = abs_sum / n;
    rec.rmse = std::sqrt(sq_sum / n);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!emb.users.all_finite() || !emb.items.all_finite()) throw TrainingError("matrix factorization diverged");
  return result;
}

}  // namespace mimnet
