#include <doctest.h>

#include "mimnet/error.hpp"
#include "mimnet/pretrain.hpp"
#include "mimnet/synthetic.hpp"
#include "support/oracles.hpp"

using namespace mimnet;
using namespace mimnet::testing;

TEST_CASE("predict_mf examples") {
  CHECK(predict_mf(Tensor::zeros(3, 1), Tensor::column({1, 2, 3})) == 0.0);
  CHECK(predict_mf(Tensor::column({1, 0, 0}), Tensor::column({1, 0, 0})) == 1.0);
  CHECK(predict_mf(Tensor::column({1, 2}), Tensor::column({3, -1})) == 1.0);
  CHECK_THROWS_AS(predict_mf(Tensor::column({1, 2}), Tensor::column({1, 2, 3})), DimensionError);
}

TEST_CASE("a single rating is fitted by a 1-d factorization") {
  MfConfig cfg;
  cfg.dim = 1;
  cfg.epochs = 3000;
  cfg.seed = 3;
  const auto result = train_mf({IndexedRating{0, 0, 4.0}}, 1, 1, cfg);
  const double fit = predict_mf(result.embeddings.users.row(0), result.embeddings.items.row(0));
  CHECK(std::abs(fit - 4.0) < 0.01);
}

TEST_CASE("a constant rating matrix is fitted by a rank-1 factorization") {
  std::vector<IndexedRating> ratings;
  for (std::uint32_t u = 0; u < 20; ++u)
    for (std::uint32_t i = 0; i < 15; ++i) ratings.push_back({u, i, 3.0});
  MfConfig cfg;
  cfg.dim = 1;
  cfg.epochs = 400;
  cfg.batch_size = 64;
  cfg.seed = 8;
  const auto result = train_mf(ratings, 20, 15, cfg);
  double mse = 0.0;
  for (const auto& r : ratings) {
    const double e = r.rating - predict_mf(result.embeddings.users.row(r.user), result.embeddings.items.row(r.item));
    mse += e * e;
  }
  mse /= static_cast<double>(ratings.size());
  CHECK(mse < 0.01);
}

TEST_CASE("training loss is non-increasing in at least 90% of epoch pairs on synthetic data") {
  const auto data = generate_synthetic(SyntheticConfig{});
  const auto task = build_task(data.source, data.target);
  for (const DomainData* domain : {&task.source, &task.target}) {
    MfConfig cfg;
    cfg.seed = 5;
    const auto result = train_mf(domain->ratings, domain->users.size(), domain->items.size(), cfg);
    REQUIRE(result.curve.size() == 50);
    std::size_t ok = 0;
    for (std::size_t e = 1; e < result.curve.size(); ++e) ok += result.curve[e].loss <= result.curve[e - 1].loss;
    const double fraction = static_cast<double>(ok) / static_cast<double>(result.curve.size() - 1);
    CAPTURE(fraction);
    CHECK(fraction >= 0.9);
    for (const auto& rec : result.curve) CHECK(rec.rmse >= rec.mae);
  }
}

TEST_CASE("per-example gradient matches the closed form and central differences") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor u = random_tensor({6, 1}, rng), v = random_tensor({6, 1}, rng);
    const double r = 1.0 + 4.0 * static_cast<double>(rng() % 1000) / 1000.0;
    const auto g = mf_example_gradient(u, v, r);
    const double residual = predict_mf(u, v) - r;
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(g.user_grad[i] == doctest::Approx(2.0 * residual * v[i]).epsilon(1e-12));
      CHECK(g.item_grad[i] == doctest::Approx(2.0 * residual * u[i]).epsilon(1e-12));
    }
    auto report = finite_difference_check({&u, &v}, [&] {
      const double e = r - predict_mf(u, v);
      return e * e;
    }, {g.user_grad, g.item_grad});
    INFO(report.worst);
    CHECK(report.max_rel_err < kFdTolerance);
  }
}

TEST_CASE("batch gradients agree between serial and parallel execution") {
  const auto data = generate_synthetic(SyntheticConfig{});
  const auto task = build_task(data.source, data.target);
  Rng rng(2);
  DomainEmbeddings tables{random_tensor({task.source.users.size(), 10}, rng, 0.1),
                          random_tensor({task.source.items.size(), 10}, rng, 0.1)};
  std::vector<std::size_t> batch(task.source.ratings.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = (i * 7919) % batch.size();
  const auto serial = mf_batch_gradient(tables, task.source.ratings, batch, 0.0, Execution::serial);
  const auto parallel = mf_batch_gradient(tables, task.source.ratings, batch, 0.0, Execution::parallel);
  CHECK(bit_identical(serial.users, parallel.users));
  CHECK(bit_identical(serial.items, parallel.items));
  CHECK(serial.loss_sum == parallel.loss_sum);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const auto data = generate_synthetic(SyntheticConfig{});
  const auto task = build_task(data.source, data.target);
  MfConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 99;
  const auto a = train_mf(task.source.ratings, task.source.users.size(), task.source.items.size(), cfg,
                          {}, Execution::parallel);
  const auto b = train_mf(task.source.ratings, task.source.users.size(), task.source.items.size(), cfg,
                          {}, Execution::serial);
  CHECK(bit_identical(a.embeddings.users, b.embeddings.users));
  CHECK(bit_identical(a.embeddings.items, b.embeddings.items));
  for (std::size_t e = 0; e < a.curve.size(); ++e) CHECK(a.curve[e].loss == b.curve[e].loss);
}

TEST_CASE("the observer sees every rating once per epoch") {
  std::vector<IndexedRating> ratings;
  for (std::uint32_t i = 0; i < 50; ++i) ratings.push_back({i % 7, i % 11, 1.0 + (i % 5)});
  MfConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  std::size_t seen = 0, batches = 0;
  train_mf(ratings, 7, 11, cfg, {}, Execution::serial, [&](std::span<const IndexedRating> b) {
    seen += b.size();
    ++batches;
  });
  CHECK(seen == 150);
  CHECK(batches == 12);
}

TEST_CASE("training errors") {
  CHECK_THROWS_AS(train_mf({}, 1, 1, MfConfig{}), TrainingError);
  CHECK_THROWS_AS(train_mf({IndexedRating{3, 0, 2.0}}, 1, 1, MfConfig{}), TrainingError);
  MfConfig zero;
  zero.dim = 0;
  CHECK_THROWS_AS(train_mf({IndexedRating{0, 0, 2.0}}, 1, 1, zero), ConfigError);
}
