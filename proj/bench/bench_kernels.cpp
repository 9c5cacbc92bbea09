// Serial reference against OpenMP execution for the parallel kernels.
// Arg 0 selects the execution mode: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include "mimnet/dataio.hpp"
#include "mimnet/pipeline.hpp"
#include "mimnet/pretrain.hpp"
#include "mimnet/random.hpp"
#include "mimnet/synthetic.hpp"
#include "mimnet/targetguide.hpp"

using namespace mimnet;

namespace {

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

struct Fixture {
  CdrTask task;
  ColdStartSplit split;
  UserHistories histories;
  MimnetModel model;
  std::vector<CrossExample> train;
  std::vector<CrossExample> test;

  static const Fixture& get() {
    static const Fixture f = make();
    return f;
  }

 private:
  static Fixture make() {
    SyntheticConfig sc;
    sc.n_users = 1000;
    sc.n_items_per_domain = 1000;
    const auto data = generate_synthetic(sc);
    Fixture f;
    f.task = build_task(data.source, data.target);
    f.split = split_cold_start(f.task, 0.2, 1);
    f.histories = build_histories(f.task.source);
    Rng rng(7);
    DomainEmbeddings source{normal_tensor({f.task.source.users.size(), 10}, 0.3, rng),
                            normal_tensor({f.task.source.items.size(), 10}, 0.3, rng)};
    DomainEmbeddings target{normal_tensor({f.task.target.users.size(), 10}, 0.3, rng),
                            normal_tensor({f.task.target.items.size(), 10}, 0.3, rng)};
    KMeansConfig kc;
    kc.restarts = 1;
    auto index = cluster_target_items(target, kc);
    f.model = init_model(std::move(source), std::move(target), std::move(index), ModelConfig{});
    f.train = cross_domain_examples(f.task, f.split.train);
    f.test = cross_domain_examples(f.task, f.split.test);
    return f;
  }
};

void BM_MfBatchGradient(benchmark::State& state) {
  const auto& f = Fixture::get();
  const auto& ratings = f.task.source.ratings;
  std::vector<std::size_t> batch(std::min<std::size_t>(4096, ratings.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
  for (auto _ : state) {
    auto g = mf_batch_gradient(f.model.source, ratings, batch, 0.0, mode(state));
    benchmark::DoNotOptimize(g.loss_sum);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}

void BM_CrossDomainBatchGradient(benchmark::State& state) {
  const auto& f = Fixture::get();
  const std::span<const CrossExample> batch(f.train.data(), std::min<std::size_t>(512, f.train.size()));
  for (auto _ : state) {
    auto g = batch_loss_gradient(f.model, f.histories, batch, mode(state));
    benchmark::DoNotOptimize(g.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}

void BM_KMeansAssignment(benchmark::State& state) {
  const auto& f = Fixture::get();
  std::vector<std::uint32_t> assignment;
  for (auto _ : state) {
    auto d = assign_nearest(f.model.target.items, f.model.prototypes.centroids, assignment, mode(state));
    benchmark::DoNotOptimize(d.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.model.target.items.rows()));
}

void BM_Scoring(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state) {
    auto p = predict_examples(f.model, f.histories, f.test, mode(state));
    benchmark::DoNotOptimize(p.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.test.size()));
}

}  // namespace

BENCHMARK(BM_MfBatchGradient)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CrossDomainBatchGradient)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KMeansAssignment)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Scoring)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
