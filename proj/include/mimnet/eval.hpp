#pragma once

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mimnet/dataio.hpp"
#include "mimnet/parallel.hpp"
#include "mimnet/pipeline.hpp"

namespace mimnet {

struct ErrorSummary {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

/// MAE and RMSE of `predicted` against `truth`; both must have equal, non-zero length.
ErrorSummary summarize_errors(std::span<const double> truth, std::span<const double> predicted);

/// Source-interaction buckets: (0,5], [6,10], [11,15], [16,20] and an overflow (20,inf).
struct BucketBounds {
  const char* label;
  std::size_t lo;
  std::size_t hi;  // inclusive; SIZE_MAX for the overflow bucket
  bool overflow;
};

inline constexpr BucketBounds kBuckets[] = {
    {"(0,5]", 1, 5, false},   {"[6,10]", 6, 10, false},   {"[11,15]", 11, 15, false},
    {"[16,20]", 16, 20, false}, {"(20,inf)", 21, SIZE_MAX, true},
};
inline constexpr std::size_t kBucketCount = std::size(kBuckets);

/// Bucket index for a user with `interactions` >= 1 source interactions.
std::size_t bucket_of(std::size_t interactions);

struct BucketStats {
  std::string label;
  bool overflow = false;
  std::size_t users = 0;
  std::size_t count = 0;
  std::optional<double> mae;  // absent for empty buckets
};

struct EvalReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
  std::size_t users = 0;
  std::size_t skipped_users = 0;
  bool clipped = false;
  std::vector<BucketStats> buckets;
};

/// Scores every held-out (test user, target item) pair. Predictions are
/// clipped to the rating range only when `clip` is set.
EvalReport score(const MimnetModel& model, const CdrTask& task, const ColdStartSplit& split,
                 const UserHistories& histories, bool clip = false, Execution exec = Execution::parallel);

std::vector<BucketStats> bucket_report(const MimnetModel& model, const CdrTask& task, const ColdStartSplit& split,
                                       const UserHistories& histories, bool clip = false,
                                       Execution exec = Execution::parallel);

/// `key: value` lines.
std::string format_report(const EvalReport& report);
/// Tab-separated bucket table with a header row.
std::string format_buckets_tsv(const EvalReport& report);

// ---- multi-run experiments ---------------------------------------------------

/// Pretrained embeddings and prototypes; independent of K and the ablation flags.
struct StageOne {
  PretrainedDomains domains;
  PrototypeIndex prototypes;
};

StageOne run_stage_one(const CdrTask& task, const ColdStartSplit& split, const ExperimentConfig& config,
                       const EpochCallback& on_epoch = {}, Execution exec = Execution::parallel);

struct StageTwo {
  MimnetModel model;
  CrossDomainResult training;
  EvalReport report;
};

StageTwo run_stage_two(const CdrTask& task, const ColdStartSplit& split, const UserHistories& histories,
                       const StageOne& stage_one, const ExperimentConfig& config, const EpochCallback& on_epoch = {},
                       Execution exec = Execution::parallel);

struct VariantSummary {
  std::string label;
  std::vector<double> maes;  // one per seed
  std::vector<double> rmses;
  std::vector<CrossDomainResult> training;
  double mean_mae = 0.0;
  double std_mae = 0.0;  // sample standard deviation, 0 for one run
};

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

inline const std::vector<std::size_t> kDefaultInterestGrid{1, 4, 7, 10, 13, 16};

/// Fresh model per (K, seed); stage one is shared across K for each seed.
std::vector<VariantSummary> sweep_interests(const CdrTask& task, const ColdStartSplit& split,
                                            const std::vector<std::size_t>& interest_values,
                                            const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                            Execution exec = Execution::parallel);

/// The full model followed by each single-component ablation.
std::vector<AblationFlags> standard_ablations();

/// Fresh model per (variant, seed); stage one is shared across variants for each seed.
std::vector<VariantSummary> compare_variants(const CdrTask& task, const ColdStartSplit& split,
                                             const std::vector<AblationFlags>& variants,
                                             const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                             Execution exec = Execution::parallel);

/// Columns: label, runs, mean_mae, std_mae, then one mae column per seed.
std::string format_variants_tsv(const std::vector<VariantSummary>& rows, const std::string& key_name);

}  // namespace mimnet
