#include "mimnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "mimnet/error.hpp"
#include "mimnet/text.hpp"

namespace mimnet {

ErrorSummary summarize_errors(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("summarize_errors: " + std::to_string(truth.size()) + " ratings vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  if (truth.empty()) throw ContractError("summarize_errors: nothing to score");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - predicted[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(truth.size());
  return ErrorSummary{abs_sum / n, std::sqrt(sq_sum / n), truth.size()};
}

std::size_t bucket_of(std::size_t interactions) {
  if (interactions == 0) throw ContractError("bucket_of: user has no source interactions");
  for (std::size_t b = 0; b < kBucketCount; ++b) {
    if (interactions >= kBuckets[b].lo && interactions <= kBuckets[b].hi) return b;
  }
  return kBucketCount - 1;
}

EvalReport score(const MimnetModel& model, const CdrTask& task, const ColdStartSplit& split,
                 const UserHistories& histories, bool clip, Execution exec) {
  if (split.test.empty()) throw SplitError("split has no test users to score");
  const auto examples = cross_domain_examples(task, split.test);

  EvalReport report;
  report.clipped = clip;
  std::unordered_map<std::uint32_t, std::size_t> per_user;
  for (const auto& ex : examples) ++per_user[ex.source_user];
  for (auto idx : split.test) {
    if (per_user.contains(task.overlap[idx].source_user)) ++report.users;
    else ++report.skipped_users;
  }
  if (examples.empty()) throw PredictionError("no test user has held-out target ratings");

  auto predictions = predict_examples(model, histories, examples, exec);
  if (clip) {
    for (auto& p : predictions) p = std::clamp(p, kMinRating, kMaxRating);
  }
  std::vector<double> truth(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) truth[i] = examples[i].rating;
  const auto overall = summarize_errors(truth, predictions);
  report.mae = overall.mae;
  report.rmse = overall.rmse;
  report.count = overall.count;

  std::vector<double> abs_sum(kBucketCount, 0.0);
  report.buckets.resize(kBucketCount);
  for (std::size_t b = 0; b < kBucketCount; ++b) {
    report.buckets[b].label = kBuckets[b].label;
    report.buckets[b].overflow = kBuckets[b].overflow;
  }
  for (const auto& [user, n] : per_user) ++report.buckets[bucket_of(histories.interaction_count[user])].users;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto b = bucket_of(histories.interaction_count[examples[i].source_user]);
    ++report.buckets[b].count;
    abs_sum[b] += std::abs(truth[i] - predictions[i]);
  }
  for (std::size_t b = 0; b < kBucketCount; ++b) {
    if (report.buckets[b].count) report.buckets[b].mae = abs_sum[b] / static_cast<double>(report.buckets[b].count);
  }
  return report;
}

std::vector<BucketStats> bucket_report(const MimnetModel& model, const CdrTask& task, const ColdStartSplit& split,
                                       const UserHistories& histories, bool clip, Execution exec) {
  return score(model, task, split, histories, clip, exec).buckets;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "mae: " << format_number(report.mae) << '\n'
      << "rmse: " << format_number(report.rmse) << '\n'
      << "count: " << report.count << '\n'
      << "users: " << report.users << '\n'
      << "skipped_users: " << report.skipped_users << '\n'
      << "clipped: " << (report.clipped ? "true" : "false") << '\n';
  for (const auto& b : report.buckets) {
    out << "bucket " << b.label << (b.overflow ? " (overflow)" : "") << ": users=" << b.users << " count=" << b.count;
    if (b.mae) out << " mae=" << format_number(*b.mae);
    out << '\n';
  }
  return out.str();
}

std::string format_buckets_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "bucket\toverflow\tusers\tcount\tmae\n";
  for (const auto& b : report.buckets) {
    out << b.label << '\t' << (b.overflow ? 1 : 0) << '\t' << b.users << '\t' << b.count << '\t'
        << (b.mae ? format_number(*b.mae) : "") << '\n';
  }
  return out.str();
}

StageOne run_stage_one(const CdrTask& task, const ColdStartSplit& split, const ExperimentConfig& config,
                       const EpochCallback& on_epoch, Execution exec) {
  StageOne out;
  out.domains = pretrain_domains(task, split, config.pretrain, on_epoch, exec);
  out.prototypes = cluster_target_items(out.domains.target, config.kmeans, exec);
  return out;
}

StageTwo run_stage_two(const CdrTask& task, const ColdStartSplit& split, const UserHistories& histories,
                       const StageOne& stage_one, const ExperimentConfig& config, const EpochCallback& on_epoch,
                       Execution exec) {
  ModelConfig mc = config.model;
  mc.dim = stage_one.domains.source.dim();
  StageTwo out{init_model(stage_one.domains.source, stage_one.domains.target, stage_one.prototypes, mc), {}, {}};
  out.training = train_cross_domain(out.model, task, split, histories, config.cross, on_epoch, exec);
  out.report = score(out.model, task, split, histories, config.clip_eval, exec);
  return out;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean_std: no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

namespace {

// Runs `configs.size()` variants for every seed, sharing stage one within a seed.
std::vector<VariantSummary> run_grid(const CdrTask& task, const ColdStartSplit& split,
                                     const std::vector<std::pair<std::string, ExperimentConfig>>& variants,
                                     const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                     Execution exec) {
  if (variants.empty()) throw ConfigError("no variants to run");
  if (seeds.empty()) throw ConfigError("no seeds given");
  const auto histories = build_histories(task.source, base.max_history);
  std::vector<VariantSummary> rows(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) rows[v].label = variants[v].first;
  for (auto seed : seeds) {
    const StageOne stage_one = run_stage_one(task, split, base.seeded(seed), {}, exec);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      auto result = run_stage_two(task, split, histories, stage_one, variants[v].second.seeded(seed), {}, exec);
      rows[v].maes.push_back(result.report.mae);
      rows[v].rmses.push_back(result.report.rmse);
      rows[v].training.push_back(std::move(result.training));
    }
  }
  for (auto& row : rows) std::tie(row.mean_mae, row.std_mae) = mean_std(row.maes);
  return rows;
}

}  // namespace

std::vector<VariantSummary> sweep_interests(const CdrTask& task, const ColdStartSplit& split,
                                            const std::vector<std::size_t>& interest_values,
                                            const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                            Execution exec) {
  if (interest_values.empty()) throw ConfigError("sweep needs at least one K value");
  std::vector<std::pair<std::string, ExperimentConfig>> variants;
  for (auto k : interest_values) {
    ExperimentConfig c = base;
    c.model.routing.interests = k;
    c.model.flags.multi = true;
    c.model.routing.validate();
    variants.emplace_back(std::to_string(k), c);
  }
  return run_grid(task, split, variants, seeds, base, exec);
}

std::vector<AblationFlags> standard_ablations() {
  std::vector<AblationFlags> out(5);
  out[1].multi = false;
  out[2].target_fine = false;
  out[3].target_proto = false;
  out[4].adapt = false;
  return out;
}

std::vector<VariantSummary> compare_variants(const CdrTask& task, const ColdStartSplit& split,
                                             const std::vector<AblationFlags>& flags,
                                             const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                             Execution exec) {
  std::vector<std::pair<std::string, ExperimentConfig>> variants;
  for (const auto& f : flags) {
    f.validate();
    ExperimentConfig c = base;
    c.model.flags = f;
    variants.emplace_back(f.label(), c);
  }
  return run_grid(task, split, variants, seeds, base, exec);
}

std::string format_variants_tsv(const std::vector<VariantSummary>& rows, const std::string& key_name) {
  std::ostringstream out;
  out << key_name << "\truns\tmean_mae\tstd_mae";
  const std::size_t runs = rows.empty() ? 0 : rows.front().maes.size();
  for (std::size_t s = 0; s < runs; ++s) out << "\tmae_" << s;
  out << '\n';
  for (const auto& row : rows) {
    out << row.label << '\t' << row.maes.size() << '\t' << format_number(row.mean_mae) << '\t'
        << format_number(row.std_mae);
    for (double m : row.maes) out << '\t' << format_number(m);
    out << '\n';
  }
  return out.str();
}

}  // namespace mimnet
