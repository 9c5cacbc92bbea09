// mimnet: staged command-line driver (synth, split, pretrain, cluster, train, eval, sweep, ablate).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "mimnet/checkpoint.hpp"
#include "mimnet/error.hpp"
#include "mimnet/eval.hpp"
#include "mimnet/pipeline.hpp"
#include "mimnet/run_config.hpp"
#include "mimnet/synthetic.hpp"
#include "mimnet/text.hpp"
#include "mimnet/training_log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mimnet;

namespace {

/// A missing input produced by an earlier stage.
class StageError : public Error {
 public:
  using Error::Error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("error while writing " + path.string());
}

// SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_sha1(const fs::path& path) {
  const std::string content = read_file(path);
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha1 failed for " + path.string());
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json seeds_json(const ExperimentConfig& e) {
  return json{{"pretrain", e.pretrain.seed},
              {"kmeans", e.kmeans.seed},
              {"model_init", e.model.seed},
              {"routing", e.model.routing.seed},
              {"cross_domain", e.cross.seed}};
}

/// Bookkeeping shared by all stages: inputs, outputs, timing, manifest.
class Stage {
 public:
  Stage(std::string name, const RunConfig& cfg) : name_(std::move(name)), cfg_(cfg), start_(Clock::now()) {
    fs::create_directories(cfg_.out);
  }

  fs::path out(const std::string& file) const { return fs::path(cfg_.out) / file; }

  /// Records an input, raising a stage-specific error if it does not exist.
  fs::path require(const fs::path& path, const std::string& what, const std::string& producer) {
    if (!fs::is_regular_file(path)) {
      std::string msg = name_ + ": missing " + what + " '" + path.string() + "'";
      if (!producer.empty()) msg += "; run `mimnet " + producer + "` first";
      throw StageError(msg);
    }
    inputs_[path.string()] = git_blob_sha1(path);
    return path;
  }

  void produced(const fs::path& path) { outputs_.push_back(path.string()); }

  EpochCallback logger() {
    log_.open(out("metrics.log"), std::ios::app);
    return [this](const EpochRecord& r) {
      const auto line = format_epoch_record(r);
      log_ << line << '\n';
      log_.flush();
      std::cerr << line << '\n';
    };
  }

  void finish(const json& seeds, const json& extra = json::object()) {
    json config;
    to_json(config, cfg_);
    write_file(out("config.json"), config.dump(2) + "\n");
    json manifest{{"stage", name_},
                  {"config", config},
                  {"seeds", seeds},
                  {"inputs", inputs_},
                  {"outputs", outputs_},
                  {"wall_ms", std::chrono::duration<double, std::milli>(Clock::now() - start_).count()},
                  {"finished_at", utc_now()}};
    for (auto& [k, v] : extra.items()) manifest[k] = v;
    write_file(out(name_ + ".manifest.json"), manifest.dump(2) + "\n");
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::string name_;
  const RunConfig& cfg_;
  Clock::time_point start_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
  std::ofstream log_;
};

fs::path source_path(const RunConfig& c) { return c.source.empty() ? fs::path(c.out) / "source.csv" : fs::path(c.source); }
fs::path target_path(const RunConfig& c) { return c.target.empty() ? fs::path(c.out) / "target.csv" : fs::path(c.target); }

CdrTask load_task(Stage& stage, const RunConfig& cfg) {
  const auto src = parse_ratings(stage.require(source_path(cfg), "source ratings", "synth"));
  const auto tgt = parse_ratings(stage.require(target_path(cfg), "target ratings", "synth"));
  for (const auto* p : {&src, &tgt}) {
    const auto& s = p->stats;
    if (s.malformed || s.out_of_range || s.duplicates) {
      std::cerr << "ratings: " << s.accepted << " accepted, " << s.malformed << " malformed, " << s.out_of_range
                << " out of range, " << s.duplicates << " duplicates\n";
    }
  }
  return build_task(src.triples, tgt.triples);
}

ColdStartSplit load_split(Stage& stage, const CdrTask& task) {
  return read_split(stage.require(stage.out("split.txt"), "split file", "split"), task);
}

json report_json(const EvalReport& r) {
  json buckets = json::array();
  for (const auto& b : r.buckets) {
    json entry{{"range", b.label}, {"overflow", b.overflow}, {"users", b.users}, {"count", b.count}};
    if (b.mae) entry["mae"] = *b.mae;
    buckets.push_back(entry);
  }
  return json{{"mae", r.mae},     {"rmse", r.rmse},   {"count", r.count},      {"users", r.users},
              {"skipped_users", r.skipped_users}, {"clipped", r.clipped}, {"buckets", buckets}};
}

// ---- stages ------------------------------------------------------------------

void cmd_synth(const RunConfig& cfg) {
  Stage stage("synth", cfg);
  SyntheticConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const auto data = generate_synthetic(sc);
  write_ratings(stage.out("source.csv"), data.source);
  write_ratings(stage.out("target.csv"), data.target);
  json truth{{"user_mixture", data.truth.user_mixture},
             {"source_item_cluster", data.truth.source_item_cluster},
             {"target_item_cluster", data.truth.target_item_cluster}};
  write_file(stage.out("truth.json"), truth.dump() + "\n");
  for (const char* f : {"source.csv", "target.csv", "truth.json"}) stage.produced(stage.out(f));
  stage.finish(json{{"synth", sc.seed}});
  std::cout << "synth: " << data.source.size() << " source and " << data.target.size() << " target ratings\n";
}

void cmd_split(const RunConfig& cfg) {
  Stage stage("split", cfg);
  const auto task = load_task(stage, cfg);
  const auto split = split_cold_start(task, cfg.beta, cfg.seed);
  write_split(stage.out("split.txt"), task, split);
  stage.produced(stage.out("split.txt"));
  stage.finish(json{{"split", cfg.seed}}, json{{"overlap_users", task.overlap.size()}, {"test_users", split.test.size()}});
  std::cout << "split: " << split.test.size() << " of " << task.overlap.size() << " overlapping users held out\n";
}

void cmd_pretrain(const RunConfig& cfg) {
  Stage stage("pretrain", cfg);
  const auto task = load_task(stage, cfg);
  const auto split = load_split(stage, task);
  const auto exp = cfg.experiment();
  const auto domains = pretrain_domains(task, split, exp.pretrain, stage.logger());
  save_checkpoint(embeddings_bundle(domains.source, domains.target), stage.out("pretrain.ckpt"));
  stage.produced(stage.out("pretrain.ckpt"));
  stage.finish(seeds_json(exp));
  std::cout << "pretrain: final source loss " << format_number(domains.source_curve.back().loss) << ", target loss "
            << format_number(domains.target_curve.back().loss) << '\n';
}

void cmd_cluster(const RunConfig& cfg) {
  Stage stage("cluster", cfg);
  const auto bundle =
      load_checkpoint(stage.require(stage.out("pretrain.ckpt"), "pretrain checkpoint", "pretrain"), cfg.dim);
  const auto domains = embeddings_from_bundle(bundle);
  const auto exp = cfg.experiment();
  const auto result = kmeans(domains.target.items, exp.kmeans);
  save_checkpoint(prototypes_bundle(result.index), stage.out("prototypes.ckpt"));
  stage.produced(stage.out("prototypes.ckpt"));
  stage.finish(seeds_json(exp), json{{"inertia", result.inertia}, {"best_restart", result.best_restart}});
  std::cout << "cluster: " << result.index.size() << " prototypes, inertia " << format_number(result.inertia) << '\n';
}

void cmd_train(const RunConfig& cfg) {
  Stage stage("train", cfg);
  const auto exp = cfg.experiment();  // rejects invalid ablation sets before any work
  const auto task = load_task(stage, cfg);
  const auto split = load_split(stage, task);
  auto domains = embeddings_from_bundle(
      load_checkpoint(stage.require(stage.out("pretrain.ckpt"), "pretrain checkpoint", "pretrain"), cfg.dim));
  auto protos = prototypes_from_bundle(
      load_checkpoint(stage.require(stage.out("prototypes.ckpt"), "prototype index", "cluster"), cfg.dim));
  const auto histories = build_histories(task.source, exp.max_history);
  auto model = init_model(std::move(domains.source), std::move(domains.target), std::move(protos), exp.model);
  const auto result = train_cross_domain(model, task, split, histories, exp.cross, stage.logger());
  save_checkpoint(model_bundle(model), stage.out("model.ckpt"));
  stage.produced(stage.out("model.ckpt"));
  stage.finish(seeds_json(exp), json{{"ablation", model.flags.label()}});
  if (!result.curve.empty()) std::cout << "train: final loss " << format_number(result.curve.back().loss) << '\n';
}

void cmd_eval(const RunConfig& cfg) {
  Stage stage("eval", cfg);
  const auto task = load_task(stage, cfg);
  const auto split = load_split(stage, task);
  const auto model =
      model_from_bundle(load_checkpoint(stage.require(stage.out("model.ckpt"), "trained model", "train"), cfg.dim));
  const auto histories = build_histories(task.source, cfg.max_history);
  const auto report = score(model, task, split, histories, cfg.clip_eval);
  write_file(stage.out("report.txt"), "ablation: " + model.flags.label() + "\n" + format_report(report));
  write_file(stage.out("buckets.tsv"), format_buckets_tsv(report));
  stage.produced(stage.out("report.txt"));
  stage.produced(stage.out("buckets.tsv"));
  stage.finish(json::object(), json{{"report", report_json(report)}});
  std::cout << format_report(report);
}

void cmd_sweep(const RunConfig& cfg) {
  Stage stage("sweep", cfg);
  const auto task = load_task(stage, cfg);
  const auto split = load_split(stage, task);
  const auto rows = sweep_interests(task, split, cfg.sweep_interests, cfg.seeds, cfg.experiment(0));
  write_file(stage.out("sweep.tsv"), format_variants_tsv(rows, "interests"));
  stage.produced(stage.out("sweep.tsv"));
  stage.finish(json{{"runs", cfg.seeds}});
  std::cout << format_variants_tsv(rows, "interests");
}

void cmd_ablate(const RunConfig& cfg) {
  Stage stage("ablate", cfg);
  const auto task = load_task(stage, cfg);
  const auto split = load_split(stage, task);
  const auto rows = compare_variants(task, split, standard_ablations(), cfg.seeds, cfg.experiment(0));
  write_file(stage.out("ablate.tsv"), format_variants_tsv(rows, "variant"));
  stage.produced(stage.out("ablate.tsv"));
  stage.finish(json{{"runs", cfg.seeds}});
  std::cout << format_variants_tsv(rows, "variant");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-interest cross-domain recommendation: staged training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig cfg;
  app.add_option("--source", cfg.source, "Source-domain ratings (default <out>/source.csv)");
  app.add_option("--target", cfg.target, "Target-domain ratings (default <out>/target.csv)");
  app.add_option("--out", cfg.out, "Run directory")->capture_default_str();
  app.add_option("--beta", cfg.beta, "Fraction of overlapping users held out")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Run seed")->capture_default_str();
  app.add_option("--dim", cfg.dim, "Embedding dimension d")->capture_default_str();
  app.add_option("--interests", cfg.interests, "Interest capsules K")->capture_default_str();
  app.add_option("--routing-iters", cfg.routing_iters, "Dynamic routing rounds")->capture_default_str();
  app.add_option("--logit-sigma", cfg.logit_init_sigma, "Std-dev of initial routing logits")->capture_default_str();
  bool reassign = false;
  app.add_flag("--reassign-logits", reassign, "Overwrite routing logits each round instead of accumulating");
  app.add_option("--meta-hidden", cfg.meta_hidden, "Meta network hidden width (0 = 2d)")->capture_default_str();
  app.add_option("--gate-hidden", cfg.gate_hidden, "Gate hidden widths (none = single linear layer)");
  app.add_option("--prototypes", cfg.prototypes, "Target-item prototypes P")->capture_default_str();
  app.add_option("--kmeans-iters", cfg.kmeans_iters, "Lloyd iterations per restart")->capture_default_str();
  app.add_option("--kmeans-restarts", cfg.kmeans_restarts, "k-means++ restarts")->capture_default_str();
  app.add_option("--epochs-pretrain", cfg.epochs_pretrain, "Pretraining epochs")->capture_default_str();
  app.add_option("--epochs-cdr", cfg.epochs_cdr, "Cross-domain epochs")->capture_default_str();
  std::optional<double> lr;
  app.add_option("--lr", lr, "Adam learning rate for both stages (default 0.01)");
  std::optional<std::size_t> batch;
  app.add_option("--batch", batch, "Mini-batch size for both stages (default 512)");
  app.add_option("--max-history", cfg.max_history, "Most recent source interactions kept per user")
      ->capture_default_str();
  app.add_option("--ablate", cfg.ablate, "without-multi | without-target | without-proto | without-adapt")
      ->check(CLI::IsMember({"without-multi", "without-target", "without-proto", "without-adapt"}));
  app.add_flag("--clip-eval", cfg.clip_eval, "Clip predictions to [1,5] when scoring");
  app.add_option("--seeds", cfg.seeds, "Seeds for sweep/ablate runs");
  app.add_option("--sweep-k", cfg.sweep_interests, "Interest counts for the sweep");
  app.add_option("--users", cfg.synth.n_users, "synth: users")->capture_default_str();
  app.add_option("--items", cfg.synth.n_items_per_domain, "synth: items per domain")->capture_default_str();
  app.add_option("--latent", cfg.synth.n_latent_interests, "synth: planted interests")->capture_default_str();
  app.add_option("--noise", cfg.synth.noise_sigma, "synth: rating noise std-dev")->capture_default_str();

  const std::vector<std::pair<std::string, void (*)(const RunConfig&)>> commands{
      {"synth", cmd_synth},     {"split", cmd_split}, {"pretrain", cmd_pretrain}, {"cluster", cmd_cluster},
      {"train", cmd_train},     {"eval", cmd_eval},   {"sweep", cmd_sweep},       {"ablate", cmd_ablate},
  };
  const std::map<std::string, std::string> help{
      {"synth", "Generate a planted-interest synthetic dataset"},
      {"split", "Hold out cold-start test users"},
      {"pretrain", "Matrix-factorization pretraining of both domains"},
      {"cluster", "k-means prototypes over target item embeddings"},
      {"train", "Cross-domain training of routing, meta network and gate"},
      {"eval", "MAE/RMSE and sparsity buckets on the test users"},
      {"sweep", "Interest-count sweep over several seeds"},
      {"ablate", "Full model against the four ablations over several seeds"},
  };
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (lr) cfg.lr_pretrain = cfg.lr_cdr = *lr;
  if (batch) cfg.batch_pretrain = cfg.batch_cdr = *batch;
  cfg.accumulate_logits = !reassign;

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    cfg.validate();
    for (const auto& [name, fn] : commands) {
      if (name == stage) fn(cfg);
    }
  } catch (const ConfigError& e) {
    std::cerr << "mimnet " << stage << ": config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mimnet " << stage << ": error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
