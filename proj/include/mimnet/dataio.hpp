#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mimnet {

inline constexpr double kMinRating = 1.0;
inline constexpr double kMaxRating = 5.0;

struct RatingTriple {
  std::string user;
  std::string item;
  double rating = 0.0;

  friend bool operator==(const RatingTriple&, const RatingTriple&) = default;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t malformed = 0;
  std::size_t out_of_range = 0;
  std::size_t duplicates = 0;
};

struct ParsedRatings {
  std::vector<RatingTriple> triples;
  ParseStats stats;
};

enum class Delimiter { automatic, comma, tab };

/// Reads `user,item,rating[,ignored...]` records. Blank lines and lines
/// starting with '#' are skipped. A repeated (user, item) pair keeps its
/// first position but takes the last rating.
ParsedRatings parse_ratings(const std::filesystem::path& path, Delimiter delimiter = Delimiter::automatic);
ParsedRatings parse_ratings_text(std::string_view text, Delimiter delimiter = Delimiter::automatic);

void write_ratings(const std::filesystem::path& path, const std::vector<RatingTriple>& triples);

/// Token <-> dense index bijection, indices assigned in first-seen order.
class Vocabulary {
 public:
  std::uint32_t add(const std::string& token);
  std::optional<std::uint32_t> find(std::string_view token) const;
  const std::string& token(std::uint32_t index) const { return tokens_.at(index); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const { return find(token).has_value(); }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> tokens_;
};

struct IndexedRating {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double rating = 0.0;
};

struct DomainData {
  Vocabulary users;
  Vocabulary items;
  std::vector<IndexedRating> ratings;
};

struct OverlapUser {
  std::uint32_t source_user = 0;
  std::uint32_t target_user = 0;
};

/// Two-domain cross-domain recommendation task.
struct CdrTask {
  DomainData source;
  DomainData target;
  /// Users present in both domains, ordered by source index.
  std::vector<OverlapUser> overlap;
  /// Item tokens that collided across domains and were domain-prefixed.
  std::size_t renamed_items = 0;

  const std::string& overlap_token(std::size_t i) const { return source.users.token(overlap[i].source_user); }
  std::optional<std::uint32_t> target_item(std::string_view token) const;
  std::optional<std::uint32_t> source_item(std::string_view token) const;
};

inline constexpr std::string_view kSourcePrefix = "S|";
inline constexpr std::string_view kTargetPrefix = "T|";

CdrTask build_task(const std::vector<RatingTriple>& source, const std::vector<RatingTriple>& target);

/// Overlap users held out as cold-start test users. Both lists index into
/// CdrTask::overlap and are sorted ascending.
struct ColdStartSplit {
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> test;
  std::vector<std::size_t> train;
};

/// round(beta * n), halves rounded away from zero.
std::size_t cold_start_test_count(std::size_t overlap_users, double beta);

ColdStartSplit split_cold_start(const CdrTask& task, double beta, std::uint64_t seed);

/// Header `beta=<value> seed=<value>`, then one test-user token per line.
void write_split(const std::filesystem::path& path, const CdrTask& task, const ColdStartSplit& split);
ColdStartSplit read_split(const std::filesystem::path& path, const CdrTask& task);

/// Source-domain item histories per source user (file order).
struct UserHistories {
  std::vector<std::vector<std::uint32_t>> items;
  /// Interaction count before truncation.
  std::vector<std::size_t> interaction_count;
  std::size_t max_history = 0;
};

UserHistories build_histories(const DomainData& source, std::size_t max_history = 64);

/// Target-domain supervision example keyed by the source-side user index.
struct CrossExample {
  std::uint32_t source_user = 0;
  std::uint32_t target_user = 0;
  std::uint32_t target_item = 0;
  double rating = 0.0;
};

/// Target ratings of the listed overlap users, in target file order.
std::vector<CrossExample> cross_domain_examples(const CdrTask& task, const std::vector<std::size_t>& overlap_indices);

/// Target-domain ratings visible to pretraining: everything except the test users' ratings.
std::vector<IndexedRating> visible_target_ratings(const CdrTask& task, const ColdStartSplit& split);

}  // namespace mimnet
