#include "mimnet/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "mimnet/error.hpp"
#include "mimnet/random.hpp"
#include "mimnet/text.hpp"

namespace mimnet {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

struct PairHash {
  std::size_t operator()(const std::pair<std::string, std::string>& p) const {
    return std::hash<std::string>()(p.first) * 31 + std::hash<std::string>()(p.second);
  }
};

}  // namespace

ParsedRatings parse_ratings_text(std::string_view text, Delimiter delimiter) {
  ParsedRatings out;
  std::unordered_map<std::pair<std::string, std::string>, std::size_t, PairHash> seen;
  char delim = delimiter == Delimiter::tab ? '\t' : ',';
  bool detected = delimiter != Delimiter::automatic;

  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find('\n', start);
    std::string_view raw = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    start = pos == std::string_view::npos ? text.size() + 1 : pos + 1;
    // Only \r and spaces are trimmed here; tabs may be the delimiter.
    while (!raw.empty() && (raw.back() == '\r' || raw.back() == ' ')) raw.remove_suffix(1);
    if (trim(raw).empty() || trim(raw).front() == '#') continue;
    ++out.stats.lines;
    if (!detected) {
      delim = raw.find('\t') != std::string_view::npos ? '\t' : ',';
      detected = true;
    }
    const auto fields = split_fields(raw, delim);
    if (fields.size() < 3 || fields[0].empty() || fields[1].empty()) {
      ++out.stats.malformed;
      continue;
    }
    const auto rating = parse_double(fields[2]);
    if (!rating) {
      ++out.stats.malformed;
      continue;
    }
    if (!std::isfinite(*rating) || *rating < kMinRating || *rating > kMaxRating) {
      ++out.stats.out_of_range;
      continue;
    }
    auto key = std::make_pair(std::string(fields[0]), std::string(fields[1]));
    if (auto it = seen.find(key); it != seen.end()) {
      out.triples[it->second].rating = *rating;
      ++out.stats.duplicates;
      continue;
    }
    seen.emplace(key, out.triples.size());
    out.triples.push_back(RatingTriple{std::move(key.first), std::move(key.second), *rating});
    ++out.stats.accepted;
  }
  return out;
}

ParsedRatings parse_ratings(const std::filesystem::path& path, Delimiter delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read ratings file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("error while reading " + path.string());
  return parse_ratings_text(buffer.str(), delimiter);
}

void write_ratings(const std::filesystem::path& path, const std::vector<RatingTriple>& triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write ratings file " + path.string());
  for (const auto& t : triples) out << t.user << ',' << t.item << ',' << format_number(t.rating) << '\n';
  if (!out) throw IoError("error while writing " + path.string());
}

std::uint32_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<std::uint32_t>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> CdrTask::target_item(std::string_view token) const {
  if (auto idx = target.items.find(token)) return idx;
  return target.items.find(std::string(kTargetPrefix) + std::string(token));
}

std::optional<std::uint32_t> CdrTask::source_item(std::string_view token) const {
  if (auto idx = source.items.find(token)) return idx;
  return source.items.find(std::string(kSourcePrefix) + std::string(token));
}

CdrTask build_task(const std::vector<RatingTriple>& source, const std::vector<RatingTriple>& target) {
  if (source.empty() || target.empty()) throw TaskError("both domains need at least one rating");

  std::unordered_set<std::string> source_items, target_items;
  for (const auto& t : source) source_items.insert(t.item);
  for (const auto& t : target) target_items.insert(t.item);
  std::unordered_set<std::string> colliding;
  for (const auto& item : source_items) {
    if (target_items.contains(item)) colliding.insert(item);
  }

  CdrTask task;
  task.renamed_items = colliding.size();
  auto fill = [&](DomainData& domain, const std::vector<RatingTriple>& triples, std::string_view prefix) {
    domain.ratings.reserve(triples.size());
    for (const auto& t : triples) {
      const auto user = domain.users.add(t.user);
      const auto item = domain.items.add(colliding.contains(t.item) ? std::string(prefix) + t.item : t.item);
      domain.ratings.push_back(IndexedRating{user, item, t.rating});
    }
  };
  fill(task.source, source, kSourcePrefix);
  fill(task.target, target, kTargetPrefix);

  for (std::uint32_t u = 0; u < task.source.users.size(); ++u) {
    if (auto t = task.target.users.find(task.source.users.token(u))) task.overlap.push_back(OverlapUser{u, *t});
  }
  if (task.overlap.empty()) throw TaskError("source and target domains share no users");
  return task;
}

std::size_t cold_start_test_count(std::size_t overlap_users, double beta) {
  return static_cast<std::size_t>(std::round(beta * static_cast<double>(overlap_users)));
}

ColdStartSplit split_cold_start(const CdrTask& task, double beta, std::uint64_t seed) {
  if (!(beta > 0.0 && beta < 1.0)) throw SplitError("beta must lie in (0, 1), got " + format_number(beta));
  const std::size_t n = task.overlap.size();
  const std::size_t n_test = cold_start_test_count(n, beta);
  if (n_test == 0) {
    throw SplitError("beta=" + format_number(beta) + " selects no test users out of " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Explicit Fisher-Yates so the permutation does not depend on the standard library.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  ColdStartSplit split;
  split.beta = beta;
  split.seed = seed;
  split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

void write_split(const std::filesystem::path& path, const CdrTask& task, const ColdStartSplit& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write split file " + path.string());
  out << "beta=" << format_number(split.beta) << " seed=" << split.seed << '\n';
  for (auto idx : split.test) out << task.overlap_token(idx) << '\n';
  if (!out) throw IoError("error while writing " + path.string());
}

ColdStartSplit read_split(const std::filesystem::path& path, const CdrTask& task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read split file " + path.string());
  std::string header;
  std::getline(in, header);
  ColdStartSplit split;
  {
    std::istringstream hs(header);
    std::string beta_field, seed_field;
    hs >> beta_field >> seed_field;
    if (beta_field.rfind("beta=", 0) != 0 || seed_field.rfind("seed=", 0) != 0) {
      throw FormatError("split file " + path.string() + " lacks the 'beta=<v> seed=<v>' header");
    }
    const auto beta = parse_double(std::string_view(beta_field).substr(5));
    if (!beta) throw FormatError("split file " + path.string() + ": bad beta value");
    split.beta = *beta;
    try {
      split.seed = std::stoull(seed_field.substr(5));
    } catch (const std::exception&) {
      throw FormatError("split file " + path.string() + ": bad seed value");
    }
  }
  std::unordered_map<std::string, std::size_t> overlap_index;
  for (std::size_t i = 0; i < task.overlap.size(); ++i) overlap_index.emplace(task.overlap_token(i), i);
  std::vector<bool> is_test(task.overlap.size(), false);
  std::string line;
  while (std::getline(in, line)) {
    const auto token = trim(line);
    if (token.empty()) continue;
    auto it = overlap_index.find(std::string(token));
    if (it == overlap_index.end()) {
      throw FormatError("split file lists '" + std::string(token) + "', which is not an overlapping user");
    }
    is_test[it->second] = true;
  }
  for (std::size_t i = 0; i < is_test.size(); ++i) (is_test[i] ? split.test : split.train).push_back(i);
  if (split.test.empty()) throw SplitError("split file " + path.string() + " lists no test users");
  return split;
}

UserHistories build_histories(const DomainData& source, std::size_t max_history) {
  if (max_history == 0) throw ConfigError("max_history must be at least 1");
  UserHistories h;
  h.max_history = max_history;
  h.items.resize(source.users.size());
  h.interaction_count.assign(source.users.size(), 0);
  for (const auto& r : source.ratings) {
    h.items[r.user].push_back(r.item);
    ++h.interaction_count[r.user];
  }
  // Keep the most recent max_history interactions.
  for (auto& items : h.items) {
    if (items.size() > max_history) items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(max_history));
  }
  return h;
}

std::vector<CrossExample> cross_domain_examples(const CdrTask& task, const std::vector<std::size_t>& overlap_indices) {
  std::unordered_map<std::uint32_t, std::uint32_t> target_to_source;
  for (auto idx : overlap_indices) {
    const auto& o = task.overlap.at(idx);
    target_to_source.emplace(o.target_user, o.source_user);
  }
  std::vector<CrossExample> out;
  for (const auto& r : task.target.ratings) {
    if (auto it = target_to_source.find(r.user); it != target_to_source.end()) {
      out.push_back(CrossExample{it->second, r.user, r.item, r.rating});
    }
  }
  return out;
}

std::vector<IndexedRating> visible_target_ratings(const CdrTask& task, const ColdStartSplit& split) {
  std::unordered_set<std::uint32_t> hidden;
  for (auto idx : split.test) hidden.insert(task.overlap.at(idx).target_user);
  std::vector<IndexedRating> out;
  out.reserve(task.target.ratings.size());
  for (const auto& r : task.target.ratings) {
    if (!hidden.contains(r.user)) out.push_back(r);
  }
  return out;
}

}  // namespace mimnet
