#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace utged::sim {
class SimilarityBackend;
}

namespace utged::corpus {

using TokenId = std::uint32_t;
using Tokens = std::vector<std::string>;

inline constexpr std::string_view kUrlTag = "<url>";
inline constexpr std::string_view kMentionTag = "@user";
inline constexpr std::string_view kDocSeparator = "<sep>";

// One user's history (chronological, oldest first) and self-introduction.
struct UserRecord {
  std::string user_id;
  std::vector<std::string> history;
  std::string self_intro;

  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

// Lowercases ASCII, splits on whitespace, emits each ASCII punctuation mark
// as its own token, and replaces URLs with <url> and @mentions with @user.
Tokens tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

// JSON Lines: {"user_id": str, "self_intro": str, "tweets": [str, ...]}.
// Malformed lines raise UsageError naming the 1-based line number.
UserRecord parse_record(std::string_view line);
std::string to_json_line(const UserRecord& record);
std::vector<UserRecord> read_jsonl(std::istream& in);
std::vector<UserRecord> load_jsonl(const std::filesystem::path& path);
void write_jsonl(std::ostream& out, std::span<const UserRecord> records);
void save_jsonl(const std::filesystem::path& path, std::span<const UserRecord> records);

// Token <-> id map. Ids 0..3 are <pad>, <s>, </s>, <unk> in that order;
// every other token is listed once after them.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kNumSpecials = 4;
  static constexpr std::array<std::string_view, kNumSpecials> kSpecialTokens = {"<pad>", "<s>", "</s>", "<unk>"};

  Vocabulary();
  // Non-special tokens in id order. Duplicates and special names are rejected.
  static Vocabulary from_tokens(std::span<const std::string> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  // Number of non-special tokens.
  std::size_t content_size() const { return size() - kNumSpecials; }

  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // <unk> when absent
  const std::string& token(TokenId id) const;
  static bool is_special(TokenId id) { return id < kNumSpecials; }

  // Index among content tokens (id - 4), used as the bag-of-words axis.
  std::optional<std::size_t> content_index(std::string_view token) const;
  const std::string& content_token(std::size_t index) const { return token(static_cast<TokenId>(index + kNumSpecials)); }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const TokenId> ids, bool skip_specials = true) const;

  // One content token per line; line i holds id i + 4.
  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// Most frequent tokens over histories and self-introductions (ties by
// token), capped at max_tokens content entries. Always contains <sep>.
Vocabulary build_generation_vocab(std::span<const UserRecord> records, std::size_t max_tokens = 20000);

// Bundled English stopword list used to clean the topic-model vocabulary.
std::span<const std::string_view> stopwords();
bool is_stopword(std::string_view token);

// Topic-model vocabulary: the v_bow most frequent history tokens after
// dropping stopwords, single-character tokens, and the <url>/@user tags.
Vocabulary build_bow_vocab(std::span<const UserRecord> records, std::size_t v_bow = 10000);

// Sparse term counts over a bag-of-words vocabulary's content indices.
struct BowVector {
  std::map<std::uint32_t, std::uint32_t> counts;
  bool empty() const { return counts.empty(); }
  std::uint64_t total() const;
  friend bool operator==(const BowVector&, const BowVector&) = default;
};

// Counts over the whole history; out-of-vocabulary tokens are skipped. An
// empty result marks the user for exclusion from topic-model batches.
BowVector build_bow(const UserRecord& record, const Vocabulary& bow_vocab);

enum class TopOrdering { kMostSimilar, kMostRecent };

struct FilterOptions {
  std::size_t min_intro_tokens = 7;
  std::size_t max_intro_tokens = 30;
  std::size_t min_published = 30;
  std::size_t max_history = 100;
  double min_similarity = 0.4;
  std::size_t top_k = 30;
  TopOrdering ordering = TopOrdering::kMostSimilar;
  // Records are assumed to be English already; this optional check drops
  // self-introductions whose share of ASCII bytes is below the ratio.
  bool ascii_heuristic = false;
  double min_ascii_ratio = 0.9;
};

struct FilterReport {
  std::size_t input = 0;
  std::size_t dropped_few_published = 0;
  std::size_t dropped_non_ascii = 0;
  std::size_t dropped_intro_short = 0;
  std::size_t dropped_intro_long = 0;
  std::size_t dropped_low_similarity = 0;
  std::size_t kept = 0;
};

// Mean similarity between the self-introduction and the top_k history
// documents (all of them when fewer), picked by `ordering`.
double mean_top_similarity(const UserRecord& record, const sim::SimilarityBackend& backend, std::size_t top_k,
                           TopOrdering ordering);

// Keeps users with at least min_published documents, truncates history to
// the latest max_history, then applies the self-introduction length and
// similarity filters. Survivors keep their content and relative order.
// Throws ConfigError if nothing survives.
std::vector<UserRecord> filter_records(std::span<const UserRecord> records, const FilterOptions& options,
                                       const sim::SimilarityBackend& backend, FilterReport* report = nullptr);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<UserRecord> train, valid, test;
};

// Seeded shuffle, then floor(n * train) / floor(n * valid) / remainder.
DatasetSplit split_records(std::span<const UserRecord> records, const SplitRatios& ratios, std::uint64_t seed);

struct HistogramBin {
  double start = 0.0;
  double end = 0.0;
  std::size_t count = 0;
};

struct CorpusStats {
  std::size_t users = 0;
  // Width 0.1 over [-1, 1]; the last bin is closed.
  std::vector<HistogramBin> similarity;
  // Width 10 starting at 0.
  std::vector<HistogramBin> doc_counts;
  double share_over_90_docs = 0.0;
  double mean_source_tokens = 0.0;
  double mean_target_tokens = 0.0;
};

CorpusStats compute_stats(std::span<const UserRecord> records, const sim::SimilarityBackend& backend,
                          std::size_t top_k = 30, TopOrdering ordering = TopOrdering::kMostSimilar);
// CSV with header bin_start,bin_end,count.
void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins);
std::string format_stats_summary(const CorpusStats& stats);

}  // namespace utged::corpus
