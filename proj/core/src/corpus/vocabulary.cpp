#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "utged/corpus.hpp"
#include "utged/error.hpp"

namespace utged::corpus {

namespace {

// Frequency-descending, then lexicographic.
std::vector<std::string> top_tokens(const std::unordered_map<std::string, std::size_t>& counts, std::size_t limit) {
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (items.size() > limit) items.resize(limit);
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& it : items) out.push_back(std::move(it.first));
  return out;
}

bool is_special_name(std::string_view t) {
  return std::find(Vocabulary::kSpecialTokens.begin(), Vocabulary::kSpecialTokens.end(), t) !=
         Vocabulary::kSpecialTokens.end();
}

}  // namespace

Vocabulary::Vocabulary() {
  for (auto s : kSpecialTokens) {
    token_to_id_.emplace(std::string(s), static_cast<TokenId>(id_to_token_.size()));
    id_to_token_.emplace_back(s);
  }
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (t.empty()) throw FormatError("empty token in vocabulary");
    if (is_special_name(t)) throw FormatError("vocabulary lists reserved token " + t);
    if (!v.token_to_id_.emplace(t, static_cast<TokenId>(v.id_to_token_.size())).second) {
      throw FormatError("duplicate vocabulary token " + t);
    }
    v.id_to_token_.push_back(t);
  }
  return v;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= id_to_token_.size()) throw UsageError("token id " + std::to_string(id) + " out of vocabulary");
  return id_to_token_[id];
}

std::optional<std::size_t> Vocabulary::content_index(std::string_view token) const {
  auto id = find(token);
  if (!id || is_special(*id)) return std::nullopt;
  return *id - kNumSpecials;
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocabulary::decode(std::span<const TokenId> ids, bool skip_specials) const {
  Tokens out;
  for (auto i : ids) {
    if (skip_specials && is_special(i)) continue;
    out.push_back(token(i));
  }
  return out;
}

void Vocabulary::write(std::ostream& out) const {
  for (std::size_t i = kNumSpecials; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open vocabulary " + path.string());
  return read(in);
}

Vocabulary build_generation_vocab(std::span<const UserRecord> records, std::size_t max_tokens) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    for (const auto& doc : r.history)
      for (auto& t : tokenize(doc)) ++counts[t];
    for (auto& t : tokenize(r.self_intro)) ++counts[t];
  }
  for (auto s : Vocabulary::kSpecialTokens) counts.erase(std::string(s));
  counts.erase(std::string(kDocSeparator));
  std::vector<std::string> tokens{std::string(kDocSeparator)};
  auto rest = top_tokens(counts, max_tokens > 0 ? max_tokens - 1 : 0);
  tokens.insert(tokens.end(), rest.begin(), rest.end());
  return Vocabulary::from_tokens(tokens);
}

std::span<const std::string_view> stopwords() {
  static constexpr std::string_view kWords[] = {
      "a",       "about",   "above",   "after",   "again",  "against", "all",     "am",     "an",      "and",
      "any",     "are",     "as",      "at",      "be",     "because", "been",    "before", "being",   "below",
      "between", "both",    "but",     "by",      "can",    "could",   "did",     "do",     "does",    "doing",
      "don",     "down",    "during",  "each",    "few",    "for",     "from",    "further", "get",    "got",
      "had",     "has",     "have",    "having",  "he",     "her",     "here",    "hers",   "herself", "him",
      "himself", "his",     "how",     "i",       "if",     "im",      "in",      "into",   "is",      "it",
      "its",     "itself",  "just",    "ll",      "me",     "more",    "most",    "my",     "myself",  "no",
      "nor",     "not",     "now",     "of",      "off",    "on",      "once",    "only",   "or",      "other",
      "our",     "ours",    "ourselves", "out",   "over",   "own",     "re",      "rt",     "s",       "same",
      "she",     "should",  "so",      "some",    "such",   "t",       "than",    "that",   "the",     "their",
      "theirs",  "them",    "themselves", "then", "there",  "these",   "they",    "this",   "those",   "through",
      "to",      "too",     "under",   "until",   "up",     "us",      "ve",      "very",   "was",     "we",
      "were",    "what",    "when",    "where",   "which",  "while",   "who",     "whom",   "why",     "will",
      "with",    "would",   "you",     "your",    "yours",  "yourself", "yourselves",
  };
  return kWords;
}

bool is_stopword(std::string_view token) {
  auto words = stopwords();
  return std::find(words.begin(), words.end(), token) != words.end();
}

Vocabulary build_bow_vocab(std::span<const UserRecord> records, std::size_t v_bow) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    for (const auto& doc : r.history) {
      for (auto& t : tokenize(doc)) {
        if (t.size() <= 1 || t == kUrlTag || t == kMentionTag || is_stopword(t) || is_special_name(t)) continue;
        ++counts[t];
      }
    }
  }
  return Vocabulary::from_tokens(top_tokens(counts, v_bow));
}

std::uint64_t BowVector::total() const {
  std::uint64_t s = 0;
  for (const auto& [k, c] : counts) s += c;
  return s;
}

BowVector build_bow(const UserRecord& record, const Vocabulary& bow_vocab) {
  BowVector bow;
  for (const auto& doc : record.history) {
    for (const auto& t : tokenize(doc)) {
      if (auto idx = bow_vocab.content_index(t)) ++bow.counts[static_cast<std::uint32_t>(*idx)];
    }
  }
  return bow;
}

}  // namespace utged::corpus
