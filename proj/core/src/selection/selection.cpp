#include "utged/selection.hpp"

#include <algorithm>
#include <numeric>

#include "utged/error.hpp"

namespace utged::selection {

namespace {

void check_budget(std::size_t max_tokens) {
  if (max_tokens < 1) throw ConfigError("selection token budget must be at least 1");
}

// Greedy fill in the given rank order, then chronological layout.
Source fill(std::span<const std::size_t> ranked, std::span<const corpus::Tokens> docs, std::size_t max_tokens) {
  check_budget(max_tokens);
  std::vector<std::size_t> kept;
  std::size_t used = 0;
  for (auto idx : ranked) {
    if (idx >= docs.size()) throw UsageError("selection: document index out of range");
    const std::size_t len = docs[idx].size();
    if (len == 0) continue;
    const std::size_t cost = len + (kept.empty() ? 0 : 1);
    if (used + cost > max_tokens) {
      if (kept.empty()) {
        kept.push_back(idx);
        used = max_tokens;
      }
      break;
    }
    kept.push_back(idx);
    used += cost;
  }
  std::sort(kept.begin(), kept.end());

  Source out;
  out.kept = kept;
  for (auto idx : kept) {
    if (!out.tokens.empty()) out.tokens.emplace_back(corpus::kDocSeparator);
    out.tokens.insert(out.tokens.end(), docs[idx].begin(), docs[idx].end());
  }
  if (out.tokens.size() > max_tokens) out.tokens.resize(max_tokens);
  return out;
}

std::vector<std::size_t> rank_by(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

std::vector<ScoredDoc> select(const sim::SimilarityMatrix& sim, double lambda, ScoreMode mode) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("selection threshold lambda must lie in (0, 1]");
  const std::size_t n = sim.size();
  const auto full = sim::representativeness_all(sim);

  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<ScoredDoc> shortlist;
  while (!pool.empty()) {
    std::size_t best = pool.front();
    double best_score = -1e300;
    for (auto u : pool) {
      const double s = mode == ScoreMode::kStatic ? full[u] : sim::representativeness_in(sim, u, pool);
      if (s > best_score) {  // pool stays in index order, so ties keep the earlier document
        best_score = s;
        best = u;
      }
    }
    shortlist.push_back({best, full[best]});
    std::erase_if(pool, [&](std::size_t v) { return v == best || sim(best, v) > lambda; });
  }
  return shortlist;
}

Source rank_and_truncate(std::span<const ScoredDoc> shortlist, std::span<const corpus::Tokens> docs,
                         std::size_t max_tokens) {
  std::vector<ScoredDoc> ranked(shortlist.begin(), shortlist.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    return a.score != b.score ? a.score > b.score : a.index < b.index;
  });
  std::vector<std::size_t> order;
  for (const auto& d : ranked) order.push_back(d.index);
  return fill(order, docs, max_tokens);
}

Source chronological_truncate(std::span<const corpus::Tokens> docs, std::size_t max_tokens) {
  check_budget(max_tokens);
  Source out;
  for (std::size_t i = 0; i < docs.size() && out.tokens.size() < max_tokens; ++i) {
    if (docs[i].empty()) continue;
    if (!out.tokens.empty()) out.tokens.emplace_back(corpus::kDocSeparator);
    out.tokens.insert(out.tokens.end(), docs[i].begin(), docs[i].end());
    out.kept.push_back(i);
  }
  if (out.tokens.size() > max_tokens) out.tokens.resize(max_tokens);
  // A trailing separator carries no content.
  if (!out.tokens.empty() && out.tokens.back() == corpus::kDocSeparator) {
    out.tokens.pop_back();
    out.kept.pop_back();
  }
  return out;
}

OracleMode parse_oracle_mode(std::string_view name) {
  if (name == "extractive") return OracleMode::kExtractive;
  if (name == "abstractive-input") return OracleMode::kAbstractiveInput;
  if (name == "consen") return OracleMode::kConsen;
  throw UsageError("unknown oracle mode '" + std::string(name) + "' (extractive, abstractive-input, consen)");
}

Source oracle_select(std::span<const std::string> docs, std::string_view reference,
                     const sim::SimilarityBackend& backend, OracleMode mode, std::size_t max_tokens) {
  check_budget(max_tokens);
  std::vector<corpus::Tokens> tokens;
  for (const auto& d : docs) tokens.push_back(corpus::tokenize(d));
  if (docs.empty()) return {};

  std::vector<double> scores;
  if (mode == OracleMode::kConsen) {
    scores = sim::representativeness_all(sim::document_similarity(backend, docs));
  } else {
    const auto ref = backend.embed_text(reference);
    for (const auto& t : tokens) scores.push_back(sim::cosine(ref, backend.embed(t)));
  }
  const auto order = rank_by(scores);
  if (mode == OracleMode::kAbstractiveInput) return fill(order, tokens, max_tokens);

  Source out;
  out.kept = {order.front()};
  out.tokens = tokens[order.front()];
  return out;
}

SelectionResult build_source(std::span<const std::string> docs, const sim::SimilarityBackend& backend,
                             const SelectionOptions& options) {
  std::vector<corpus::Tokens> tokens;
  tokens.reserve(docs.size());
  for (const auto& d : docs) tokens.push_back(corpus::tokenize(d));
  SelectionResult out;
  if (!options.enabled) {
    out.source = chronological_truncate(tokens, options.max_tokens);
    return out;
  }
  if (docs.empty()) return out;
  out.shortlist = select(sim::document_similarity(backend, docs), options.lambda, options.mode);
  out.source = rank_and_truncate(out.shortlist, tokens, options.max_tokens);
  return out;
}

}  // namespace utged::selection
