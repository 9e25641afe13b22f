#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "utged/corpus.hpp"
#include "utged/similarity.hpp"

// Representative, non-redundant history selection and the encoder input
// built from it.
namespace utged::selection {

struct ScoredDoc {
  std::size_t index = 0;
  double score = 0.0;
  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

enum class ScoreMode {
  kRecompute,  // scores averaged over the remaining pool every round
  kStatic,     // scores averaged over the full history once
};

// Greedy redundancy-aware selection. Each round moves the best-scoring pool
// document (earliest on ties) to the shortlist and then removes every pool
// document whose similarity to it exceeds lambda. Entries are returned in
// pick order; their score is the full-history representativeness.
std::vector<ScoredDoc> select(const sim::SimilarityMatrix& sim, double lambda,
                              ScoreMode mode = ScoreMode::kRecompute);

struct Source {
  std::vector<std::size_t> kept;  // chronological
  corpus::Tokens tokens;          // documents joined by <sep>
  std::size_t token_count() const { return tokens.size(); }
};

// Adds shortlisted documents by descending score (earlier first on ties)
// while they fit, counting one <sep> between neighbours. Stops at the first
// document that does not fit; a lone first document that is too long is cut
// to the budget. Kept documents are then laid out chronologically.
Source rank_and_truncate(std::span<const ScoredDoc> shortlist, std::span<const corpus::Tokens> docs,
                         std::size_t max_tokens);

// History concatenated oldest first and cut at max_tokens, with no selection.
Source chronological_truncate(std::span<const corpus::Tokens> docs, std::size_t max_tokens);

enum class OracleMode { kExtractive, kAbstractiveInput, kConsen };
OracleMode parse_oracle_mode(std::string_view name);

// Evaluation-only selection that may look at the reference. kExtractive and
// kConsen return one document verbatim; kAbstractiveInput fills the budget
// in order of similarity to the reference.
Source oracle_select(std::span<const std::string> docs, std::string_view reference,
                     const sim::SimilarityBackend& backend, OracleMode mode, std::size_t max_tokens);

struct SelectionOptions {
  bool enabled = true;
  double lambda = 0.8;
  std::size_t max_tokens = 1024;
  ScoreMode mode = ScoreMode::kRecompute;
};

struct SelectionResult {
  std::vector<ScoredDoc> shortlist;
  Source source;
};

// Full per-user path from raw documents to encoder tokens.
SelectionResult build_source(std::span<const std::string> docs, const sim::SimilarityBackend& backend,
                             const SelectionOptions& options);

}  // namespace utged::selection
