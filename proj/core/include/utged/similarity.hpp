#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "utged/corpus.hpp"
#include "utged/numeric/tensor.hpp"

// Sentence similarity providers and the representativeness score used by
// history selection. Backends are immutable once built.
namespace utged::sim {

// Sparse vector; indices are strictly increasing.
struct SentenceEmbedding {
  std::string backend;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  bool is_zero() const;
  double norm() const;
  SentenceEmbedding scaled(double factor) const;
};

// Cosine of the angle between a and b, clamped to [-1, 1]. Defined as 0
// when either side is the zero vector.
double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b);

class SimilarityBackend {
 public:
  virtual ~SimilarityBackend() = default;
  virtual std::string_view name() const = 0;
  virtual SentenceEmbedding embed(std::span<const std::string> tokens) const = 0;
  SentenceEmbedding embed_text(std::string_view text) const;
};

// Term frequency times smoothed inverse document frequency,
// idf = ln((1 + N) / (1 + df)) + 1, L2-normalized. Punctuation-only tokens
// are ignored; terms never seen during fitting contribute nothing.
class TfidfBackend final : public SimilarityBackend {
 public:
  static TfidfBackend fit(std::span<const corpus::Tokens> documents);
  // Fits on every history document and self-introduction.
  static TfidfBackend fit_records(std::span<const corpus::UserRecord> records);

  std::string_view name() const override { return "tfidf"; }
  SentenceEmbedding embed(std::span<const std::string> tokens) const override;
  std::size_t num_terms() const { return idf_.size(); }
  std::size_t num_documents() const { return num_documents_; }

  // Text: "utged-tfidf 1 <documents> <terms>" then one "term idf" line per
  // term in index order. Reading back gives bit-identical embeddings.
  void write(std::ostream& out) const;
  static TfidfBackend read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static TfidfBackend load(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, std::uint32_t> term_index_;
  std::vector<double> idf_;
  std::size_t num_documents_ = 0;
};

// Average of generator token-embedding rows over in-vocabulary tokens,
// L2-normalized. <unk> and the special ids are skipped.
class MeanTokenBackend final : public SimilarityBackend {
 public:
  MeanTokenBackend(num::Tensor embedding_table, corpus::Vocabulary vocab);

  std::string_view name() const override { return "mean-token"; }
  SentenceEmbedding embed(std::span<const std::string> tokens) const override;

 private:
  num::Tensor table_;
  corpus::Vocabulary vocab_;
};

// Dense symmetric matrix of pairwise cosines over one document list.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  static SimilarityMatrix compute(std::span<const SentenceEmbedding> embeddings);
  // Takes an explicit row-major n x n matrix; it must be symmetric.
  static SimilarityMatrix from_values(std::size_t n, std::vector<double> values);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

SimilarityMatrix document_similarity(const SimilarityBackend& backend, std::span<const std::string> documents);

// s_u = (1/m) * sum over all v (self included) of Sim(u, v).
double representativeness(const SimilarityMatrix& sim, std::size_t u);
std::vector<double> representativeness_all(const SimilarityMatrix& sim);
// Same average restricted to a pool of document indices that contains u.
double representativeness_in(const SimilarityMatrix& sim, std::size_t u, std::span<const std::size_t> pool);

// Per-user cache: "UTGSM1" | u64 n | n*n f64 row-major, little-endian.
void write_matrix(std::ostream& out, const SimilarityMatrix& sim);
SimilarityMatrix read_matrix(std::istream& in);
void save_matrix(const std::filesystem::path& path, const SimilarityMatrix& sim);
SimilarityMatrix load_matrix(const std::filesystem::path& path);

}  // namespace utged::sim
