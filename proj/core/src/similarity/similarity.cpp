#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "utged/error.hpp"
#include "utged/similarity.hpp"

namespace utged::sim {

namespace {

bool punctuation_only(std::string_view t) {
  return std::all_of(t.begin(), t.end(), [](char ch) {
    const auto c = static_cast<unsigned char>(ch);
    return c < 0x80 && std::ispunct(c);
  });
}

void normalize(SentenceEmbedding& e) {
  const double n = e.norm();
  if (n == 0.0) {
    e.indices.clear();
    e.values.clear();
    return;
  }
  for (double& v : e.values) v /= n;
}

constexpr std::string_view kMatrixMagic = "UTGSM1";

template <class T>
void put(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError("similarity cache truncated");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

bool SentenceEmbedding::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

double SentenceEmbedding::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

SentenceEmbedding SentenceEmbedding::scaled(double factor) const {
  SentenceEmbedding out = *this;
  for (double& v : out.values) v *= factor;
  return out;
}

double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.indices.size() && j < b.indices.size()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (b.indices[j] < a.indices[i]) {
      ++j;
    } else {
      dot += a.values[i++] * b.values[j++];
    }
  }
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

SentenceEmbedding SimilarityBackend::embed_text(std::string_view text) const {
  return embed(corpus::tokenize(text));
}

TfidfBackend TfidfBackend::fit(std::span<const corpus::Tokens> documents) {
  if (documents.empty()) throw ConfigError("tfidf backend needs at least one document to fit");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    std::vector<std::string_view> seen;
    for (const auto& t : doc) {
      if (punctuation_only(t)) continue;
      seen.push_back(t);
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto t : seen) ++df[std::string(t)];
  }
  TfidfBackend b;
  b.num_documents_ = documents.size();
  const auto n = static_cast<double>(documents.size());
  for (const auto& [term, count] : df) {
    b.term_index_.emplace(term, static_cast<std::uint32_t>(b.idf_.size()));
    b.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return b;
}

TfidfBackend TfidfBackend::fit_records(std::span<const corpus::UserRecord> records) {
  std::vector<corpus::Tokens> docs;
  for (const auto& r : records) {
    for (const auto& d : r.history) docs.push_back(corpus::tokenize(d));
    docs.push_back(corpus::tokenize(r.self_intro));
  }
  return fit(docs);
}

void TfidfBackend::write(std::ostream& out) const {
  std::vector<const std::string*> terms(idf_.size());
  for (const auto& [term, idx] : term_index_) terms[idx] = &term;
  const auto old = out.precision(17);
  out << "utged-tfidf 1 " << num_documents_ << ' ' << idf_.size() << '\n';
  for (std::size_t i = 0; i < idf_.size(); ++i) out << *terms[i] << ' ' << idf_[i] << '\n';
  out.precision(old);
}

TfidfBackend TfidfBackend::read(std::istream& in) {
  std::string magic;
  int version = 0;
  std::size_t docs = 0, terms = 0;
  if (!(in >> magic >> version >> docs >> terms) || magic != "utged-tfidf" || version != 1)
    throw FormatError("not a tfidf model file");
  TfidfBackend b;
  b.num_documents_ = docs;
  for (std::size_t i = 0; i < terms; ++i) {
    std::string term;
    double idf = 0.0;
    if (!(in >> term >> idf)) throw FormatError("tfidf model truncated at term " + std::to_string(i));
    if (!b.term_index_.emplace(term, static_cast<std::uint32_t>(i)).second)
      throw FormatError("tfidf model repeats term '" + term + "'");
    b.idf_.push_back(idf);
  }
  return b;
}

void TfidfBackend::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write(out);
}

TfidfBackend TfidfBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  return read(in);
}

SentenceEmbedding TfidfBackend::embed(std::span<const std::string> tokens) const {
  std::map<std::uint32_t, double> tf;
  for (const auto& t : tokens) {
    auto it = term_index_.find(t);
    if (it != term_index_.end()) tf[it->second] += 1.0;
  }
  SentenceEmbedding e;
  e.backend = std::string(name());
  for (const auto& [idx, count] : tf) {
    e.indices.push_back(idx);
    e.values.push_back(count * idf_[idx]);
  }
  normalize(e);
  return e;
}

MeanTokenBackend::MeanTokenBackend(num::Tensor embedding_table, corpus::Vocabulary vocab)
    : table_(embedding_table.detach()), vocab_(std::move(vocab)) {
  if (table_.rank() != 2 || table_.rows() < vocab_.size()) {
    throw DimensionError("mean-token backend: embedding table " + num::shape_to_string(table_.shape()) +
                         " does not cover a vocabulary of " + std::to_string(vocab_.size()));
  }
}

SentenceEmbedding MeanTokenBackend::embed(std::span<const std::string> tokens) const {
  const std::size_t d = table_.cols();
  std::vector<double> acc(d, 0.0);
  std::size_t used = 0;
  const auto vals = table_.values();
  for (const auto& t : tokens) {
    auto id = vocab_.find(t);
    if (!id || corpus::Vocabulary::is_special(*id)) continue;
    for (std::size_t c = 0; c < d; ++c) acc[c] += vals[*id * d + c];
    ++used;
  }
  SentenceEmbedding e;
  e.backend = std::string(name());
  if (used == 0) return e;
  for (std::size_t c = 0; c < d; ++c) {
    e.indices.push_back(static_cast<std::uint32_t>(c));
    e.values.push_back(acc[c] / static_cast<double>(used));
  }
  normalize(e);
  return e;
}

SimilarityMatrix SimilarityMatrix::compute(std::span<const SentenceEmbedding> embeddings) {
  SimilarityMatrix m;
  m.n_ = embeddings.size();
  m.values_.assign(m.n_ * m.n_, 0.0);
  for (std::size_t i = 0; i < m.n_; ++i) {
    m.values_[i * m.n_ + i] = embeddings[i].is_zero() ? 0.0 : 1.0;
    for (std::size_t j = i + 1; j < m.n_; ++j) {
      const double c = cosine(embeddings[i], embeddings[j]);
      m.values_[i * m.n_ + j] = c;
      m.values_[j * m.n_ + i] = c;
    }
  }
  return m;
}

SimilarityMatrix SimilarityMatrix::from_values(std::size_t n, std::vector<double> values) {
  if (values.size() != n * n) throw DimensionError("similarity matrix needs n*n values");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (values[i * n + j] != values[j * n + i]) throw UsageError("similarity matrix is not symmetric");
  SimilarityMatrix m;
  m.n_ = n;
  m.values_ = std::move(values);
  return m;
}

SimilarityMatrix document_similarity(const SimilarityBackend& backend, std::span<const std::string> documents) {
  std::vector<SentenceEmbedding> emb;
  emb.reserve(documents.size());
  for (const auto& d : documents) emb.push_back(backend.embed_text(d));
  return SimilarityMatrix::compute(emb);
}

double representativeness(const SimilarityMatrix& sim, std::size_t u) {
  const std::size_t n = sim.size();
  if (u >= n) throw UsageError("representativeness: document index out of range");
  double s = 0.0;
  for (std::size_t v = 0; v < n; ++v) s += sim(u, v);
  return s / static_cast<double>(n);
}

std::vector<double> representativeness_all(const SimilarityMatrix& sim) {
  std::vector<double> out(sim.size());
  for (std::size_t u = 0; u < sim.size(); ++u) out[u] = representativeness(sim, u);
  return out;
}

double representativeness_in(const SimilarityMatrix& sim, std::size_t u, std::span<const std::size_t> pool) {
  if (pool.empty()) throw UsageError("representativeness: empty pool");
  double s = 0.0;
  for (auto v : pool) s += sim(u, v);
  return s / static_cast<double>(pool.size());
}

void write_matrix(std::ostream& out, const SimilarityMatrix& sim) {
  out.write(kMatrixMagic.data(), static_cast<std::streamsize>(kMatrixMagic.size()));
  put<std::uint64_t>(out, sim.size());
  for (double v : sim.values()) put<double>(out, v);
}

SimilarityMatrix read_matrix(std::istream& in) {
  char magic[6];
  if (!in.read(magic, 6) || std::string_view(magic, 6) != kMatrixMagic) {
    throw FormatError("similarity cache: bad magic");
  }
  const auto n = get<std::uint64_t>(in);
  if (n > (1u << 20)) throw FormatError("similarity cache: implausible size");
  std::vector<double> values(n * n);
  for (auto& v : values) v = get<double>(in);
  return SimilarityMatrix::from_values(n, std::move(values));
}

void save_matrix(const std::filesystem::path& path, const SimilarityMatrix& sim) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_matrix(out, sim);
}

SimilarityMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  return read_matrix(in);
}

}  // namespace utged::sim
