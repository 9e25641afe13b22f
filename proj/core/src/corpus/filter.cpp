#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "utged/corpus.hpp"
#include "utged/error.hpp"
#include "utged/numeric/random.hpp"
#include "utged/similarity.hpp"

namespace utged::corpus {

namespace {

double ascii_ratio(std::string_view s) {
  if (s.empty()) return 1.0;
  std::size_t ascii = 0;
  for (char ch : s) ascii += static_cast<unsigned char>(ch) < 0x80;
  return static_cast<double>(ascii) / static_cast<double>(s.size());
}

// floor() with slack for ratios such as 0.1 * 10 landing just below 1.
std::size_t safe_floor(double x) { return static_cast<std::size_t>(std::floor(x + 1e-9)); }

}  // namespace

double mean_top_similarity(const UserRecord& record, const sim::SimilarityBackend& backend, std::size_t top_k,
                           TopOrdering ordering) {
  if (record.history.empty() || top_k == 0) return 0.0;
  const auto intro = backend.embed_text(record.self_intro);
  std::vector<double> sims;
  sims.reserve(record.history.size());
  for (const auto& doc : record.history) sims.push_back(sim::cosine(intro, backend.embed_text(doc)));

  const std::size_t k = std::min(top_k, sims.size());
  double total = 0.0;
  if (ordering == TopOrdering::kMostSimilar) {
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(), std::greater<>());
    for (std::size_t i = 0; i < k; ++i) total += sims[i];
  } else {
    for (std::size_t i = sims.size() - k; i < sims.size(); ++i) total += sims[i];
  }
  return total / static_cast<double>(k);
}

std::vector<UserRecord> filter_records(std::span<const UserRecord> records, const FilterOptions& options,
                                       const sim::SimilarityBackend& backend, FilterReport* report) {
  FilterReport rep;
  rep.input = records.size();
  std::vector<UserRecord> kept;
  for (const auto& r : records) {
    if (r.history.size() < options.min_published) {
      ++rep.dropped_few_published;
      continue;
    }
    UserRecord cand = r;
    if (cand.history.size() > options.max_history) {
      cand.history.erase(cand.history.begin(),
                         cand.history.end() - static_cast<std::ptrdiff_t>(options.max_history));
    }
    if (options.ascii_heuristic && ascii_ratio(cand.self_intro) < options.min_ascii_ratio) {
      ++rep.dropped_non_ascii;
      continue;
    }
    const std::size_t n = tokenize(cand.self_intro).size();
    if (n < options.min_intro_tokens) {
      ++rep.dropped_intro_short;
      continue;
    }
    if (n > options.max_intro_tokens) {
      ++rep.dropped_intro_long;
      continue;
    }
    if (mean_top_similarity(cand, backend, options.top_k, options.ordering) < options.min_similarity) {
      ++rep.dropped_low_similarity;
      continue;
    }
    kept.push_back(std::move(cand));
  }
  rep.kept = kept.size();
  if (report) *report = rep;
  if (kept.empty()) {
    throw ConfigError("no records survived filtering (" + std::to_string(rep.input) +
                      " in); review the length, history and similarity thresholds");
  }
  return kept;
}

DatasetSplit split_records(std::span<const UserRecord> records, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = records.size();
  const std::size_t n_train = std::min(n, safe_floor(static_cast<double>(n) * ratios.train));
  const std::size_t n_valid = std::min(n - n_train, safe_floor(static_cast<double>(n) * ratios.valid));
  DatasetSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[order[i]];
    if (i < n_train) {
      out.train.push_back(r);
    } else if (i < n_train + n_valid) {
      out.valid.push_back(r);
    } else {
      out.test.push_back(r);
    }
  }
  return out;
}

CorpusStats compute_stats(std::span<const UserRecord> records, const sim::SimilarityBackend& backend,
                          std::size_t top_k, TopOrdering ordering) {
  CorpusStats st;
  st.users = records.size();
  for (int b = 0; b < 20; ++b) st.similarity.push_back({(b - 10) / 10.0, (b - 9) / 10.0, 0});

  std::size_t max_docs = 0, over_90 = 0;
  double src_tokens = 0.0, tgt_tokens = 0.0;
  for (const auto& r : records) {
    const double s = mean_top_similarity(r, backend, top_k, ordering);
    const auto bin = std::clamp<long>(static_cast<long>(std::floor(s * 10.0 + 1e-9)) + 10, 0, 19);
    ++st.similarity[static_cast<std::size_t>(bin)].count;

    max_docs = std::max(max_docs, r.history.size());
    over_90 += r.history.size() > 90;
    for (const auto& d : r.history) src_tokens += static_cast<double>(tokenize(d).size());
    tgt_tokens += static_cast<double>(tokenize(r.self_intro).size());
  }
  for (std::size_t b = 0; b <= max_docs / 10; ++b) {
    st.doc_counts.push_back({10.0 * static_cast<double>(b), 10.0 * static_cast<double>(b + 1), 0});
  }
  for (const auto& r : records) ++st.doc_counts[r.history.size() / 10].count;
  if (st.users > 0) {
    const auto n = static_cast<double>(st.users);
    st.share_over_90_docs = static_cast<double>(over_90) / n;
    st.mean_source_tokens = src_tokens / n;
    st.mean_target_tokens = tgt_tokens / n;
  }
  return st;
}

void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins) {
  out << "bin_start,bin_end,count\n";
  for (const auto& b : bins) out << b.start << ',' << b.end << ',' << b.count << '\n';
}

std::string format_stats_summary(const CorpusStats& stats) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "users " << stats.users << '\n'
     << "share_over_90_docs " << stats.share_over_90_docs << '\n'
     << "mean_source_tokens " << stats.mean_source_tokens << '\n'
     << "mean_target_tokens " << stats.mean_target_tokens << '\n';
  return os.str();
}

}  // namespace utged::corpus
