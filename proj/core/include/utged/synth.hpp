#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "utged/corpus.hpp"

// Synthetic users with planted topics, for oracle checks at desk scale.
namespace utged::synth {

struct SynthOptions {
  std::size_t topics = 3;
  std::size_t users = 200;
  std::size_t min_docs = 30;
  std::size_t max_docs = 60;
  std::size_t vocab_size = 300;  // split into `topics` disjoint blocks
  std::size_t min_words = 8;
  std::size_t max_words = 14;
  double concentration = 0.3;  // symmetric Dirichlet over topics
  double repost_rate = 0.05;   // chance a document repeats an earlier one
  std::uint64_t seed = 1;
};

struct PlantedUser {
  std::string user_id;
  std::vector<double> mixture;
  std::size_t dominant_topic = 0;
};

struct SynthCorpus {
  std::vector<corpus::UserRecord> records;
  std::vector<std::vector<std::string>> topic_words;  // planted blocks
  std::vector<PlantedUser> planted;
};

// Throws UsageError on empty or inverted ranges.
void validate(const SynthOptions& options);

// Each document draws one topic from the user's mixture and its words
// uniformly from that topic's block. The self-introduction fills a
// per-topic template with the user's most frequent words of the dominant
// topic.
SynthCorpus generate(const SynthOptions& options);

// Pronounceable, collision-free word for an index.
std::string word_for(std::size_t index);

// {"topics": [[word, ...], ...], "users": [{"user_id", "dominant_topic", "mixture"}, ...]}
void write_sidecar(std::ostream& out, const SynthCorpus& corpus);
void save_sidecar(const std::filesystem::path& path, const SynthCorpus& corpus);

}  // namespace utged::synth
