#include "utged/synth.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "utged/error.hpp"
#include "utged/numeric/random.hpp"

namespace utged::synth {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

// {} marks a slot for one topic word.
const std::vector<std::vector<std::string>> kTemplates = {
    {"i", "love", "{}", ",", "{}", "and", "{}", ".", "{}", "fan", "!"},
    {"{}", "enthusiast", ".", "into", "{}", ",", "{}", "and", "{}", "."},
    {"all", "about", "{}", "and", "{}", ".", "{}", "|", "{}", "|", "{}"},
    {"writing", "about", "{}", ",", "{}", "&", "{}", "every", "day", "."},
};

}  // namespace

std::string word_for(std::size_t index) {
  const std::size_t syllables = kConsonants.size() * kVowels.size();
  std::string w;
  for (int s = 0; s < 3; ++s) {
    const std::size_t k = index % syllables;
    index /= syllables;
    w.push_back(kConsonants[k / kVowels.size()]);
    w.push_back(kVowels[k % kVowels.size()]);
  }
  if (index > 0) w += std::to_string(index);
  return w;
}

void validate(const SynthOptions& o) {
  if (o.topics < 1) throw UsageError("synth: need at least one topic");
  if (o.users < 1) throw UsageError("synth: need at least one user");
  if (o.min_docs < 1 || o.min_docs > o.max_docs) throw UsageError("synth: invalid document range");
  if (o.min_words < 1 || o.min_words > o.max_words) throw UsageError("synth: invalid words-per-document range");
  if (o.vocab_size < o.topics * 5) throw UsageError("synth: vocabulary needs at least 5 words per topic");
  if (!(o.concentration > 0.0)) throw UsageError("synth: concentration must be positive");
  if (o.repost_rate < 0.0 || o.repost_rate >= 1.0) throw UsageError("synth: repost rate must lie in [0, 1)");
}

SynthCorpus generate(const SynthOptions& o) {
  validate(o);
  SynthCorpus out;
  const std::size_t block = o.vocab_size / o.topics;
  for (std::size_t t = 0; t < o.topics; ++t) {
    const std::size_t end = t + 1 == o.topics ? o.vocab_size : (t + 1) * block;
    std::vector<std::string> words;
    for (std::size_t i = t * block; i < end; ++i) words.push_back(word_for(i));
    out.topic_words.push_back(std::move(words));
  }

  num::Rng root(o.seed);
  for (std::size_t u = 0; u < o.users; ++u) {
    num::Rng rng = root.fork(u);
    PlantedUser pu;
    pu.user_id = "synth" + std::to_string(u);
    double total = 0.0;
    for (std::size_t t = 0; t < o.topics; ++t) {
      pu.mixture.push_back(rng.gamma(o.concentration) + 1e-300);
      total += pu.mixture.back();
    }
    for (double& m : pu.mixture) m /= total;
    pu.dominant_topic =
        static_cast<std::size_t>(std::max_element(pu.mixture.begin(), pu.mixture.end()) - pu.mixture.begin());

    corpus::UserRecord rec;
    rec.user_id = pu.user_id;
    std::map<std::string, std::size_t> dominant_counts;
    const std::size_t n_docs = o.min_docs + rng.index(o.max_docs - o.min_docs + 1);
    for (std::size_t d = 0; d < n_docs; ++d) {
      if (d > 0 && rng.uniform() < o.repost_rate) {
        rec.history.push_back(rec.history[rng.index(d)]);
        continue;
      }
      double r = rng.uniform();
      std::size_t topic = 0;
      while (topic + 1 < o.topics && r >= pu.mixture[topic]) r -= pu.mixture[topic++];
      const auto& words = out.topic_words[topic];
      const std::size_t n_words = o.min_words + rng.index(o.max_words - o.min_words + 1);
      std::string doc;
      for (std::size_t w = 0; w < n_words; ++w) {
        const auto& word = words[rng.index(words.size())];
        if (!doc.empty()) doc.push_back(' ');
        doc += word;
      }
      rec.history.push_back(std::move(doc));
    }
    for (const auto& doc : rec.history)
      for (const auto& tok : corpus::tokenize(doc)) ++dominant_counts[tok];

    // Most frequent dominant-topic words, ties to the planted order.
    const auto& dom = out.topic_words[pu.dominant_topic];
    std::vector<std::pair<std::size_t, std::size_t>> ranked;  // (count, position)
    for (std::size_t i = 0; i < dom.size(); ++i) {
      auto it = dominant_counts.find(dom[i]);
      ranked.emplace_back(it == dominant_counts.end() ? 0 : it->second, i);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    const auto& tmpl = kTemplates[pu.dominant_topic % kTemplates.size()];
    std::size_t slot = 0;
    std::string intro;
    for (const auto& piece : tmpl) {
      if (!intro.empty()) intro.push_back(' ');
      intro += piece == "{}" ? dom[ranked[slot++ % ranked.size()].second] : piece;
    }
    rec.self_intro = std::move(intro);
    out.records.push_back(std::move(rec));
    out.planted.push_back(std::move(pu));
  }
  return out;
}

void write_sidecar(std::ostream& out, const SynthCorpus& corpus) {
  nlohmann::json j;
  j["topics"] = corpus.topic_words;
  j["users"] = nlohmann::json::array();
  for (const auto& p : corpus.planted) {
    j["users"].push_back({{"user_id", p.user_id}, {"dominant_topic", p.dominant_topic}, {"mixture", p.mixture}});
  }
  out << j.dump(1) << '\n';
}

void save_sidecar(const std::filesystem::path& path, const SynthCorpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_sidecar(out, corpus);
}

}  // namespace utged::synth
