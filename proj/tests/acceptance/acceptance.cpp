// Acceptance suite. Each criterion runs against its own time budget and
// prints one PASS/FAIL line. With no arguments every criterion runs;
// otherwise only the numbered ones.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "lcs_oracle.hpp"
#include "primitive_cases.hpp"
#include "selection_oracle.hpp"
#include "utged/control.hpp"
#include "utged/evaluation.hpp"
#include "utged/numeric/ops.hpp"
#include "utged/numeric/optim.hpp"
#include "utged/selection.hpp"
#include "utged/synth.hpp"
#include "utged/training.hpp"

namespace fs = std::filesystem;
using namespace utged;
using num::Tensor;
using corpus::TokenId;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<Tensor> tensors_of(const num::ParameterList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

Tensor random_simplex(std::size_t k, num::Rng& rng, double shape = 0.5) {
  std::vector<double> v(k);
  double total = 0.0;
  for (auto& x : v) total += x = rng.gamma(shape) + 1e-9;
  for (auto& x : v) x /= total;
  return Tensor::from({1, k}, std::move(v));
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("utged_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << "  utged " << args[0] << " exited " << code << ": " << err.str();
  return code;
}

// ---------------------------------------------------------------------------
// 1. gradients

Outcome gradient_checks() {
  std::size_t checked = 0;
  double worst = 0.0;
  std::string worst_name;
  std::vector<std::string> failed;
  auto track = [&](const std::string& name, const testing::GradCheckResult& r) {
    ++checked;
    if (!(r.relative_error < 1e-4) || r.analytic_norm == 0.0) failed.push_back(name);
    if (!(r.relative_error <= worst)) {
      worst = r.relative_error;
      worst_name = name;
    }
  };

  for (std::uint64_t seed : {11, 12, 13})
    for (auto& c : testing::primitive_cases(seed)) track(c.name, testing::grad_check(c.loss, c.inputs));

  num::Rng rng(21);
  {
    ntm::TopicModel m({12, 3, 6}, rng);
    std::vector<double> counts(36);
    for (auto& c : counts) c = static_cast<double>(rng.index(4));
    const auto bow = Tensor::from({3, 12}, counts);
    track("L_NTM", testing::grad_check(
                       [&] {
                         num::Rng eps(5);
                         return ntm::ntm_loss(bow, m.forward(bow, &eps)).total;
                       },
                       tensors_of(m.parameters())));
  }

  gen::GeneratorConfig gc;
  gc.vocab_size = 14;
  gc.d_model = 8;
  gc.encoder_layers = 1;
  gc.decoder_layers = 1;
  gc.heads = 2;
  gc.ff_hidden = 12;
  gc.num_topics = 3;
  gc.prompt_length = 2;
  gc.prompt_hidden = 6;
  gc.max_input_tokens = 16;
  const std::vector<TokenId> src = {4, 9, 5, 13, 7}, tgt = {6, 11, 6, 8};
  {
    gen::Generator g(gc, rng);
    auto theta = Tensor::from({1, 3}, {0.2, 0.5, 0.3});
    auto inputs = tensors_of(g.parameters());
    inputs.push_back(theta);
    track("L_SIG", testing::grad_check(
                       [&] {
                         const auto l = g.sequence_loss(src, theta, tgt);
                         return num::scale(l.nll, 1.0 / static_cast<double>(l.tokens));
                       },
                       inputs));
  }

  {
    // The weighted joint objective through the shared theta path.
    Config cfg;
    cfg.num_topics = 3;
    cfg.ntm_hidden = 6;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.ff_hidden = 12;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.prompt_length = 2;
    cfg.prompt_hidden = 6;
    cfg.max_input_tokens = 16;
    train::Vocabularies vocabs;
    std::vector<std::string> words, bow_words;
    for (int i = 0; i < 10; ++i) words.push_back("w" + std::to_string(i));
    for (int i = 0; i < 8; ++i) bow_words.push_back("b" + std::to_string(i));
    vocabs.gen = corpus::Vocabulary::from_tokens(words);
    vocabs.bow = corpus::Vocabulary::from_tokens(bow_words);
    train::Model model(cfg, vocabs, rng);
    std::vector<train::PreparedExample> ex(3);
    ex[0] = {"a", {4, 5, 6}, {7, 8}, {}, 1, ""};
    ex[0].bow.counts = {{0, 2}, {3, 1}};
    ex[1] = {"b", {9, 10}, {11, 12, 13}, {}, 1, ""};
    ex[1].bow.counts = {{5, 4}, {7, 1}, {1, 1}};
    ex[2] = {"c", {6}, {5}, {}, 1, ""};  // empty bag: uniform theta
    const std::vector<const train::PreparedExample*> batch = {&ex[0], &ex[1], &ex[2]};
    track("joint objective", testing::grad_check(
                                 [&] {
                                   num::Rng eps(8);
                                   return train::joint_loss(model, batch, 0.3, &eps).total;
                                 },
                                 tensors_of(model.parameters())));
  }

  {
    // Topic-word log-likelihood w.r.t. the encoder-state and decoder-cache
    // perturbations, through a full decoder step.
    gen::Generator g(gc, rng);
    const auto frozen = g.frozen();
    gen::EncodedSource enc;
    gen::DecoderState state = frozen.empty_state();
    {
      num::NoGradScope ng;
      enc = frozen.encode(src, Tensor::from({1, 3}, {0.6, 0.1, 0.3}));
      const auto mem = frozen.cross_memory(enc.h_e);
      TokenId last = corpus::Vocabulary::kBos;
      for (TokenId next : {TokenId{6}, TokenId{11}}) {
        gen::Generator::append(state, frozen.step(mem, state, last));
        last = next;
      }
    }
    const std::vector<TokenId> words = {5, 8, 8, 12};
    std::vector<Tensor> deltas = {num::normal_tensor(enc.h_e.shape(), 0.1, rng, false)};
    for (std::size_t l = 0; l < state.k.size(); ++l) {
      deltas.push_back(num::normal_tensor(state.k[l].shape(), 0.1, rng, false));
      deltas.push_back(num::normal_tensor(state.v[l].shape(), 0.1, rng, false));
    }
    track("attribute objective", testing::grad_check(
                                     [&] {
                                       const auto mem = frozen.cross_memory(num::add(enc.h_e, deltas[0]));
                                       auto ps = state;
                                       for (std::size_t l = 0; l < ps.k.size(); ++l) {
                                         ps.k[l] = num::add(state.k[l], deltas[1 + 2 * l]);
                                         ps.v[l] = num::add(state.v[l], deltas[2 + 2 * l]);
                                       }
                                       return control::attribute_loglik(frozen.step(mem, ps, 11).logits, words);
                                     },
                                     deltas));
  }

  std::string detail = fmt("%zu checks, worst relative error %.2e (%s)", checked, worst, worst_name.c_str());
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------------------
// 2. simplex checks

struct SimplexTally {
  std::size_t distributions = 0;
  std::size_t bad = 0;
  double worst = 0.0;
  void check(const Tensor& p) {
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      bool ok = true;
      for (std::size_t c = 0; c < p.cols(); ++c) {
        const double v = p.at(r, c);
        ok = ok && std::isfinite(v) && v >= 0.0;
        s += v;
      }
      const double dev = std::abs(s - 1.0);
      worst = std::max(worst, std::isfinite(dev) ? dev : INFINITY);
      bad += !(ok && dev <= 1e-6);
      ++distributions;
    }
  }
};

Outcome simplex_checks() {
  num::NoGradScope ng;
  SimplexTally theta, recon, tokens;
  num::Rng rng(31);
  const std::size_t vocab = 40, bow_vocab = 50, topics = 5;
  std::optional<ntm::TopicModel> topic_model;
  std::optional<gen::Generator> generator;
  for (std::size_t pass = 0; pass < 1000; ++pass) {
    if (pass % 50 == 0) {
      topic_model.emplace(ntm::NtmConfig{bow_vocab, topics, 16}, rng);
      gen::GeneratorConfig gc;
      gc.vocab_size = vocab;
      gc.d_model = 16;
      gc.encoder_layers = 1;
      gc.decoder_layers = 1;
      gc.heads = 2;
      gc.ff_hidden = 24;
      gc.num_topics = topics;
      gc.prompt_length = 3;
      gc.prompt_hidden = 8;
      gc.max_input_tokens = 24;
      generator.emplace(gc, rng);
    }
    // Count scales from sparse to very large bags.
    const std::size_t batch = 1 + rng.index(4);
    const double scale = std::pow(10.0, rng.uniform(0.0, 3.0));
    std::vector<double> counts(batch * bow_vocab);
    for (auto& c : counts) c = rng.uniform() < 0.3 ? std::floor(rng.uniform() * scale) : 0.0;
    const auto bow = Tensor::from({batch, bow_vocab}, counts);
    const auto f = topic_model->forward(bow, pass % 2 ? &rng : nullptr);
    theta.check(f.theta);
    recon.check(f.recon);

    const auto th = random_simplex(topics, rng, rng.uniform(0.05, 2.0));
    std::vector<TokenId> src(1 + rng.index(20));
    for (auto& t : src) t = static_cast<TokenId>(4 + rng.index(vocab - 4));
    const auto enc = generator->encode(src, th);
    std::vector<TokenId> inputs = {corpus::Vocabulary::kBos};
    for (std::size_t i = 0, n = 1 + rng.index(6); i < n; ++i) inputs.push_back(static_cast<TokenId>(4 + rng.index(vocab - 4)));
    tokens.check(num::softmax(generator->decode(enc.h_e, inputs), -1));

    // Incremental steps, plain and with perturbed encoder states.
    const auto mem = generator->cross_memory(enc.h_e);
    const auto noisy = generator->cross_memory(num::add(enc.h_e, num::normal_tensor(enc.h_e.shape(), scale / 100.0, rng, false)));
    auto state = generator->empty_state();
    TokenId last = corpus::Vocabulary::kBos;
    for (std::size_t t = 0; t < 3; ++t) {
      const auto out = generator->step(mem, state, last);
      tokens.check(num::softmax(out.logits, -1));
      tokens.check(num::softmax(generator->step(noisy, state, last).logits, -1));
      gen::Generator::append(state, out);
      last = gen::argmax_token(out.logits.values());
    }
  }
  const std::size_t bad = theta.bad + recon.bad + tokens.bad;
  const double worst = std::max({theta.worst, recon.worst, tokens.worst});
  return {bad == 0, fmt("1000 passes: %zu theta, %zu reconstruction, %zu token distributions; %zu off-simplex; "
                        "max |sum - 1| = %.1e",
                        theta.distributions, recon.distributions, tokens.distributions, bad, worst)};
}

// ---------------------------------------------------------------------------
// 3. selection against re-simulation

Outcome selection_equivalence() {
  num::Rng rng(41);
  std::size_t mismatches = 0, bound_violations = 0, runs = 0;
  const std::vector<std::string> alphabet = {"ant", "bee", "cat", "dog", "eel", "fox"};
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 1 + rng.index(8);
    std::vector<double> m(n * n, 0.0);
    const int kind = inst % 3;
    if (kind == 2) {
      // Real cosine similarities of short random documents.
      std::vector<corpus::Tokens> docs(n);
      std::vector<std::string> texts;
      for (auto& d : docs) {
        for (std::size_t w = 0, len = 1 + rng.index(4); w < len; ++w) d.push_back(alphabet[rng.index(alphabet.size())]);
        texts.push_back(corpus::join_tokens(d));
      }
      const auto tfidf = sim::TfidfBackend::fit(docs);
      const auto s = sim::document_similarity(tfidf, texts);
      m.assign(s.values().begin(), s.values().end());
    } else {
      const double levels[] = {0.0, 0.3, 0.8, 0.81, 1.0};  // ties and values at lambda
      for (std::size_t i = 0; i < n; ++i) {
        m[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = m[j * n + i] = kind == 0 ? rng.uniform() : levels[rng.index(5)];
      }
    }
    const auto matrix = sim::SimilarityMatrix::from_values(n, m);
    const double lambda = inst % 2 ? 0.8 : rng.uniform(0.05, 1.0);
    for (auto mode : {selection::ScoreMode::kRecompute, selection::ScoreMode::kStatic}) {
      ++runs;
      const auto got = selection::select(matrix, lambda, mode);
      const auto want = testing::reference_select(m, n, lambda, mode == selection::ScoreMode::kRecompute);
      bool same = got.size() == want.size();
      for (std::size_t k = 0; same && k < got.size(); ++k)
        same = got[k].index == want[k].index && std::abs(got[k].score - want[k].full_score) <= 1e-12;
      mismatches += !same;
      for (std::size_t a = 0; a < got.size(); ++a)
        for (std::size_t b = a + 1; b < got.size(); ++b) bound_violations += m[got[a].index * n + got[b].index] > lambda;
    }
  }
  return {mismatches == 0 && bound_violations == 0,
          fmt("500 instances x 2 scoring modes = %zu runs; %zu mismatches; %zu shortlist pairs above lambda", runs,
              mismatches, bound_violations)};
}

// ---------------------------------------------------------------------------
// 4. ROUGE

Outcome rouge_oracle() {
  struct Fixture {
    const char* candidate;
    const char* reference;
    double r1[3], r2[3], rl[3];  // precision, recall, f1
  };
  // Counted by hand.
  const Fixture fixtures[] = {
      {"the cat", "the cat sat", {1, 2.0 / 3, 0.8}, {1, 0.5, 2.0 / 3}, {1, 2.0 / 3, 0.8}},
      {"the cat sat", "the cat", {2.0 / 3, 1, 0.8}, {0.5, 1, 2.0 / 3}, {2.0 / 3, 1, 0.8}},
      {"a b c d", "a b c d", {1, 1, 1}, {1, 1, 1}, {1, 1, 1}},
      {"a b", "c d", {0, 0, 0}, {0, 0, 0}, {0, 0, 0}},
      {"the the the cat", "the cat on the mat", {0.75, 0.6, 2.0 / 3}, {1.0 / 3, 0.25, 2.0 / 7}, {0.5, 0.4, 4.0 / 9}},
      {"police killed the gunman", "the gunman was shot by police", {0.75, 0.5, 0.6}, {1.0 / 3, 0.2, 0.25},
       {0.5, 1.0 / 3, 0.4}},
      {"a", "a", {1, 1, 1}, {0, 0, 0}, {1, 1, 1}},
      {"", "a b", {0, 0, 0}, {0, 0, 0}, {0, 0, 0}},
      {"a b", "", {0, 0, 0}, {0, 0, 0}, {0, 0, 0}},
  };
  std::size_t fixture_errors = 0;
  for (const auto& f : fixtures) {
    bool empty = false;
    const auto s = eval::rouge_text(f.candidate, f.reference, &empty);
    const eval::Prf* got[] = {&s.r1, &s.r2, &s.rl};
    const double* want[] = {f.r1, f.r2, f.rl};
    for (int k = 0; k < 3; ++k) {
      const double g[] = {got[k]->precision, got[k]->recall, got[k]->f1};
      for (int j = 0; j < 3; ++j) fixture_errors += std::abs(g[j] - want[k][j]) > 1e-12;
    }
    fixture_errors += empty != (std::string(f.reference).empty());
  }

  // Every pair of binary sequences up to length 8.
  std::vector<std::vector<int>> seqs;
  for (std::size_t len = 0; len <= 8; ++len)
    for (std::size_t bits = 0; bits < (std::size_t{1} << len); ++bits) {
      std::vector<int> s(len);
      for (std::size_t i = 0; i < len; ++i) s[i] = static_cast<int>(bits >> i & 1);
      seqs.push_back(s);
    }
  auto words = [](const std::vector<int>& s) {
    std::vector<std::string> w;
    for (int x : s) w.push_back(std::string(1, static_cast<char>('a' + x)));
    return w;
  };
  std::vector<std::vector<std::string>> as_words;
  for (const auto& s : seqs) as_words.push_back(words(s));
  std::size_t pairs = 0, lcs_errors = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    for (std::size_t j = 0; j < seqs.size(); ++j) {
      ++pairs;
      lcs_errors += eval::lcs_length(as_words[i], as_words[j]) != testing::brute_force_lcs(seqs[i], seqs[j]);
    }
  // Larger alphabets, random lengths up to 8, with R-L checked end to end.
  num::Rng rng(44);
  for (int t = 0; t < 20000; ++t) {
    const std::size_t k = 3 + rng.index(3);
    std::vector<int> a(rng.index(9)), b(1 + rng.index(8));
    for (auto& x : a) x = static_cast<int>(rng.index(k));
    for (auto& x : b) x = static_cast<int>(rng.index(k));
    const auto want = testing::brute_force_lcs(a, b);
    const auto s = eval::rouge(words(a), words(b));
    const double p = a.empty() ? 0.0 : static_cast<double>(want) / static_cast<double>(a.size());
    const double r = static_cast<double>(want) / static_cast<double>(b.size());
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    ++pairs;
    lcs_errors += std::abs(s.rl.precision - p) > 1e-12 || std::abs(s.rl.recall - r) > 1e-12 ||
                  std::abs(s.rl.f1 - f) > 1e-12;
  }
  return {fixture_errors == 0 && lcs_errors == 0,
          fmt("%zu hand fixtures, %zu disagreements; %zu LCS pairs (all binary up to length 8 plus random), %zu "
              "disagreements",
              std::size(fixtures), fixture_errors, pairs, lcs_errors)};
}

// ---------------------------------------------------------------------------
// 5. topic recovery

// Learned topics matched one-to-one to planted blocks, largest top-10
// overlap first.
std::vector<double> aligned_precisions(const ntm::TopicModel& model, const corpus::Vocabulary& bow,
                                       const std::vector<std::vector<std::string>>& planted) {
  const std::size_t k_learned = model.num_topics(), k_planted = planted.size();
  std::vector<std::vector<std::size_t>> overlap(k_learned, std::vector<std::size_t>(k_planted, 0));
  for (std::size_t k = 0; k < k_learned; ++k) {
    std::set<std::string> top;
    for (auto i : ntm::topic_words(model.topic_word_matrix(), k, 10)) top.insert(bow.content_token(i));
    for (std::size_t t = 0; t < k_planted; ++t)
      for (const auto& w : planted[t]) overlap[k][t] += top.count(w);
  }
  std::vector<double> precision;
  std::vector<bool> used_k(k_learned, false), used_t(k_planted, false);
  for (std::size_t round = 0; round < std::min(k_learned, k_planted); ++round) {
    std::size_t bk = 0, bt = 0, best = 0;
    bool found = false;
    for (std::size_t k = 0; k < k_learned; ++k)
      for (std::size_t t = 0; t < k_planted; ++t)
        if (!used_k[k] && !used_t[t] && (!found || overlap[k][t] > best)) {
          bk = k, bt = t, best = overlap[k][t], found = true;
        }
    used_k[bk] = used_t[bt] = true;
    precision.push_back(static_cast<double>(best) / 10.0);
  }
  return precision;
}

Outcome topic_recovery() {
  std::size_t good_seeds = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    synth::SynthOptions so;  // T=3, N=200, V=300
    so.seed = seed;
    const auto corpus = synth::generate(so);
    Config cfg;
    cfg.num_topics = 3;
    cfg.seed = seed;
    const auto bow_vocab = corpus::build_bow_vocab(corpus.records, cfg.bow_vocab_size);
    std::vector<train::PreparedExample> examples(corpus.records.size());
    for (std::size_t i = 0; i < examples.size(); ++i) examples[i].bow = corpus::build_bow(corpus.records[i], bow_vocab);
    num::Rng root(seed);
    auto init = root.fork(1);
    ntm::TopicModel model(cfg.ntm_config(bow_vocab.content_size()), init);
    auto rng = root.fork(2);
    const auto result = train::pretrain_ntm(model, examples, cfg, rng);
    const auto p = aligned_precisions(model, bow_vocab, corpus.topic_words);
    const auto good = std::count_if(p.begin(), p.end(), [](double x) { return x >= 0.8; });
    good_seeds += good >= 2 && !result.diverged;
    per_seed += fmt("%sseed %llu: %.1f/%.1f/%.1f", seed == 1 ? "" : ", ", static_cast<unsigned long long>(seed), p[0],
                    p[1], p[2]);
  }
  return {good_seeds >= 4, fmt("%zu of 5 seeds recover >= 2 topics (%s)", good_seeds, per_seed.c_str())};
}

// ---------------------------------------------------------------------------
// 6 and 7. toy generator

struct ToyPairs {
  corpus::Vocabulary vocab;
  std::vector<std::vector<TokenId>> source, target;
  std::vector<Tensor> theta;
  synth::SynthCorpus corpus;
};

ToyPairs toy_pairs() {
  ToyPairs p;
  synth::SynthOptions so;
  so.users = 32;
  so.seed = 3;
  p.corpus = synth::generate(so);
  p.vocab = corpus::build_generation_vocab(p.corpus.records);
  num::Rng rng(1);
  for (const auto& r : p.corpus.records) {
    std::vector<corpus::Tokens> docs;
    for (const auto& d : r.history) docs.push_back(corpus::tokenize(d));
    p.source.push_back(p.vocab.encode(selection::chronological_truncate(docs, 64).tokens));
    p.target.push_back(p.vocab.encode(corpus::tokenize(r.self_intro)));
    p.theta.push_back(random_simplex(3, rng));
  }
  return p;
}

Config toy_config() {
  Config cfg;  // d=128, 2+2 layers, 4 heads
  cfg.num_topics = 3;
  cfg.lr_sig = 1e-3;
  return cfg;
}

// Mini-batches of 8 pairs, token-mean NLL, AdamW with clipping.
gen::Generator train_toy(const ToyPairs& p, std::size_t steps, double* final_loss) {
  const auto cfg = toy_config();
  num::Rng rng(2);
  gen::Generator g(cfg.generator_config(p.vocab.size()), rng);
  const auto params = g.parameters();
  num::AdamW opt(params, {cfg.lr_sig, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<std::size_t> order(p.source.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t pos = order.size();
  for (std::size_t step = 0; step < steps; ++step) {
    num::Tape tape;
    num::TapeScope scope(tape);
    std::vector<Tensor> losses;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < 8; ++b) {
      if (pos == order.size()) {
        rng.shuffle(order);
        pos = 0;
      }
      const auto i = order[pos++];
      auto l = g.sequence_loss(p.source[i], p.theta[i], p.target[i]);
      losses.push_back(l.nll);
      tokens += l.tokens;
    }
    const auto loss = num::scale(num::sum(num::concat(losses, 0)), 1.0 / static_cast<double>(tokens));
    num::zero_grad(params);
    tape.backward(loss);
    num::clip_grad_norm(params, cfg.clip_norm);
    opt.step();
  }
  if (final_loss) {
    num::NoGradScope ng;
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < p.source.size(); ++i) {
      const auto l = g.sequence_loss(p.source[i], p.theta[i], p.target[i]);
      nll += l.nll.item();
      tokens += l.tokens;
    }
    *final_loss = nll / static_cast<double>(tokens);
  }
  return g;
}

Outcome overfit() {
  const auto pairs = toy_pairs();
  double loss = 0.0;
  const auto g = train_toy(pairs, 300, &loss);
  num::NoGradScope ng;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < pairs.source.size(); ++i)
    exact += gen::greedy_decode(g, g.encode(pairs.source[i], pairs.theta[i]), 32) == pairs.target[i];
  const double share = static_cast<double>(exact) / static_cast<double>(pairs.source.size());
  return {loss < 0.1 && share >= 0.9,
          fmt("after 300 steps L_SIG = %.4f, exact greedy regeneration %zu/%zu", loss, exact, pairs.source.size())};
}

Outcome controlled_ascent() {
  const auto pairs = toy_pairs();
  const auto g = train_toy(pairs, 150, nullptr);
  num::Rng rng(71);
  control::ControlConfig on{0.25, 1.5, 3}, off{0.25, 1.5, 0};
  std::size_t steps = 0, ascended = 0, aborted = 0, identical = 0;
  for (std::size_t c = 0; c < 100; ++c) {
    const auto i = c % pairs.source.size();
    // Varied contexts: full or truncated source, fresh theta, any topic.
    std::vector<TokenId> src = pairs.source[i];
    if (c >= pairs.source.size()) src.resize(1 + rng.index(src.size()));
    const auto theta = random_simplex(3, rng);
    const auto& block = pairs.corpus.topic_words[rng.index(3)];
    std::vector<TokenId> words;
    for (std::size_t w = 0; w < 30 && w < block.size(); ++w)
      if (auto id = pairs.vocab.find(block[w])) words.push_back(*id);
    gen::EncodedSource enc;
    {
      num::NoGradScope ng;
      enc = g.encode(src, theta);
    }
    const auto out = control::controlled_decode(g, enc, words, on, 32);
    for (const auto& st : out.trace.steps) {
      ++steps;
      aborted += st.aborted;
      ascended += !st.aborted && st.loglik_after >= st.loglik_before;
    }
    num::NoGradScope ng;
    const auto plain = control::controlled_decode(g, enc, words, off, 32);
    bool same = plain.tokens == gen::greedy_decode(g, enc, 32);
    for (const auto& st : plain.trace.steps) same = same && st.loglik_after == st.loglik_before;
    identical += same;
  }
  const double share = static_cast<double>(ascended) / static_cast<double>(std::max<std::size_t>(steps, 1));
  return {share >= 0.95 && identical == 100,
          fmt("ascent at %zu/%zu steps (%.1f%%, %zu aborted counted as failures); n_iter=0 identical to greedy on "
              "%zu/100 contexts",
              ascended, steps, 100.0 * share, aborted, identical)};
}

// ---------------------------------------------------------------------------
// 8-10. pipeline runs on the synthetic corpus

// Scaled-down pipeline settings for the synthetic corpus. Its documents are
// short random word draws, so the similarity filter is disabled.
Config synth_config(std::uint64_t seed) {
  Config c;
  c.seed = seed;
  c.num_topics = 3;
  c.max_input_tokens = 64;
  c.lr_sig = 1e-3;
  c.joint_epochs = 10;
  c.ntm_pretrain_epochs = 100;
  c.min_similarity = 0.0;
  c.bow_vocab_size = 1000;
  return c;
}

std::vector<std::string> config_flags(const Config& c, const std::vector<std::string>& keys) {
  std::vector<std::string> flags;
  for (const auto& k : keys) {
    flags.push_back("--" + dash_case(k));
    flags.push_back(get_config_value(c, k));
  }
  return flags;
}

const std::vector<std::string> kSynthKeys = {"seed",        "num_topics",          "max_input_tokens",
                                             "lr_sig",      "joint_epochs",        "ntm_pretrain_epochs",
                                             "min_similarity", "bow_vocab_size"};

Outcome ablation() {
  double full_sum = 0.0, off_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    synth::SynthOptions so;
    so.users = 100;
    so.seed = seed;
    const auto corpus = synth::generate(so);
    auto cfg = synth_config(seed);
    const auto backend = train::make_backend(cfg, corpus.records);
    const auto kept = corpus::filter_records(corpus.records, cfg.filter_options(), *backend);
    const auto split = corpus::split_records(kept, cfg.split_ratios(), seed);
    double rl[2];
    for (int full = 1; full >= 0; --full) {
      cfg.selection = cfg.tpee = cfg.twed = full == 1;
      rl[full] = eval::run_experiment(cfg, split).report.mean.rl;
    }
    full_sum += rl[1];
    off_sum += rl[0];
    per_seed += fmt("%sseed %llu %.3f vs %.3f", seed == 1 ? "" : ", ", static_cast<unsigned long long>(seed), rl[1],
                    rl[0]);
  }
  return {full_sum / 3 >= off_sum / 3,
          fmt("mean R-L full %.4f vs all-off %.4f (%s)", full_sum / 3, off_sum / 3, per_seed.c_str())};
}

bool prepare_synth(const fs::path& dir, const Config& cfg, std::size_t users) {
  return cli({"synth", "--out", (dir / "synth").string(), "--users", std::to_string(users), "--seed",
              std::to_string(cfg.seed)}) == 0 &&
         cli([&] {
           std::vector<std::string> a = {"prepare", "--input", (dir / "synth/corpus.jsonl").string(), "--out",
                                         (dir / "data").string()};
           for (auto& f : config_flags(cfg, kSynthKeys)) a.push_back(f);
           return a;
         }()) == 0;
}

Outcome determinism() {
  const auto cfg = synth_config(7);
  std::vector<fs::path> dirs;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    const auto dir = scratch(name);
    dirs.push_back(dir);
    if (!prepare_synth(dir, cfg, 100)) return {false, "synth/prepare failed"};
    std::vector<std::string> train = {"train", "--data", (dir / "data").string(), "--out", (dir / "run").string()};
    for (auto& f : config_flags(cfg, kSynthKeys)) train.push_back(f);
    if (cli(train) != 0) return {false, "train failed"};
    if (cli({"evaluate", "--run", (dir / "run").string(), "--data", (dir / "data").string(), "--out",
             (dir / "eval").string()}) != 0)
      return {false, "evaluate failed"};
  }
  std::vector<std::string> differing;
  for (const char* f : {"data/train.jsonl", "data/test.jsonl", "run/checkpoint.ckpt", "run/train_log.csv",
                        "eval/metrics.json", "eval/samples.csv", "eval/predictions.jsonl"}) {
    const auto a = slurp(dirs[0] / f);
    if (a.empty() || a != slurp(dirs[1] / f)) differing.push_back(f);
  }
  const auto metrics = nlohmann::json::parse(slurp(dirs[0] / "eval/metrics.json"));
  std::string detail = fmt("checkpoint %ju bytes; R-L %.4f", static_cast<std::uintmax_t>(fs::file_size(dirs[0] / "run/checkpoint.ckpt")),
                           metrics["rl"].get<double>());
  for (const auto& d : differing) detail += "; differs: " + d;
  for (const auto& d : dirs) fs::remove_all(d);
  return {differing.empty(), detail};
}

// Parses a sweep CSV and checks its shape against the requested grid.
std::string check_sweep_csv(const fs::path& path, const std::string& axis, const std::vector<std::size_t>& values) {
  std::istringstream in(slurp(path));
  std::string line;
  if (!std::getline(in, line) || line != "axis,value,status,samples,r1,r2,rl,error") return "bad header";
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) return "row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells";
    if (row >= values.size() || cells[0] != axis || cells[1] != std::to_string(values[row]))
      return "unexpected row " + line;
    if (cells[2] != "ok") return "leg " + cells[1] + " failed: " + cells[7];
    if (std::stoul(cells[3]) == 0) return "leg " + cells[1] + " scored no samples";
    for (int k = 4; k < 7; ++k) {
      const double v = std::stod(cells[k]);
      if (!(v >= 0.0 && v <= 1.0)) return "score out of range in " + line;
    }
    ++row;
  }
  return row == values.size() ? "" : "expected " + std::to_string(values.size()) + " rows, got " + std::to_string(row);
}

Outcome sweep_grids() {
  auto cfg = synth_config(3);
  cfg.joint_epochs = 3;
  const auto dir = scratch("sweep");
  if (!prepare_synth(dir, cfg, 100)) return {false, "synth/prepare failed"};
  std::string detail;
  bool pass = true;
  for (const auto& [axis, grid] : {std::pair{std::string("K"), std::vector<std::size_t>(std::begin(eval::kTopicGrid), std::end(eval::kTopicGrid))},
                                   std::pair{std::string("L"), std::vector<std::size_t>(std::begin(eval::kPromptGrid), std::end(eval::kPromptGrid))}}) {
    std::vector<std::string> args = {"sweep", "--axis", axis, "--data", (dir / "data").string(), "--out",
                                     (dir / axis).string()};
    for (auto& f : config_flags(cfg, kSynthKeys)) args.push_back(f);
    const int code = cli(args);
    const auto problem = code == 0 ? check_sweep_csv(dir / axis / "sweep.csv", axis, grid) : "exit " + std::to_string(code);
    pass = pass && problem.empty();
    detail += (detail.empty() ? "" : "; ") + axis + ": " + (problem.empty() ? std::to_string(grid.size()) + " legs ok" : problem);
  }
  fs::remove_all(dir);
  return {pass, detail};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient checks", 120, gradient_checks},
      {2, "simplex checks", 60, simplex_checks},
      {3, "selection re-simulation", 60, selection_equivalence},
      {4, "ROUGE oracle", 60, rouge_oracle},
      {5, "topic recovery", 600, topic_recovery},
      {6, "overfit memorization", 600, overfit},
      {7, "controlled-decoding ascent", 300, controlled_ascent},
      {8, "ablation ordering", 1800, ablation},
      {9, "determinism", 1200, determinism},
      {10, "sweep grids", 3600, sweep_grids},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cerr << "usage: utged_acceptance [criterion 1-10 ...]\n";
      return 1;
    }
    wanted.insert(id);
  }
  bool all_pass = true;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (pass ? "PASS" : "FAIL") << " - " << o.detail
              << fmt(" [%.1fs of %.0fs%s]", secs, c.limit_seconds, in_time ? "" : ", over budget") << std::endl;
  }
  return all_pass ? 0 : 1;
}
