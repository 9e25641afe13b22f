#include <benchmark/benchmark.h>

#include "utged/control.hpp"
#include "utged/evaluation.hpp"
#include "utged/generator.hpp"
#include "utged/numeric/ops.hpp"
#include "utged/numeric/optim.hpp"
#include "utged/selection.hpp"
#include "utged/similarity.hpp"
#include "utged/synth.hpp"

using namespace utged;

namespace {

// One synthetic user history of `docs` documents.
std::vector<std::string> history(std::size_t docs) {
  synth::SynthOptions so;
  so.users = 1;
  so.min_docs = so.max_docs = docs;
  return synth::generate(so).records.front().history;
}

gen::Generator toy_generator(std::size_t vocab) {
  gen::GeneratorConfig c;
  c.vocab_size = vocab;
  c.num_topics = 3;
  num::Rng rng(5);
  return gen::Generator(c, rng);
}

std::vector<corpus::TokenId> ids(std::size_t n, std::size_t vocab, num::Rng& rng) {
  std::vector<corpus::TokenId> out(n);
  for (auto& t : out) t = static_cast<corpus::TokenId>(4 + rng.index(vocab - 4));
  return out;
}

}  // namespace

static void BM_SelectHistory(benchmark::State& state) {
  const auto docs = history(static_cast<std::size_t>(state.range(0)));
  std::vector<corpus::Tokens> tokens;
  for (const auto& d : docs) tokens.push_back(corpus::tokenize(d));
  const auto tfidf = sim::TfidfBackend::fit(tokens);
  selection::SelectionOptions opts;
  for (auto _ : state) benchmark::DoNotOptimize(selection::build_source(docs, tfidf, opts));
}
BENCHMARK(BM_SelectHistory)->Arg(30)->Arg(100)->Unit(benchmark::kMicrosecond);

static void BM_Rouge(benchmark::State& state) {
  const auto docs = history(2);
  const auto a = corpus::tokenize(docs[0]), b = corpus::tokenize(docs[1]);
  for (auto _ : state) benchmark::DoNotOptimize(eval::rouge(a, b));
}
BENCHMARK(BM_Rouge);

// Forward, backward and AdamW update on 8 pairs at the default toy shape.
static void BM_GeneratorTrainStep(benchmark::State& state) {
  const std::size_t vocab = 400;
  auto g = toy_generator(vocab);
  const auto params = g.parameters();
  num::AdamW opt(params, {});
  num::Rng rng(6);
  const auto src = ids(static_cast<std::size_t>(state.range(0)), vocab, rng);
  const auto tgt = ids(12, vocab, rng);
  const auto theta = num::Tensor::from({1, 3}, {0.2, 0.3, 0.5});
  for (auto _ : state) {
    num::Tape tape;
    num::TapeScope scope(tape);
    std::vector<num::Tensor> losses;
    for (int b = 0; b < 8; ++b) losses.push_back(g.sequence_loss(src, theta, tgt).nll);
    num::zero_grad(params);
    tape.backward(num::sum(num::concat(losses, 0)));
    opt.step();
  }
}
BENCHMARK(BM_GeneratorTrainStep)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_GreedyDecode(benchmark::State& state) {
  const std::size_t vocab = 400;
  const auto g = toy_generator(vocab);
  num::Rng rng(7);
  const auto src = ids(64, vocab, rng);
  num::NoGradScope ng;
  const auto enc = g.encode(src, num::Tensor::from({1, 3}, {0.2, 0.3, 0.5}));
  for (auto _ : state) benchmark::DoNotOptimize(gen::greedy_decode(g, enc, 32));
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

static void BM_ControlledDecode(benchmark::State& state) {
  const std::size_t vocab = 400;
  const auto g = toy_generator(vocab);
  num::Rng rng(8);
  const auto src = ids(64, vocab, rng);
  const auto words = ids(30, vocab, rng);
  gen::EncodedSource enc;
  {
    num::NoGradScope ng;
    enc = g.encode(src, num::Tensor::from({1, 3}, {0.2, 0.3, 0.5}));
  }
  control::ControlConfig cc;
  cc.iterations = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(control::controlled_decode(g, enc, words, cc, 32));
}
BENCHMARK(BM_ControlledDecode)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);
