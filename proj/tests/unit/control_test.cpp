#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gradcheck.hpp"
#include "utged/control.hpp"
#include "utged/error.hpp"
#include "utged/numeric/ops.hpp"

namespace utged::control {
namespace {

using num::Tensor;

gen::GeneratorConfig mini_config() {
  gen::GeneratorConfig c;
  c.vocab_size = 20;
  c.d_model = 16;
  c.heads = 2;
  c.ff_hidden = 32;
  c.num_topics = 3;
  c.prompt_length = 2;
  c.prompt_hidden = 8;
  c.max_input_tokens = 64;
  return c;
}

gen::EncodedSource encode(const gen::Generator& g, std::vector<TokenId> src) {
  num::NoGradScope ng;
  return g.encode(src, Tensor::from({1, 3}, {0.2, 0.5, 0.3}));
}

TEST(AttributeLoglik, Identities) {
  std::vector<TokenId> all(100);
  for (TokenId i = 0; i < 100; ++i) all[i] = i;
  auto logits = Tensor::zeros({1, 100});
  EXPECT_NEAR(attribute_loglik(logits, all).item(), 0.0, 1e-12);
  std::vector<TokenId> ten(all.begin(), all.begin() + 10);
  EXPECT_NEAR(attribute_loglik(logits, ten).item(), std::log(0.1), 1e-12);

  const std::vector<double> p = {0.5, 0.5, 0.0};
  const TokenId none[] = {2};
  EXPECT_NEAR(attribute_loglik_value(p, none), std::log(1e-12), 1e-9);
  EXPECT_THROW(attribute_loglik(logits, {}), UsageError);
}

TEST(AttributeLoglik, GradientWrtLogits) {
  num::Rng rng(1);
  auto logits = num::normal_tensor({1, 30}, 1.5, rng, true);
  const std::vector<TokenId> words = {3, 7, 7, 12, 29};
  auto r = testing::grad_check([&] { return attribute_loglik(logits, words); }, {logits});
  EXPECT_LT(r.relative_error, 1e-4);
}

TEST(MapTopicWords, SurfaceMatchingDropsUnknown) {
  auto bow = corpus::Vocabulary::from_tokens(std::vector<std::string>{"cats", "dogs", "zebra"});
  auto gen_vocab = corpus::Vocabulary::from_tokens(std::vector<std::string>{"<sep>", "dogs", "cats"});
  std::size_t dropped = 0;
  const std::uint32_t idx[] = {0, 2, 1, 0};
  auto ids = map_topic_words(idx, bow, gen_vocab, &dropped);
  EXPECT_EQ(ids, (std::vector<TokenId>{6, 5}));
  EXPECT_EQ(dropped, 1u);
}

TEST(ControlledDecode, ZeroIterationsMatchesGreedyExactly) {
  num::Rng rng(2);
  gen::Generator g(mini_config(), rng);
  const std::vector<TokenId> words = {5, 6, 7};
  for (int i = 0; i < 10; ++i) {
    std::vector<TokenId> src;
    for (int k = 0; k < 6; ++k) src.push_back(static_cast<TokenId>(4 + rng.index(16)));
    auto enc = encode(g, src);
    ControlConfig cfg;
    cfg.iterations = 0;
    auto out = controlled_decode(g, enc, words, cfg, 12);
    EXPECT_EQ(out.tokens, gen::greedy_decode(g, enc, 12));
    for (const auto& s : out.trace.steps) EXPECT_EQ(s.loglik_after, s.loglik_before);
    auto no_words = controlled_decode(g, enc, {}, ControlConfig{}, 12);
    EXPECT_EQ(no_words.tokens, out.tokens);
  }
}

TEST(ControlledDecode, AscentAndTrace) {
  num::Rng rng(3);
  gen::Generator g(mini_config(), rng);
  std::size_t up = 0, total = 0;
  for (int i = 0; i < 20; ++i) {
    std::vector<TokenId> src;
    for (int k = 0; k < 5; ++k) src.push_back(static_cast<TokenId>(4 + rng.index(16)));
    std::vector<TokenId> words;
    for (int k = 0; k < 4; ++k) words.push_back(static_cast<TokenId>(4 + rng.index(16)));
    auto enc = encode(g, src);
    auto out = controlled_decode(g, enc, words, ControlConfig{}, 10);
    const bool ended = out.tokens.size() < 10;
    EXPECT_EQ(out.trace.steps.size(), out.tokens.size() + (ended ? 1 : 0));
    for (std::size_t t = 0; t < out.tokens.size(); ++t) EXPECT_EQ(out.trace.steps[t].token, out.tokens[t]);
    for (const auto& s : out.trace.steps) {
      ++total;
      up += s.loglik_after >= s.loglik_before;
      EXPECT_GT(s.min_ascent_inner, 0.0);
      EXPECT_FALSE(s.aborted);
    }
    // first step perturbs H_E only; later ones add K and V per decoder layer
    EXPECT_EQ(out.trace.steps.front().delta_norms.size(), 1u);
    if (out.trace.steps.size() > 1) EXPECT_EQ(out.trace.steps[1].delta_norms.size(), 5u);
  }
  EXPECT_GE(static_cast<double>(up), 0.95 * static_cast<double>(total));
}

TEST(ControlledDecode, ReproducibleTrace) {
  num::Rng rng(4);
  gen::Generator g(mini_config(), rng);
  auto enc = encode(g, {4, 9, 11, 13});
  const std::vector<TokenId> words = {6, 8};
  auto a = controlled_decode(g, enc, words, ControlConfig{}, 8);
  auto b = controlled_decode(g, enc, words, ControlConfig{}, 8);
  ASSERT_EQ(a.trace.steps.size(), b.trace.steps.size());
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) {
    EXPECT_EQ(a.trace.steps[i].loglik_before, b.trace.steps[i].loglik_before);
    EXPECT_EQ(a.trace.steps[i].loglik_after, b.trace.steps[i].loglik_after);
  }
  std::stringstream ss;
  write_trace_jsonl(ss, a.trace);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(ss, line)) ++lines;
  EXPECT_EQ(lines, a.trace.steps.size());
}

TEST(ControlledDecode, LargeStepSteersTowardWord) {
  num::Rng rng(5);
  gen::Generator g(mini_config(), rng);
  std::size_t base = 0, steered = 0;
  const TokenId w = 9;
  const TokenId words[] = {w};
  ControlConfig strong;
  strong.alpha_step = 2.0;
  for (int i = 0; i < 10; ++i) {
    std::vector<TokenId> src;
    for (int k = 0; k < 5; ++k) src.push_back(static_cast<TokenId>(4 + rng.index(16)));
    auto enc = encode(g, src);
    for (auto t : gen::greedy_decode(g, enc, 10)) base += t == w;
    for (auto t : controlled_decode(g, enc, words, strong, 10).tokens) steered += t == w;
  }
  EXPECT_GE(steered, base);
}

TEST(ControlledDecode, NonFiniteUpdateAbortsAndFallsBack) {
  num::Rng rng(6);
  gen::Generator g(mini_config(), rng);
  auto enc = encode(g, {4, 5, 6});
  ControlConfig wild;
  wild.alpha_step = std::numeric_limits<double>::infinity();
  wild.gamma = 0.0;
  wild.iterations = 3;
  const TokenId words[] = {7};
  auto out = controlled_decode(g, enc, words, wild, 6);
  EXPECT_GT(out.trace.warnings, 0u);
  EXPECT_EQ(out.tokens, gen::greedy_decode(g, enc, 6));
}

TEST(ControlConfig, Validation) {
  ControlConfig c;
  c.alpha_step = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c.alpha_step = 0.25;
  c.gamma = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
}

}  // namespace
}  // namespace utged::control
