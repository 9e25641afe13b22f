#include <algorithm>
#include <cmath>
#include <limits>

#include "utged/error.hpp"
#include "utged/generator.hpp"
#include "utged/numeric/ops.hpp"

namespace utged::gen {

using corpus::Vocabulary;

TokenId argmax_token(std::span<const double> logits) {
  TokenId best = Vocabulary::kEos;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i == Vocabulary::kPad || i == Vocabulary::kBos) continue;
    if (logits[i] > best_v) {
      best_v = logits[i];
      best = static_cast<TokenId>(i);
    }
  }
  return best;
}

std::vector<TokenId> greedy_decode(const Generator& model, const EncodedSource& source, std::size_t max_tokens) {
  num::NoGradScope no_grad;
  const CrossMemory mem = model.cross_memory(source.h_e);
  DecoderState state = model.empty_state();
  std::vector<TokenId> out;
  TokenId last = Vocabulary::kBos;
  while (out.size() < max_tokens) {
    const StepOutput step = model.step(mem, state, last);
    const TokenId next = argmax_token(step.logits.values());
    if (next == Vocabulary::kEos) break;
    Generator::append(state, step);
    out.push_back(next);
    last = next;
  }
  return out;
}

std::vector<TokenId> beam_decode(const Generator& model, const EncodedSource& source, std::size_t max_tokens,
                                 std::size_t beam_width) {
  if (beam_width < 1) throw UsageError("beam width must be at least 1");
  num::NoGradScope no_grad;
  const CrossMemory mem = model.cross_memory(source.h_e);

  struct Beam {
    std::vector<TokenId> tokens;
    DecoderState state;
    double score = 0.0;
  };
  std::vector<Beam> live = {{{}, model.empty_state(), 0.0}};
  std::vector<Beam> done;

  for (std::size_t t = 0; t < max_tokens && !live.empty(); ++t) {
    struct Cand {
      std::size_t beam;
      TokenId token;
      double score;
      StepOutput step;
    };
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const TokenId last = live[b].tokens.empty() ? Vocabulary::kBos : live[b].tokens.back();
      StepOutput step = model.step(mem, live[b].state, last);
      const auto logp = num::log_softmax(step.logits);
      const auto lv = logp.values();
      for (std::size_t i = 0; i < lv.size(); ++i) {
        if (i == Vocabulary::kPad || i == Vocabulary::kBos) continue;
        cands.push_back({b, static_cast<TokenId>(i), live[b].score + lv[i], step});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
    std::vector<Beam> next;
    for (const auto& c : cands) {
      if (next.size() + done.size() >= beam_width) break;
      Beam nb{live[c.beam].tokens, live[c.beam].state, c.score};
      if (c.token == Vocabulary::kEos) {
        done.push_back(std::move(nb));
        continue;
      }
      Generator::append(nb.state, c.step);
      nb.tokens.push_back(c.token);
      next.push_back(std::move(nb));
    }
    live = std::move(next);
  }
  for (auto& b : live) done.push_back(std::move(b));
  // Length-normalized log-probability; earlier hypotheses win ties.
  auto norm = [](const Beam& b) { return b.score / static_cast<double>(b.tokens.size() + 1); };
  const auto best = std::max_element(done.begin(), done.end(),
                                     [&](const Beam& a, const Beam& b) { return norm(a) < norm(b); });
  return best->tokens;
}

std::vector<TokenId> decode(const Generator& model, const EncodedSource& source, const DecodeOptions& options) {
  if (options.beam_width <= 1) return greedy_decode(model, source, options.max_tokens);
  return beam_decode(model, source, options.max_tokens, options.beam_width);
}

}  // namespace utged::gen
