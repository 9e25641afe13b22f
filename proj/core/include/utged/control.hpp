#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "utged/corpus.hpp"
#include "utged/generator.hpp"
#include "utged/numeric/tensor.hpp"

// Inference-time steering toward topic words by gradient ascent on the
// decoder and encoder states.
namespace utged::control {

using corpus::TokenId;

struct ControlConfig {
  double alpha_step = 0.25;
  double gamma = 1.5;
  std::size_t iterations = 3;  // 0 disables control
};

void validate(const ControlConfig& config);

// log(sum_{a in A} softmax(logits)[a]), floored at log(1e-12). Differentiable
// in the logits.
num::Tensor attribute_loglik(const num::Tensor& logits, std::span<const TokenId> words);
double attribute_loglik_value(std::span<const double> probs, std::span<const TokenId> words);

// NTM vocabulary indices to generation vocabulary ids by surface string.
// Words missing from the generation vocabulary are dropped and counted.
std::vector<TokenId> map_topic_words(std::span<const std::uint32_t> bow_indices, const corpus::Vocabulary& bow_vocab,
                                     const corpus::Vocabulary& gen_vocab, std::size_t* dropped = nullptr);

struct StepTrace {
  double loglik_before = 0.0;
  double loglik_after = 0.0;
  // L2 norm of the final perturbation per block: H_E first, then K and V of
  // each decoder layer.
  std::vector<double> delta_norms;
  // Smallest <update, raw gradient> seen over all blocks and rounds.
  double min_ascent_inner = 0.0;
  bool aborted = false;
  TokenId token = 0;
};

struct DecodeTrace {
  std::vector<StepTrace> steps;  // one per emitted token, including the final EOS
  std::size_t warnings = 0;      // aborted perturbations
};

struct ControlledOutput {
  std::vector<TokenId> tokens;
  DecodeTrace trace;
};

// Greedy decoding where each step's distribution comes from states
// perturbed by `iterations` rounds of
//   dH <- dH + alpha * grad / ||grad||^gamma
// applied per block, with dH reset at every step. The cache keeps the
// unperturbed keys and values. With iterations == 0 or no topic words this
// is plain greedy decoding.
ControlledOutput controlled_decode(const gen::Generator& model, const gen::EncodedSource& source,
                                   std::span<const TokenId> topic_words, const ControlConfig& config,
                                   std::size_t max_tokens);

// One JSON object per step.
void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace);

}  // namespace utged::control
