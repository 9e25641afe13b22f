#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <span>
#include <vector>

#include "utged/corpus.hpp"
#include "utged/numeric/random.hpp"
#include "utged/numeric/tensor.hpp"

// Pre-LN transformer encoder-decoder with a topic prompt prefix on the
// encoder input and a tied output projection.
namespace utged::gen {

using corpus::TokenId;

struct GeneratorConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ff_hidden = 512;
  std::size_t num_topics = 100;
  std::size_t prompt_length = 7;
  std::size_t prompt_hidden = 256;
  std::size_t max_input_tokens = 1024;
  std::size_t max_output_tokens = 32;
  bool tpee = true;

  // 6 + 6 layers; same widths.
  static GeneratorConfig full_shape(std::size_t vocab_size, std::size_t num_topics);
};

struct EncodedSource {
  num::Tensor h_e;  // [(L + M) x d]; the first prompt_rows rows are prompts
  std::size_t prompt_rows = 0;
  std::size_t rows() const { return h_e.rows(); }
};

// Cross-attention keys and values of every decoder layer, derived from H_E.
struct CrossMemory {
  std::vector<num::Tensor> k, v;  // [rows x d] per layer
};

// Self-attention keys and values of every decoder layer for the positions
// decoded so far. Tensors are never modified in place, so copies are cheap
// and safe to branch from.
struct DecoderState {
  std::vector<num::Tensor> k, v;  // [t x d] per layer; undefined while t == 0
  std::size_t length = 0;
};

struct StepOutput {
  num::Tensor logits;  // [1 x V]
  num::Tensor hidden;  // final decoder state o_{t+1}, [1 x d]
  std::vector<num::Tensor> k, v;  // this position's keys/values per layer, [1 x d]
};

class Generator {
 public:
  // Embedding rows ~ N(0, 0.02); other matrices Xavier; biases zero;
  // layer-norm gains one.
  Generator(const GeneratorConfig& config, num::Rng& rng);

  const GeneratorConfig& config() const { return config_; }
  num::ParameterList parameters() const;
  // Deep copy with gradient tracking off, for inference-time gradients that
  // must not reach the weights.
  Generator frozen() const;
  const num::Tensor& embedding_table() const { return embed_; }

  // theta: [1 x K]. Returns [L x d].
  num::Tensor topic_prompt(const num::Tensor& theta) const;

  // theta may be undefined only when TPEE is off. Throws DimensionError when
  // the source exceeds max_input_tokens or an id is out of range.
  EncodedSource encode(std::span<const TokenId> source, const num::Tensor& theta) const;
  // Same with explicit prompt rows [L' x d]; undefined means no prefix.
  EncodedSource encode_with_prompt(std::span<const TokenId> source, const num::Tensor& prompt) const;

  // Teacher-forced logits [n x V] for decoder inputs (BOS-prefixed).
  num::Tensor decode(const num::Tensor& h_e, std::span<const TokenId> inputs) const;

  CrossMemory cross_memory(const num::Tensor& h_e) const;
  // One incremental decoder step at position state.length. Does not modify
  // the state; see append().
  StepOutput step(const CrossMemory& memory, const DecoderState& state, TokenId last) const;
  static void append(DecoderState& state, const StepOutput& out);
  DecoderState empty_state() const;

  // Summed negative log-likelihood of target + EOS given BOS + target, and
  // the number of predicted tokens. Throws UsageError on an empty target.
  struct SequenceLoss {
    num::Tensor nll;
    std::size_t tokens = 0;
  };
  SequenceLoss sequence_loss(std::span<const TokenId> source, const num::Tensor& theta,
                             std::span<const TokenId> target) const;

 private:
  struct Attention {
    num::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FeedForward {
    num::Tensor w1, b1, w2, b2;
  };
  struct Norm {
    num::Tensor gain, bias;
  };
  struct EncoderLayer {
    Norm ln1, ln2;
    Attention attn;
    FeedForward ff;
  };
  struct DecoderLayer {
    Norm ln1, ln2, ln3;
    Attention self_attn, cross_attn;
    FeedForward ff;
  };

  void visit(const std::function<void(const std::string&, num::Tensor&)>& fn);
  num::Tensor attend(const Attention& a, const num::Tensor& q_in, const num::Tensor& k, const num::Tensor& v,
                     const num::Tensor* mask) const;
  num::Tensor feed_forward(const FeedForward& f, const num::Tensor& x) const;
  num::Tensor embed_tokens(std::span<const TokenId> ids, std::size_t first_position) const;
  num::Tensor output_logits(const num::Tensor& hidden) const;

  GeneratorConfig config_;
  num::Tensor embed_;
  num::Tensor prompt_w1_, prompt_b1_, prompt_w2_, prompt_b2_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Norm enc_final_, dec_final_;
};

// Sinusoidal encodings for positions [first, first + n), shape [n x d].
num::Tensor positional_encoding(std::size_t first, std::size_t n, std::size_t d);

// Highest-scoring id, never <pad> or <s>; ties go to the lower id.
TokenId argmax_token(std::span<const double> logits);

struct DecodeOptions {
  std::size_t max_tokens = 32;
  std::size_t beam_width = 1;  // 1 = greedy
};

// Generated ids without BOS/EOS.
std::vector<TokenId> greedy_decode(const Generator& model, const EncodedSource& source, std::size_t max_tokens);
std::vector<TokenId> beam_decode(const Generator& model, const EncodedSource& source, std::size_t max_tokens,
                                 std::size_t beam_width);
std::vector<TokenId> decode(const Generator& model, const EncodedSource& source, const DecodeOptions& options);

}  // namespace utged::gen
