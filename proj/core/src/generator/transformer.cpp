#include <cmath>

#include "utged/error.hpp"
#include "utged/generator.hpp"
#include "utged/numeric/ops.hpp"

namespace utged::gen {

using num::Tensor;

namespace {

Tensor ones(std::size_t n) { return Tensor::full({n}, 1.0, true); }
Tensor zeros(std::size_t n) { return Tensor::zeros({n}, true); }

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return num::add_row(num::matmul(x, w), b); }

Tensor causal_mask(std::size_t n) {
  auto m = Tensor::zeros({n, n});
  auto v = m.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = -1e9;
  return m;
}

}  // namespace

GeneratorConfig GeneratorConfig::full_shape(std::size_t vocab_size, std::size_t num_topics) {
  GeneratorConfig c;
  c.vocab_size = vocab_size;
  c.num_topics = num_topics;
  c.encoder_layers = 6;
  c.decoder_layers = 6;
  return c;
}

Tensor positional_encoding(std::size_t first, std::size_t n, std::size_t d) {
  auto pe = Tensor::zeros({n, d});
  auto v = pe.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double pos = static_cast<double>(first + r);
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      v[r * d + i] = std::sin(angle);
      if (i + 1 < d) v[r * d + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

Generator::Generator(const GeneratorConfig& config, num::Rng& rng) : config_(config) {
  const auto d = config.d_model;
  if (config.vocab_size <= corpus::Vocabulary::kNumSpecials) throw ConfigError("generator vocabulary is too small");
  if (d == 0 || config.heads == 0 || d % config.heads != 0) throw ConfigError("d_model must be a positive multiple of heads");
  if (config.tpee && (config.prompt_length == 0 || config.num_topics < 2)) {
    throw ConfigError("topic prompts need prompt_length >= 1 and at least 2 topics");
  }
  embed_ = num::normal_tensor({config.vocab_size, d}, 0.02, rng);

  const std::size_t k = std::max<std::size_t>(config.num_topics, 1);
  prompt_w1_ = num::xavier_tensor(k, config.prompt_hidden, rng);
  prompt_b1_ = zeros(config.prompt_hidden);
  prompt_w2_ = num::xavier_tensor(config.prompt_hidden, d * config.prompt_length, rng);
  prompt_b2_ = zeros(d * config.prompt_length);

  auto attention = [&] {
    Attention a;
    a.wq = num::xavier_tensor(d, d, rng);
    a.bq = zeros(d);
    a.wk = num::xavier_tensor(d, d, rng);
    a.bk = zeros(d);
    a.wv = num::xavier_tensor(d, d, rng);
    a.bv = zeros(d);
    a.wo = num::xavier_tensor(d, d, rng);
    a.bo = zeros(d);
    return a;
  };
  auto ff = [&] {
    FeedForward f;
    f.w1 = num::xavier_tensor(d, config.ff_hidden, rng);
    f.b1 = zeros(config.ff_hidden);
    f.w2 = num::xavier_tensor(config.ff_hidden, d, rng);
    f.b2 = zeros(d);
    return f;
  };
  auto norm = [&] { return Norm{ones(d), zeros(d)}; };

  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    EncoderLayer e;
    e.ln1 = norm();
    e.attn = attention();
    e.ln2 = norm();
    e.ff = ff();
    encoder_.push_back(std::move(e));
  }
  for (std::size_t l = 0; l < config.decoder_layers; ++l) {
    DecoderLayer dl;
    dl.ln1 = norm();
    dl.self_attn = attention();
    dl.ln2 = norm();
    dl.cross_attn = attention();
    dl.ln3 = norm();
    dl.ff = ff();
    decoder_.push_back(std::move(dl));
  }
  enc_final_ = norm();
  dec_final_ = norm();
}

void Generator::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("embed", embed_);
  fn("prompt/w1", prompt_w1_);
  fn("prompt/b1", prompt_b1_);
  fn("prompt/w2", prompt_w2_);
  fn("prompt/b2", prompt_b2_);
  auto attn = [&](const std::string& pre, Attention& a) {
    fn(pre + "wq", a.wq);
    fn(pre + "bq", a.bq);
    fn(pre + "wk", a.wk);
    fn(pre + "bk", a.bk);
    fn(pre + "wv", a.wv);
    fn(pre + "bv", a.bv);
    fn(pre + "wo", a.wo);
    fn(pre + "bo", a.bo);
  };
  auto ff = [&](const std::string& pre, FeedForward& f) {
    fn(pre + "w1", f.w1);
    fn(pre + "b1", f.b1);
    fn(pre + "w2", f.w2);
    fn(pre + "b2", f.b2);
  };
  auto norm = [&](const std::string& pre, Norm& n) {
    fn(pre + "gain", n.gain);
    fn(pre + "bias", n.bias);
  };
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const std::string pre = "enc" + std::to_string(l) + "/";
    norm(pre + "ln1/", encoder_[l].ln1);
    attn(pre + "attn/", encoder_[l].attn);
    norm(pre + "ln2/", encoder_[l].ln2);
    ff(pre + "ff/", encoder_[l].ff);
  }
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const std::string pre = "dec" + std::to_string(l) + "/";
    norm(pre + "ln1/", decoder_[l].ln1);
    attn(pre + "self/", decoder_[l].self_attn);
    norm(pre + "ln2/", decoder_[l].ln2);
    attn(pre + "cross/", decoder_[l].cross_attn);
    norm(pre + "ln3/", decoder_[l].ln3);
    ff(pre + "ff/", decoder_[l].ff);
  }
  norm("enc_final/", enc_final_);
  norm("dec_final/", dec_final_);
}

num::ParameterList Generator::parameters() const {
  num::ParameterList p;
  const_cast<Generator*>(this)->visit([&](const std::string& name, Tensor& t) { p.push_back({name, t}); });
  return p;
}

Generator Generator::frozen() const {
  Generator copy = *this;
  copy.visit([](const std::string&, Tensor& t) { t = t.detach(); });
  return copy;
}

Tensor Generator::topic_prompt(const Tensor& theta) const {
  if (theta.numel() != config_.num_topics) {
    throw DimensionError("topic prompt: theta " + num::shape_to_string(theta.shape()) + " for " +
                         std::to_string(config_.num_topics) + " topics");
  }
  const Tensor row = num::reshape(theta, {1, config_.num_topics});
  const Tensor h = num::tanh(affine(row, prompt_w1_, prompt_b1_));
  return num::reshape(affine(h, prompt_w2_, prompt_b2_), {config_.prompt_length, config_.d_model});
}

Tensor Generator::embed_tokens(std::span<const TokenId> ids, std::size_t first_position) const {
  const auto e = num::scale(num::embedding(embed_, ids), std::sqrt(static_cast<double>(config_.d_model)));
  return num::add(e, positional_encoding(first_position, ids.size(), config_.d_model));
}

Tensor Generator::attend(const Attention& a, const Tensor& q_in, const Tensor& k, const Tensor& v,
                         const Tensor* mask) const {
  const std::size_t d = config_.d_model, dh = d / config_.heads;
  const Tensor q = affine(q_in, a.wq, a.bq);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Tensor qh = num::slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor kh = num::slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor vh = num::slice(v, 1, h * dh, (h + 1) * dh);
    Tensor scores = num::scale(num::matmul_nt(qh, kh), inv);
    if (mask) scores = num::add(scores, *mask);
    heads.push_back(num::matmul(num::softmax(scores, -1), vh));
  }
  const Tensor joined = config_.heads == 1 ? heads[0] : num::concat(heads, 1);
  return affine(joined, a.wo, a.bo);
}

Tensor Generator::feed_forward(const FeedForward& f, const Tensor& x) const {
  return affine(num::gelu(affine(x, f.w1, f.b1)), f.w2, f.b2);
}

Tensor Generator::output_logits(const Tensor& hidden) const { return num::matmul_nt(hidden, embed_); }

EncodedSource Generator::encode(std::span<const TokenId> source, const Tensor& theta) const {
  if (!config_.tpee) return encode_with_prompt(source, Tensor());
  if (!theta.defined()) throw UsageError("encode: topic prompts need a topic mixture");
  return encode_with_prompt(source, topic_prompt(theta));
}

EncodedSource Generator::encode_with_prompt(std::span<const TokenId> source, const Tensor& prompt) const {
  if (source.size() > config_.max_input_tokens) {
    throw DimensionError("encoder input of " + std::to_string(source.size()) + " tokens exceeds the limit of " +
                         std::to_string(config_.max_input_tokens));
  }
  std::vector<Tensor> parts;
  EncodedSource out;
  if (prompt.defined()) {
    if (prompt.rank() != 2 || prompt.cols() != config_.d_model) {
      throw DimensionError("encode: prompt " + num::shape_to_string(prompt.shape()) + " is not [L x d]");
    }
    parts.push_back(prompt);
    out.prompt_rows = prompt.rows();
  }
  if (!source.empty()) parts.push_back(embed_tokens(source, 0));
  if (parts.empty()) throw UsageError("encode: empty source with topic prompts disabled");
  Tensor x = parts.size() == 1 ? parts[0] : num::concat(parts, 0);
  for (const auto& layer : encoder_) {
    const Tensor h = num::layer_norm(x, layer.ln1.gain, layer.ln1.bias);
    const Tensor k = affine(h, layer.attn.wk, layer.attn.bk);
    const Tensor v = affine(h, layer.attn.wv, layer.attn.bv);
    x = num::add(x, attend(layer.attn, h, k, v, nullptr));
    x = num::add(x, feed_forward(layer.ff, num::layer_norm(x, layer.ln2.gain, layer.ln2.bias)));
  }
  out.h_e = num::layer_norm(x, enc_final_.gain, enc_final_.bias);
  return out;
}

CrossMemory Generator::cross_memory(const Tensor& h_e) const {
  CrossMemory m;
  for (const auto& layer : decoder_) {
    m.k.push_back(affine(h_e, layer.cross_attn.wk, layer.cross_attn.bk));
    m.v.push_back(affine(h_e, layer.cross_attn.wv, layer.cross_attn.bv));
  }
  return m;
}

Tensor Generator::decode(const Tensor& h_e, std::span<const TokenId> inputs) const {
  if (inputs.empty()) throw UsageError("decode: no decoder inputs");
  const CrossMemory mem = cross_memory(h_e);
  const Tensor mask = causal_mask(inputs.size());
  Tensor x = embed_tokens(inputs, 0);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    const Tensor h = num::layer_norm(x, layer.ln1.gain, layer.ln1.bias);
    const Tensor k = affine(h, layer.self_attn.wk, layer.self_attn.bk);
    const Tensor v = affine(h, layer.self_attn.wv, layer.self_attn.bv);
    x = num::add(x, attend(layer.self_attn, h, k, v, &mask));
    const Tensor h2 = num::layer_norm(x, layer.ln2.gain, layer.ln2.bias);
    x = num::add(x, attend(layer.cross_attn, h2, mem.k[l], mem.v[l], nullptr));
    x = num::add(x, feed_forward(layer.ff, num::layer_norm(x, layer.ln3.gain, layer.ln3.bias)));
  }
  return output_logits(num::layer_norm(x, dec_final_.gain, dec_final_.bias));
}

DecoderState Generator::empty_state() const {
  DecoderState s;
  s.k.resize(decoder_.size());
  s.v.resize(decoder_.size());
  return s;
}

StepOutput Generator::step(const CrossMemory& memory, const DecoderState& state, TokenId last) const {
  if (last >= config_.vocab_size) throw DimensionError("decode step: token id " + std::to_string(last) + " out of range");
  if (memory.k.size() != decoder_.size() || state.k.size() != decoder_.size()) {
    throw DimensionError("decode step: state does not match the decoder depth");
  }
  const TokenId ids[] = {last};
  Tensor x = embed_tokens(ids, state.length);
  StepOutput out;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    const Tensor h = num::layer_norm(x, layer.ln1.gain, layer.ln1.bias);
    const Tensor k_new = affine(h, layer.self_attn.wk, layer.self_attn.bk);
    const Tensor v_new = affine(h, layer.self_attn.wv, layer.self_attn.bv);
    Tensor k = k_new, v = v_new;
    if (state.length > 0) {
      const Tensor kp[] = {state.k[l], k_new};
      const Tensor vp[] = {state.v[l], v_new};
      k = num::concat(kp, 0);
      v = num::concat(vp, 0);
    }
    out.k.push_back(k_new);
    out.v.push_back(v_new);
    x = num::add(x, attend(layer.self_attn, h, k, v, nullptr));
    const Tensor h2 = num::layer_norm(x, layer.ln2.gain, layer.ln2.bias);
    x = num::add(x, attend(layer.cross_attn, h2, memory.k[l], memory.v[l], nullptr));
    x = num::add(x, feed_forward(layer.ff, num::layer_norm(x, layer.ln3.gain, layer.ln3.bias)));
  }
  out.hidden = num::layer_norm(x, dec_final_.gain, dec_final_.bias);
  out.logits = output_logits(out.hidden);
  return out;
}

void Generator::append(DecoderState& state, const StepOutput& out) {
  for (std::size_t l = 0; l < state.k.size(); ++l) {
    if (state.length == 0) {
      state.k[l] = out.k[l];
      state.v[l] = out.v[l];
    } else {
      const Tensor kp[] = {state.k[l], out.k[l]};
      const Tensor vp[] = {state.v[l], out.v[l]};
      state.k[l] = num::concat(kp, 0);
      state.v[l] = num::concat(vp, 0);
    }
  }
  ++state.length;
}

Generator::SequenceLoss Generator::sequence_loss(std::span<const TokenId> source, const Tensor& theta,
                                                 std::span<const TokenId> target) const {
  if (target.empty()) throw UsageError("generation loss: empty target");
  std::vector<TokenId> inputs{corpus::Vocabulary::kBos};
  inputs.insert(inputs.end(), target.begin(), target.end());
  std::vector<TokenId> targets(target.begin(), target.end());
  targets.push_back(corpus::Vocabulary::kEos);
  const auto enc = encode(source, theta);
  return {num::nll_loss(decode(enc.h_e, inputs), targets), targets.size()};
}

}  // namespace utged::gen
