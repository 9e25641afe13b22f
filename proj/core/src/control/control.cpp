#include "utged/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "utged/error.hpp"
#include "utged/numeric/ops.hpp"

namespace utged::control {

using num::Tensor;

namespace {

constexpr double kProbFloor = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void validate(const ControlConfig& c) {
  if (!(c.alpha_step > 0.0)) throw ConfigError("control step size must be positive");
  if (!(c.gamma >= 0.0)) throw ConfigError("control normalization exponent must be non-negative");
}

Tensor attribute_loglik(const Tensor& logits, std::span<const TokenId> words) {
  if (words.empty()) throw UsageError("attribute log-likelihood needs at least one topic word");
  const Tensor p = num::softmax(logits, -1);
  return num::clamped_log(num::sum(num::gather(p, words)), kProbFloor);
}

double attribute_loglik_value(std::span<const double> probs, std::span<const TokenId> words) {
  double s = 0.0;
  for (auto w : words) {
    if (w >= probs.size()) throw DimensionError("topic word id out of range");
    s += probs[w];
  }
  return std::log(std::max(s, kProbFloor));
}

std::vector<TokenId> map_topic_words(std::span<const std::uint32_t> bow_indices, const corpus::Vocabulary& bow_vocab,
                                     const corpus::Vocabulary& gen_vocab, std::size_t* dropped) {
  std::vector<TokenId> out;
  std::set<TokenId> seen;
  std::size_t missing = 0;
  for (auto idx : bow_indices) {
    const auto id = gen_vocab.find(bow_vocab.content_token(idx));
    if (!id || corpus::Vocabulary::is_special(*id)) {
      ++missing;
      continue;
    }
    if (seen.insert(*id).second) out.push_back(*id);
  }
  if (dropped) *dropped = missing;
  return out;
}

ControlledOutput controlled_decode(const gen::Generator& model, const gen::EncodedSource& source,
                                   std::span<const TokenId> topic_words, const ControlConfig& config,
                                   std::size_t max_tokens) {
  validate(config);
  const bool active = config.iterations > 0 && !topic_words.empty();
  // Gradients here are taken w.r.t. the perturbations only.
  const gen::Generator frozen = active ? model.frozen() : gen::Generator(model);
  const gen::Generator& m = frozen;

  const Tensor h_e = source.h_e.detach();
  gen::CrossMemory plain_mem;
  {
    num::NoGradScope ng;
    plain_mem = m.cross_memory(h_e);
  }
  gen::DecoderState state = m.empty_state();
  ControlledOutput out;
  TokenId last = corpus::Vocabulary::kBos;

  for (std::size_t t = 0; t < max_tokens; ++t) {
    gen::StepOutput plain;
    {
      num::NoGradScope ng;
      plain = m.step(plain_mem, state, last);
    }
    StepTrace st;
    std::vector<double> probs;
    {
      num::NoGradScope ng;
      const Tensor p = num::softmax(plain.logits, -1);
      probs.assign(p.values().begin(), p.values().end());
    }
    if (!topic_words.empty()) st.loglik_before = attribute_loglik_value(probs, topic_words);
    st.loglik_after = st.loglik_before;

    if (active) {
      // Blocks: H_E, then K and V of every decoder layer once t > 0.
      std::vector<Tensor> base = {h_e};
      for (std::size_t l = 0; l < state.k.size() && state.length > 0; ++l) {
        base.push_back(state.k[l]);
        base.push_back(state.v[l]);
      }
      std::vector<Tensor> delta;
      for (const auto& b : base) delta.push_back(Tensor::zeros(b.shape()));
      double min_inner = std::numeric_limits<double>::infinity();

      auto perturbed_step = [&](const std::vector<Tensor>& d) {
        std::vector<Tensor> h;
        for (std::size_t i = 0; i < base.size(); ++i) h.push_back(num::add(base[i], d[i]));
        const gen::CrossMemory mem = m.cross_memory(h[0]);
        gen::DecoderState ps = state;
        if (state.length > 0) {
          for (std::size_t l = 0; l < ps.k.size(); ++l) {
            ps.k[l] = h[1 + 2 * l];
            ps.v[l] = h[2 + 2 * l];
          }
        }
        return m.step(mem, ps, last);
      };

      for (std::size_t it = 0; it < config.iterations && !st.aborted; ++it) {
        std::vector<Tensor> leaves;
        for (const auto& d : delta) leaves.push_back(d.clone().set_requires_grad(true));
        num::Tape tape;
        try {
          num::TapeScope scope(tape);
          const Tensor obj = attribute_loglik(perturbed_step(leaves).logits, topic_words);
          tape.backward(obj);
        } catch (const NumericError&) {
          st.aborted = true;
          break;
        }
        std::vector<std::vector<double>> grads;
        bool finite = true;
        for (const auto& leaf : leaves) {
          grads.push_back(leaf.grad());
          for (double g : grads.back()) finite = finite && std::isfinite(g);
        }
        if (!finite) {
          st.aborted = true;
          break;
        }
        for (std::size_t i = 0; i < delta.size(); ++i) {
          const auto& g = grads[i];
          const double gn = std::sqrt(dot(g, g));
          if (gn == 0.0) continue;
          const double factor = config.alpha_step / std::pow(gn, config.gamma);
          auto dv = delta[i].values();
          double inner = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) {
            dv[j] += factor * g[j];
            inner += factor * g[j] * g[j];
          }
          min_inner = std::min(min_inner, inner);
          for (double x : dv) finite = finite && std::isfinite(x);
        }
        if (!finite) {
          st.aborted = true;
          break;
        }
      }

      if (st.aborted) ++out.trace.warnings;
      gen::StepOutput controlled;
      if (!st.aborted) {
        try {
          num::NoGradScope ng;
          controlled = perturbed_step(delta);
        } catch (const NumericError&) {
          st.aborted = true;
          ++out.trace.warnings;
        }
      }
      if (!st.aborted) {
        num::NoGradScope ng;
        const Tensor p = num::softmax(controlled.logits, -1);
        probs.assign(p.values().begin(), p.values().end());
        st.loglik_after = attribute_loglik_value(probs, topic_words);
        for (const auto& d : delta) st.delta_norms.push_back(std::sqrt(dot(d.values(), d.values())));
        st.min_ascent_inner = std::isfinite(min_inner) ? min_inner : 0.0;
        plain.logits = controlled.logits;
      }
    }

    const TokenId next = gen::argmax_token(plain.logits.values());
    st.token = next;
    out.trace.steps.push_back(std::move(st));
    if (next == corpus::Vocabulary::kEos) break;
    gen::Generator::append(state, plain);
    out.tokens.push_back(next);
    last = next;
  }
  return out;
}

void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace) {
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    nlohmann::json j = {{"step", i},
                        {"token", s.token},
                        {"loglik_before", s.loglik_before},
                        {"loglik_after", s.loglik_after},
                        {"delta_norms", s.delta_norms},
                        {"min_ascent_inner", s.min_ascent_inner},
                        {"aborted", s.aborted}};
    out << j.dump() << '\n';
  }
}

}  // namespace utged::control
