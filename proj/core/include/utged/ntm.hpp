#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "utged/corpus.hpp"
#include "utged/numeric/random.hpp"
#include "utged/numeric/tensor.hpp"

// Variational topic model over bag-of-words counts.
namespace utged::ntm {

struct NtmConfig {
  std::size_t vocab_size = 10000;
  std::size_t num_topics = 100;
  std::size_t hidden = 200;
};

struct Encoded {
  num::Tensor mu;         // [B x K]
  num::Tensor log_sigma;  // [B x K]
};

struct Forward {
  num::Tensor mu, log_sigma, z, theta, recon;
};

class TopicModel {
 public:
  // Xavier-uniform weights, zero biases.
  TopicModel(const NtmConfig& config, num::Rng& rng);

  const NtmConfig& config() const { return config_; }
  std::size_t num_topics() const { return config_.num_topics; }
  std::size_t vocab_size() const { return config_.vocab_size; }

  // Names: f_b/w, f_b/b, f_mu/w, f_mu/b, f_sigma/w, f_sigma/b, f_theta/w,
  // f_theta/b, f_phi/w, f_phi/b.
  num::ParameterList parameters() const;

  // bow: [B x V] counts. f_b is softplus(affine); f_mu and f_sigma are affine.
  Encoded encode(const num::Tensor& bow) const;
  // z = mu + exp(log_sigma) * eps, with log_sigma softly capped at
  // kMaxLogSigma. With no generator the draw is skipped and z = mu.
  static constexpr double kMaxLogSigma = 20.0;
  num::Tensor reparameterize(const num::Tensor& mu, const num::Tensor& log_sigma, num::Rng* rng) const;
  // Row-wise softmax(f_theta(z)).
  num::Tensor mixture(const num::Tensor& z) const;
  // Row-wise softmax(f_phi(theta)) over the vocabulary.
  num::Tensor reconstruct(const num::Tensor& theta) const;
  Forward forward(const num::Tensor& bow, num::Rng* rng) const;

  // Topic-word logits: row k is phi_k. [K x V]
  const num::Tensor& topic_word_matrix() const { return phi_w_; }

 private:
  NtmConfig config_;
  num::Tensor b_w_, b_b_, mu_w_, mu_b_, sigma_w_, sigma_b_, theta_w_, theta_b_, phi_w_, phi_b_;
};

// Dense [B x V] count matrix.
num::Tensor bow_matrix(std::span<const corpus::BowVector> bows, std::size_t vocab_size);

// Sum over rows of 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma); shape [1].
num::Tensor kl_divergence(const num::Tensor& mu, const num::Tensor& log_sigma);

struct NtmLoss {
  num::Tensor total;  // (kl + recon) / B
  num::Tensor kl;     // summed over the batch
  num::Tensor recon;  // -sum count * log recon, summed over the batch
  std::size_t clamped = 0;
};

// Reconstruction probabilities below 1e-12 are clamped and counted.
NtmLoss ntm_loss(const num::Tensor& bow, const Forward& fwd);

// The l vocabulary indices with the largest phi[c] entries, ties to the
// lower index.
std::vector<std::uint32_t> topic_words(const num::Tensor& phi, std::size_t c, std::size_t l);

struct TopicGuidance {
  std::vector<double> theta;
  std::size_t major_topic = 0;
  std::vector<std::uint32_t> topic_words;
};

// Deterministic inference (z = mu). An empty bag yields a uniform mixture.
TopicGuidance guidance(const TopicModel& model, const corpus::BowVector& bow, std::size_t l = 30);

}  // namespace utged::ntm
