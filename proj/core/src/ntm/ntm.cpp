#include "utged/ntm.hpp"

#include <algorithm>
#include <numeric>

#include "utged/error.hpp"
#include "utged/numeric/ops.hpp"

namespace utged::ntm {

using num::Tensor;

namespace {

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return num::add_row(num::matmul(x, w), b); }

}  // namespace

TopicModel::TopicModel(const NtmConfig& config, num::Rng& rng) : config_(config) {
  if (config.num_topics < 2) throw ConfigError("topic model needs at least 2 topics");
  if (config.vocab_size < 1 || config.hidden < 1) throw ConfigError("topic model vocabulary and hidden size must be positive");
  const auto v = config.vocab_size, h = config.hidden, k = config.num_topics;
  b_w_ = num::xavier_tensor(v, h, rng);
  b_b_ = Tensor::zeros({h}, true);
  mu_w_ = num::xavier_tensor(h, k, rng);
  mu_b_ = Tensor::zeros({k}, true);
  sigma_w_ = num::xavier_tensor(h, k, rng);
  sigma_b_ = Tensor::zeros({k}, true);
  theta_w_ = num::xavier_tensor(k, k, rng);
  theta_b_ = Tensor::zeros({k}, true);
  phi_w_ = num::xavier_tensor(k, v, rng);
  phi_b_ = Tensor::zeros({v}, true);
}

num::ParameterList TopicModel::parameters() const {
  return {{"f_b/w", b_w_},         {"f_b/b", b_b_},         {"f_mu/w", mu_w_},     {"f_mu/b", mu_b_},
          {"f_sigma/w", sigma_w_}, {"f_sigma/b", sigma_b_}, {"f_theta/w", theta_w_}, {"f_theta/b", theta_b_},
          {"f_phi/w", phi_w_},     {"f_phi/b", phi_b_}};
}

Encoded TopicModel::encode(const Tensor& bow) const {
  if (bow.rank() != 2 || bow.cols() != config_.vocab_size) {
    throw DimensionError("topic model: bag-of-words " + num::shape_to_string(bow.shape()) + " does not match vocabulary " +
                         std::to_string(config_.vocab_size));
  }
  const Tensor h = num::softplus(affine(bow, b_w_, b_b_));
  return {affine(h, mu_w_, mu_b_), affine(h, sigma_w_, sigma_b_)};
}

Tensor TopicModel::reparameterize(const Tensor& mu, const Tensor& log_sigma, num::Rng* rng) const {
  if (rng == nullptr) return mu;
  auto eps = Tensor::zeros(mu.shape());
  for (double& e : eps.values()) e = rng->normal();
  // log sigma is capped smoothly, min(x, c) ~ c - softplus(c - x), so an
  // untrained encoder fed a large bag cannot push z to infinity.
  const Tensor capped =
      num::add_scalar(num::scale(num::softplus(num::add_scalar(num::scale(log_sigma, -1.0), kMaxLogSigma)), -1.0),
                      kMaxLogSigma);
  return num::add(mu, num::mul(num::exp(capped), eps));
}

Tensor TopicModel::mixture(const Tensor& z) const { return num::softmax(affine(z, theta_w_, theta_b_), -1); }

Tensor TopicModel::reconstruct(const Tensor& theta) const { return num::softmax(affine(theta, phi_w_, phi_b_), -1); }

Forward TopicModel::forward(const Tensor& bow, num::Rng* rng) const {
  Forward f;
  auto enc = encode(bow);
  f.mu = enc.mu;
  f.log_sigma = enc.log_sigma;
  f.z = reparameterize(f.mu, f.log_sigma, rng);
  f.theta = mixture(f.z);
  f.recon = reconstruct(f.theta);
  return f;
}

Tensor bow_matrix(std::span<const corpus::BowVector> bows, std::size_t vocab_size) {
  auto m = Tensor::zeros({bows.size(), vocab_size});
  auto v = m.values();
  for (std::size_t r = 0; r < bows.size(); ++r) {
    for (const auto& [idx, count] : bows[r].counts) {
      if (idx >= vocab_size) throw DimensionError("bag-of-words index " + std::to_string(idx) + " outside vocabulary");
      v[r * vocab_size + idx] = count;
    }
  }
  return m;
}

Tensor kl_divergence(const Tensor& mu, const Tensor& log_sigma) {
  const Tensor two_ls = num::scale(log_sigma, 2.0);
  const Tensor inner = num::sub(num::add(num::mul(mu, mu), num::exp(two_ls)), num::add_scalar(two_ls, 1.0));
  return num::scale(num::sum(inner), 0.5);
}

NtmLoss ntm_loss(const Tensor& bow, const Forward& fwd) {
  if (bow.shape() != fwd.recon.shape()) throw DimensionError("topic model loss: bag-of-words and reconstruction differ");
  NtmLoss out;
  out.kl = kl_divergence(fwd.mu, fwd.log_sigma);
  const Tensor logp = num::clamped_log(fwd.recon, 1e-12, &out.clamped);
  out.recon = num::scale(num::sum(num::mul(bow, logp)), -1.0);
  out.total = num::scale(num::add(out.kl, out.recon), 1.0 / static_cast<double>(bow.rows()));
  return out;
}

std::vector<std::uint32_t> topic_words(const Tensor& phi, std::size_t c, std::size_t l) {
  if (phi.rank() != 2 || c >= phi.rows()) throw UsageError("topic_words: topic index out of range");
  const std::size_t v = phi.cols();
  if (l < 1 || l > v) throw UsageError("topic_words: l must lie in [1, V]");
  const auto row = phi.values().subspan(c * v, v);
  std::vector<std::uint32_t> idx(v);
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b]; });
  idx.resize(l);
  return idx;
}

TopicGuidance guidance(const TopicModel& model, const corpus::BowVector& bow, std::size_t l) {
  TopicGuidance g;
  const std::size_t k = model.num_topics();
  if (bow.empty()) {
    g.theta.assign(k, 1.0 / static_cast<double>(k));
  } else {
    num::NoGradScope no_grad;
    const corpus::BowVector one[] = {bow};
    auto f = model.forward(bow_matrix(one, model.vocab_size()), nullptr);
    g.theta.assign(f.theta.values().begin(), f.theta.values().end());
  }
  g.major_topic = static_cast<std::size_t>(std::max_element(g.theta.begin(), g.theta.end()) - g.theta.begin());
  g.topic_words = topic_words(model.topic_word_matrix(), g.major_topic, std::min(l, model.vocab_size()));
  return g;
}

}  // namespace utged::ntm
