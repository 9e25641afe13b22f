#include "utged/numeric/optim.hpp"

#include <cmath>
#include <unordered_map>

#include "utged/error.hpp"

namespace utged::num {

void zero_grad(const ParameterList& params) {
  for (const auto& p : params) p.tensor.impl()->grad.clear();
}

double global_grad_norm(const ParameterList& params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.impl()->grad) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double total = global_grad_norm(params);
  if (!std::isfinite(total)) throw NumericError("non-finite gradient norm");
  if (total > max_norm && total > 0.0) {
    const double f = max_norm / total;
    for (const auto& p : params) {
      for (double& g : p.tensor.impl()->grad) g *= f;
    }
  }
  return total;
}

void Sgd::step(const ParameterList& params) const {
  for (const auto& p : params) {
    auto* impl = p.tensor.impl();
    if (impl->grad.empty()) continue;
    for (std::size_t i = 0; i < impl->value.size(); ++i) impl->value[i] -= lr_ * impl->grad[i];
  }
}

AdamW::AdamW(ParameterList params, AdamWOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step() {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* impl = params_[k].tensor.impl();
    auto& m = m_[k];
    auto& v = v_[k];
    const bool has_grad = !impl->grad.empty();
    for (std::size_t i = 0; i < impl->value.size(); ++i) {
      const double g = has_grad ? impl->grad[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      impl->value[i] -= options_.lr * (mhat / (std::sqrt(vhat) + options_.eps) + options_.weight_decay * impl->value[i]);
    }
  }
}

ParameterList AdamW::moments() const {
  ParameterList out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& shape = params_[k].tensor.shape();
    out.push_back({"m/" + params_[k].name, Tensor::from(shape, m_[k])});
    out.push_back({"v/" + params_[k].name, Tensor::from(shape, v_[k])});
  }
  return out;
}

void AdamW::load_moments(const ParameterList& moments, std::size_t steps) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& t : moments) by_name[t.name] = &t.tensor;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    for (auto [prefix, dst] : {std::pair{"m/", &m_[k]}, std::pair{"v/", &v_[k]}}) {
      auto it = by_name.find(prefix + params_[k].name);
      if (it == by_name.end()) throw FormatError("optimizer state missing " + std::string(prefix) + params_[k].name);
      if (it->second->numel() != dst->size()) throw FormatError("optimizer state size mismatch for " + params_[k].name);
      dst->assign(it->second->values().begin(), it->second->values().end());
    }
  }
  steps_ = steps;
}

}  // namespace utged::num
