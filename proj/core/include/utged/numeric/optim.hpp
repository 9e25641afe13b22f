#pragma once

#include <cstddef>
#include <vector>

#include "utged/numeric/tensor.hpp"

namespace utged::num {

void zero_grad(const ParameterList& params);
double global_grad_norm(const ParameterList& params);
// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

// Plain stochastic gradient descent: p -= lr * g.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(const ParameterList& params) const;
  double lr() const { return lr_; }

 private:
  double lr_;
};

struct AdamWOptions {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay, bound to a fixed parameter list.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWOptions options);

  void step();
  std::size_t steps() const { return steps_; }
  const AdamWOptions& options() const { return options_; }

  // Moments as tensors named "m/<param>" and "v/<param>".
  ParameterList moments() const;
  void load_moments(const ParameterList& moments, std::size_t steps);

 private:
  ParameterList params_;
  AdamWOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace utged::num
