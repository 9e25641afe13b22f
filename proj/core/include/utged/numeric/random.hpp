#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "utged/numeric/tensor.hpp"

namespace utged::num {

// Seeded generator with distributions written out explicitly so that a seed
// yields the same stream under any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n); n must be positive.
  std::size_t index(std::size_t n);
  // Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  // Independent child stream, stable for a given (parent seed, stream) pair.
  Rng fork(std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad = true);
// Glorot-uniform for a fan_in x fan_out weight matrix.
Tensor xavier_tensor(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad = true);

}  // namespace utged::num
