#include <benchmark/benchmark.h>

#include "utged/numeric/ops.hpp"
#include "utged/numeric/random.hpp"

namespace num = utged::num;

static void BM_MatmulForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  num::Rng rng(1);
  const auto a = num::normal_tensor({n, n}, 1.0, rng, false);
  const auto b = num::normal_tensor({n, n}, 1.0, rng, false);
  for (auto _ : state) benchmark::DoNotOptimize(num::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_MatmulForward)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

static void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  num::Rng rng(2);
  auto a = num::normal_tensor({n, n}, 1.0, rng, true);
  auto b = num::normal_tensor({n, n}, 1.0, rng, true);
  for (auto _ : state) {
    num::Tape tape;
    num::TapeScope scope(tape);
    tape.backward(num::sum(num::matmul(a, b)));
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128)->Arg(256);

static void BM_SoftmaxRows(benchmark::State& state) {
  const auto cols = static_cast<std::size_t>(state.range(0));
  num::Rng rng(3);
  const auto x = num::normal_tensor({64, cols}, 3.0, rng, false);
  for (auto _ : state) benchmark::DoNotOptimize(num::softmax(x, -1));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(64 * cols));
}
BENCHMARK(BM_SoftmaxRows)->Arg(128)->Arg(1024)->Arg(20000);

static void BM_LayerNorm(benchmark::State& state) {
  num::Rng rng(4);
  const auto x = num::normal_tensor({256, 128}, 1.0, rng, false);
  const auto gain = num::Tensor::full({128}, 1.0);
  const auto bias = num::Tensor::zeros({128});
  for (auto _ : state) benchmark::DoNotOptimize(num::layer_norm(x, gain, bias));
}
BENCHMARK(BM_LayerNorm);
