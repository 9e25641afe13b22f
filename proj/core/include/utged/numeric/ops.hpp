#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "utged/numeric/tensor.hpp"

// Differentiable primitives. Each records a node on the active tape when at
// least one input requires a gradient; otherwise it is a plain computation.
namespace utged::num {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// x[..., j] + row[j] for every leading index.
Tensor add_row(const Tensor& x, const Tensor& row);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
// Tanh approximation of the Gaussian error linear unit.
Tensor gelu(const Tensor& x);

// log(max(x, floor)); entries at or below the floor get zero gradient and
// bump *clamp_count when it is provided.
Tensor clamped_log(const Tensor& x, double floor, std::size_t* clamp_count = nullptr);

// (M x K) * (K x N).
Tensor matmul(const Tensor& a, const Tensor& b);
// (M x K) * (N x K)^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// Scalar reductions; the result has shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Euclidean norm of the flattened tensor.
Tensor norm(const Tensor& x);

// Max-subtracted softmax along `axis` (negative counts from the end).
// Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x);

// Normalizes over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, int axis = 0);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);

// Picks x[..., ids[k]] along the last axis.
Tensor gather(const Tensor& x, std::span<const std::uint32_t> ids);

// Rows of `table` selected by ids; the gradient scatter-adds into the table.
Tensor embedding(const Tensor& table, std::span<const std::uint32_t> ids);

// Sum over rows t of -log_softmax(logits)[t, targets[t]].
Tensor nll_loss(const Tensor& logits, std::span<const std::uint32_t> targets);

}  // namespace utged::num
