#pragma once

#include <cstddef>

namespace utged::num::detail {

// C (M x N) = op(A) * op(B), or += when accumulate is set. All buffers are
// row-major; op(A) is M x K and op(B) is K x N after optional transposition.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

}  // namespace utged::num::detail
