#include "gemm.hpp"

#include <Eigen/Core>

namespace utged::num::detail {

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;
using Index = Eigen::Index;
}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  const auto M = static_cast<Index>(m);
  const auto N = static_cast<Index>(n);
  const auto K = static_cast<Index>(k);
  Map out(c, M, N);
  if (!accumulate) out.setZero();
  if (M == 0 || N == 0 || K == 0) return;
  ConstMap lhs(a, trans_a ? K : M, trans_a ? M : K);
  ConstMap rhs(b, trans_b ? N : K, trans_b ? K : N);
  if (!trans_a && !trans_b) {
    out.noalias() += lhs * rhs;
  } else if (!trans_a && trans_b) {
    out.noalias() += lhs * rhs.transpose();
  } else if (trans_a && !trans_b) {
    out.noalias() += lhs.transpose() * rhs;
  } else {
    out.noalias() += lhs.transpose() * rhs.transpose();
  }
}

}  // namespace utged::num::detail
