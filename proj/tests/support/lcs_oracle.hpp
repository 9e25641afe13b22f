#pragma once

// Longest common subsequence by enumeration: the largest subset of `a`'s
// positions whose symbols appear in order in `b`. Exponential in |a|, so only
// for short sequences.

#include <bit>
#include <cstddef>
#include <vector>

namespace utged::testing {

inline std::size_t brute_force_lcs(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t best = 0;
  const std::size_t masks = std::size_t{1} << a.size();
  for (std::size_t mask = 0; mask < masks; ++mask) {
    const auto len = static_cast<std::size_t>(std::popcount(mask));
    if (len <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else ++j;
    }
    if (ok) best = len;
  }
  return best;
}

}  // namespace utged::testing
