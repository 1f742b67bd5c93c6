#include <cmath>
#include <map>
#include <vector>

#include "topotune/error.hpp"
#include "topotune/topo.hpp"

namespace topotune {

namespace {

bool is_pow2(std::uint64_t n) { return n != 0 && (n & (n - 1)) == 0; }

// f(n,k,t): builds the stride-t assignment of n positions into groups of k and
// checks that it partitions all positions into full groups.
int stride_tiles(std::uint64_t n, std::uint64_t k, std::uint64_t t) {
  const std::uint64_t block = k * t;
  if (block > n) return 0;
  std::vector<std::uint64_t> group_of(n, UINT64_MAX);
  std::vector<std::uint64_t> size;
  const std::uint64_t blocks = (n + block - 1) / block;
  for (std::uint64_t b = 0; b < blocks; ++b) {
    for (std::uint64_t j = 0; j < t; ++j) {
      const std::uint64_t g = size.size();
      size.push_back(0);
      for (std::uint64_t i = 0; i < k; ++i) {
        const std::uint64_t p = b * block + j + i * t;
        if (p >= n) continue;
        if (group_of[p] != UINT64_MAX) return 0;
        group_of[p] = g;
        ++size[g];
      }
    }
  }
  for (auto g : group_of) {
    if (g == UINT64_MAX) return 0;
  }
  for (auto s : size) {
    if (s != k) return 0;
  }
  return 1;
}

std::uint64_t count(std::uint64_t n, std::map<std::uint64_t, std::uint64_t>& memo) {
  if (n == 1) return 1;
  if (auto it = memo.find(n); it != memo.end()) return it->second;
  std::uint64_t s = 0;
  for (std::uint64_t k = 2; k <= n; ++k) {
    if (n % k != 0) continue;
    std::uint64_t F = 0;
    for (std::uint64_t t = 1; t <= n / k; ++t) F += static_cast<std::uint64_t>(stride_tiles(n, k, t));
    s += count(n / k, memo) * F;
  }
  memo[n] = s;
  return s;
}

}  // namespace

std::uint64_t brute_force_group_count(std::uint64_t n) {
  if (!is_pow2(n)) throw TopoError("brute_force_group_count needs a power of two, got " + std::to_string(n));
  std::map<std::uint64_t, std::uint64_t> memo;
  return count(n, memo);
}

GroupCountBound group_count_upper_bound(int n) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  if (n < 1) throw TopoError("group_count_upper_bound needs n >= 1");
  cpp_int num = boost::multiprecision::pow(cpp_int(n), static_cast<unsigned>(n));
  cpp_int den = 1;
  for (int i = 2; i < n; ++i) den *= i;
  GroupCountBound b{cpp_rational(num, den), std::nullopt};
  if (is_pow2(static_cast<std::uint64_t>(n))) {
    const double lg = std::log2(static_cast<double>(n));
    double lf = 0.0;
    for (int i = 2; i < n; ++i) lf += std::log(static_cast<double>(i));
    b.power_of_two = std::exp(lg / 2.0 * std::log(static_cast<double>(n)) - lf);
  }
  return b;
}

}  // namespace topotune
