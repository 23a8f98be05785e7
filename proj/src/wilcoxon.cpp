#include "shiftselect/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace shiftselect {

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, double alpha,
                                    WilcoxonMethod method) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: samples must be paired");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) diff.push_back(a[i] - b[i]);
  const std::size_t n = diff.size();
  if (n < kWilcoxonMinPairs)
    throw std::invalid_argument("wilcoxon: need at least 5 nonzero differences, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(diff[x]) < std::abs(diff[y]); });
  // Doubled ranks stay integral under averaging.
  std::vector<std::int64_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diff[order[j + 1]]) == std::abs(diff[order[i]])) ++j;
    const auto t = static_cast<std::int64_t>(j - i + 1);
    const std::int64_t avg2 = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = avg2;
    tie_term += static_cast<double>(t * t * t - t);
    i = j + 1;
  }
  std::int64_t wplus2 = 0;
  std::int64_t total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diff[i] > 0.0) wplus2 += rank2[i];
  }

  WilcoxonResult res;
  res.n = n;
  res.w_plus = static_cast<double>(wplus2) / 2.0;
  res.w_minus = static_cast<double>(total2 - wplus2) / 2.0;
  res.statistic = std::min(res.w_plus, res.w_minus);

  const bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && n <= kWilcoxonExactMax);
  if (exact) {
    if (n > 20) throw std::invalid_argument("wilcoxon: exact enumeration limited to 20 pairs");
    const std::uint64_t patterns = std::uint64_t{1} << n;
    std::uint64_t le = 0, ge = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
      std::int64_t w = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask >> i & 1U) w += rank2[i];
      le += w <= wplus2 ? 1 : 0;
      ge += w >= wplus2 ? 1 : 0;
    }
    const double tail = static_cast<double>(std::min(le, ge)) / static_cast<double>(patterns);
    res.p_value = std::min(1.0, 2.0 * tail);
    res.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = var > 0.0 ? std::max(0.0, std::abs(res.w_plus - mean) - 0.5) / std::sqrt(var) : 0.0;
    res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  }
  res.significant = res.p_value < alpha;
  return res;
}

}  // namespace shiftselect
