#include "shiftselect/prevalence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace shiftselect {

PrevalenceVector::PrevalenceVector(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw std::invalid_argument("prevalence vector must be non-empty");
  double sum = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0)
      throw std::invalid_argument("prevalence entries must be finite and nonnegative, got " +
                                  std::to_string(w));
    sum += w;
  }
  if (std::abs(sum - 1.0) > kTolerance)
    throw std::invalid_argument("prevalence entries must sum to 1, got " + std::to_string(sum));
}

PrevalenceVector PrevalenceVector::uniform(std::size_t n_classes) {
  return PrevalenceVector(std::vector<double>(n_classes, 1.0 / static_cast<double>(n_classes)));
}

PrevalenceVector PrevalenceVector::vertex(std::size_t n_classes, std::size_t index) {
  if (index >= n_classes) throw std::invalid_argument("vertex index out of range");
  std::vector<double> w(n_classes, 0.0);
  w[index] = 1.0;
  return PrevalenceVector(std::move(w));
}

PrevalenceVector PrevalenceVector::from_counts(std::span<const std::size_t> counts) {
  std::vector<double> c(counts.begin(), counts.end());
  return from_counts(std::span<const double>(c));
}

PrevalenceVector PrevalenceVector::from_counts(std::span<const double> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("cannot normalise all-zero counts");
  std::vector<double> w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) w[i] = counts[i] / total;
  return PrevalenceVector(std::move(w));
}

double l1_distance(const PrevalenceVector& a, const PrevalenceVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_distance: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

std::vector<std::size_t> largest_remainder_counts(std::span<const double> target,
                                                  std::size_t total) {
  const std::size_t n = target.size();
  std::vector<std::size_t> counts(n, 0);
  std::vector<double> remainder(n, 0.0);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double exact = target[j] * static_cast<double>(total);
    const double floor_part = std::floor(exact + 1e-12);
    counts[j] = static_cast<std::size_t>(std::max(0.0, floor_part));
    remainder[j] = exact - floor_part;
    assigned += counts[j];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(remainder[a] - remainder[b]) <= 1e-9) return false;
    return remainder[a] > remainder[b];
  });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % n) {
    ++counts[order[k]];
    ++assigned;
  }
  // Only reachable when the target sums slightly above one.
  for (std::size_t k = n; assigned > total && k > 0; --k) {
    const std::size_t j = order[k - 1];
    if (counts[j] > 0) {
      --counts[j];
      --assigned;
    }
  }
  return counts;
}

}  // namespace shiftselect
