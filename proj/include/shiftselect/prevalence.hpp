#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace shiftselect {

/// A point on the unit simplex: nonnegative entries summing to one.
///
/// Used for class-prevalence distributions, explicit class weights and
/// quantifier outputs. Construction validates the simplex constraint
/// (tolerance 1e-9) and throws std::invalid_argument otherwise.
class PrevalenceVector {
 public:
  static constexpr double kTolerance = 1e-9;

  explicit PrevalenceVector(std::vector<double> weights);

  static PrevalenceVector uniform(std::size_t n_classes);
  static PrevalenceVector vertex(std::size_t n_classes, std::size_t index);
  /// Normalises nonnegative counts; throws if all counts are zero.
  static PrevalenceVector from_counts(std::span<const std::size_t> counts);
  static PrevalenceVector from_counts(std::span<const double> counts);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  const std::vector<double>& values() const { return weights_; }

  auto begin() const { return weights_.begin(); }
  auto end() const { return weights_.end(); }

  bool operator==(const PrevalenceVector&) const = default;

 private:
  std::vector<double> weights_;
};

/// Sum of absolute coordinate differences, in [0, 2].
double l1_distance(const PrevalenceVector& a, const PrevalenceVector& b);

/// Integer counts summing exactly to `total` that are closest to
/// `target * total`: floors first, then the leftover units go to the
/// largest fractional remainders. Remainders within 1e-9 of each other
/// are treated as tied and resolved by lowest class index.
std::vector<std::size_t> largest_remainder_counts(std::span<const double> target,
                                                  std::size_t total);

}  // namespace shiftselect
