#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "shiftselect/dataspace.hpp"
#include "shiftselect/prevalence.hpp"
#include "shiftselect/random.hpp"

namespace shiftselect {

/// The part of a bag that selection strategies may see: which test-set
/// positions were drawn (with repetition). No labels, no prevalence.
struct UnlabelledBag {
  std::size_t id = 0;
  std::vector<std::size_t> positions;

  std::size_t size() const { return positions.size(); }
};

/// A bag drawn under a target prevalence. The true labels are kept for the
/// evaluation harness; selection code only ever receives unlabelled().
class Bag {
 public:
  Bag(UnlabelledBag view, PrevalenceVector target, Labels true_labels, std::size_t n_classes);

  const UnlabelledBag& unlabelled() const { return view_; }
  std::size_t id() const { return view_.id; }
  std::size_t size() const { return view_.size(); }
  const PrevalenceVector& target() const { return target_; }
  const PrevalenceVector& realized() const { return realized_; }
  /// Evaluation-only.
  const Labels& true_labels() const { return labels_; }

 private:
  UnlabelledBag view_;
  PrevalenceVector target_;
  PrevalenceVector realized_;
  Labels labels_;
};

/// Uniform draw from the simplex: sorted uniforms' consecutive gaps.
PrevalenceVector kraemer_sample(std::size_t n_classes, Rng& rng);
/// The deterministic part of kraemer_sample, given the n-1 uniforms.
PrevalenceVector kraemer_from_uniforms(std::span<const double> uniforms);

/// Per-class counts are the largest-remainder rounding of target * s; members
/// are drawn uniformly with replacement within each class.
Bag draw_bag(const LabelledSet& test, const PrevalenceVector& target, std::size_t s, Rng& rng,
             std::size_t id = 0);

inline constexpr std::size_t kDefaultBags = 1000;
inline constexpr std::size_t kDefaultBagSize = 100;

/// r bags at independent uniform prevalences, reproducible from seed.
std::vector<Bag> app_generate(const LabelledSet& test, std::size_t r, std::size_t s, std::uint64_t seed);

double l1_shift(const PrevalenceVector& a, const PrevalenceVector& b);

struct ShiftRecord {
  std::size_t bag_id = 0;
  double l1_shift = 0.0;
  std::map<std::string, double> accuracy;  // strategy -> true accuracy on the bag
};

struct ShiftBin {
  std::size_t index = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::map<std::string, double> mean_accuracy;
};

/// Populated bins only, in increasing shift order.
struct ShiftCurve {
  std::size_t n_bins = 0;
  double max_shift = 0.0;
  std::vector<ShiftBin> bins;
};

inline constexpr std::size_t kDefaultShiftBins = 10;

/// Equal-width bins on [0, max observed shift]; the maximum falls in the last bin.
ShiftCurve bin_by_shift(std::span<const ShiftRecord> records, std::size_t n_bins = kDefaultShiftBins);

}  // namespace shiftselect
