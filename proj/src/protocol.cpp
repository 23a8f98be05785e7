#include "shiftselect/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shiftselect {

namespace {

PrevalenceVector realized_from_labels(const Labels& labels, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return PrevalenceVector::from_counts(std::span<const std::size_t>(counts));
}

}  // namespace

Bag::Bag(UnlabelledBag view, PrevalenceVector target, Labels true_labels, std::size_t n_classes)
    : view_(std::move(view)),
      target_(std::move(target)),
      realized_(realized_from_labels(true_labels, n_classes)),
      labels_(std::move(true_labels)) {
  if (labels_.size() != view_.positions.size()) throw std::invalid_argument("bag: labels and positions differ");
}

PrevalenceVector kraemer_from_uniforms(std::span<const double> uniforms) {
  std::vector<double> cuts(uniforms.begin(), uniforms.end());
  std::sort(cuts.begin(), cuts.end());
  cuts.insert(cuts.begin(), 0.0);
  cuts.push_back(1.0);
  std::vector<double> gaps(cuts.size() - 1);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) gaps[i] = cuts[i + 1] - cuts[i];
  return PrevalenceVector(std::move(gaps));
}

PrevalenceVector kraemer_sample(std::size_t n_classes, Rng& rng) {
  if (n_classes < 1) throw std::invalid_argument("kraemer_sample: need at least one class");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> draws(n_classes - 1);
  for (double& d : draws) d = u(rng);
  return kraemer_from_uniforms(draws);
}

Bag draw_bag(const LabelledSet& test, const PrevalenceVector& target, std::size_t s, Rng& rng, std::size_t id) {
  if (target.size() != test.n_classes()) throw std::invalid_argument("draw_bag: prevalence size mismatch");
  if (s == 0) throw std::invalid_argument("draw_bag: bag size must be positive");
  const auto counts = largest_remainder_counts(target.values(), s);
  const auto by_class = test.class_positions();
  std::vector<std::pair<std::size_t, int>> members;
  members.reserve(s);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) continue;
    if (by_class[j].empty())
      throw std::invalid_argument("draw_bag: class " + std::to_string(j) + " required but absent from test set");
    std::uniform_int_distribution<std::size_t> pick(0, by_class[j].size() - 1);
    for (std::size_t k = 0; k < counts[j]; ++k) members.emplace_back(by_class[j][pick(rng)], static_cast<int>(j));
  }
  std::shuffle(members.begin(), members.end(), rng);
  UnlabelledBag view{id, {}};
  Labels labels;
  view.positions.reserve(s);
  labels.reserve(s);
  for (const auto& [pos, y] : members) {
    view.positions.push_back(pos);
    labels.push_back(y);
  }
  return Bag(std::move(view), target, std::move(labels), test.n_classes());
}

std::vector<Bag> app_generate(const LabelledSet& test, std::size_t r, std::size_t s, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xA99);
  std::vector<Bag> bags;
  bags.reserve(r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto target = kraemer_sample(test.n_classes(), rng);
    bags.push_back(draw_bag(test, target, s, rng, i));
  }
  return bags;
}

double l1_shift(const PrevalenceVector& a, const PrevalenceVector& b) { return l1_distance(a, b); }

ShiftCurve bin_by_shift(std::span<const ShiftRecord> records, std::size_t n_bins) {
  if (n_bins < 1) throw std::invalid_argument("bin_by_shift: need at least one bin");
  ShiftCurve curve;
  curve.n_bins = n_bins;
  if (records.empty()) return curve;
  for (const auto& r : records) curve.max_shift = std::max(curve.max_shift, r.l1_shift);
  const double width = curve.max_shift / static_cast<double>(n_bins);

  struct Acc {
    std::size_t count = 0;
    std::map<std::string, std::pair<double, std::size_t>> sums;
  };
  std::vector<Acc> acc(n_bins);
  for (const auto& r : records) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>(std::floor(r.l1_shift / width)) : 0;
    b = std::min(b, n_bins - 1);
    ++acc[b].count;
    for (const auto& [strategy, value] : r.accuracy) {
      auto& [sum, n] = acc[b].sums[strategy];
      sum += value;
      ++n;
    }
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (acc[b].count == 0) continue;
    ShiftBin bin;
    bin.index = b;
    bin.lo = width * static_cast<double>(b);
    bin.hi = b + 1 == n_bins ? curve.max_shift : width * static_cast<double>(b + 1);
    bin.count = acc[b].count;
    for (const auto& [strategy, sn] : acc[b].sums) bin.mean_accuracy[strategy] = sn.first / static_cast<double>(sn.second);
    curve.bins.push_back(std::move(bin));
  }
  return curve;
}

}  // namespace shiftselect
