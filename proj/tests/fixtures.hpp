#pragma once

#include <memory>
#include <random>
#include <vector>

#include "shiftselect/dataspace.hpp"
#include "shiftselect/prevalence.hpp"

namespace fixture {

using namespace shiftselect;

inline std::shared_ptr<const Dataset> make_dataset(Matrix x, Labels y, std::size_t n_classes) {
  return std::make_shared<const Dataset>("fixture", std::move(x), std::move(y), n_classes);
}

/// Synthetic Gaussian data under the given class prevalence.
inline std::shared_ptr<const Dataset> gaussians(std::size_t n_classes, std::size_t dims, std::vector<double> prev,
                                                std::size_t n, double separation, std::uint64_t seed) {
  return std::make_shared<const Dataset>(
      synth_gaussian_pps(n_classes, dims, PrevalenceVector(std::move(prev)), n, separation, seed));
}

inline LabelledSet all_of(std::shared_ptr<const Dataset> d) { return LabelledSet(std::move(d)); }

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = n(rng);
  return m;
}

}  // namespace fixture
