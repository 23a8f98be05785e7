#pragma once

#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "shiftselect/classifiers.hpp"
#include "shiftselect/dataspace.hpp"
#include "shiftselect/prevalence.hpp"

namespace shiftselect {

/// Per-class kernel density estimates on the posterior simplex.
///
/// f_j(s) = (1/|S_j|) sum_{z in S_j} K_h(s - z), with K_h the isotropic
/// Gaussian of width h over the full n-dimensional posterior vector.
class ClassDensities {
 public:
  ClassDensities(std::vector<Matrix> support, double bandwidth);

  std::size_t n_classes() const { return support_.size(); }
  double bandwidth() const { return bandwidth_; }
  const std::vector<Matrix>& support() const { return support_; }

  double density(std::size_t j, const Eigen::RowVectorXd& point) const;
  /// rows(posteriors) x n_classes matrix of f_j evaluated at every row.
  Matrix evaluate(const Matrix& posteriors) const;

 private:
  std::vector<Matrix> support_;
  double bandwidth_;
  double log_norm_;
};

inline constexpr double kDensityFloor = 1e-300;

struct EmSettings {
  double tol = 1e-6;
  std::size_t max_iter = 1000;
};

struct EmResult {
  PrevalenceVector prevalence;
  std::vector<double> log_likelihood;  // one entry per iterate, starting at the uniform init
  std::size_t iterations = 0;
  bool converged = false;
  bool underflow = false;  // some point had every density below the floor
};

/// Mixture log-likelihood sum_x log sum_j alpha_j f_j(x) of precomputed densities.
double mixture_log_likelihood(const Matrix& densities, std::span<const double> alpha);

/// Maximum-likelihood mixture weights by EM, started at the uniform vector and
/// stopped when the L1 change drops below tol or after max_iter updates.
EmResult kdey_em(const Matrix& densities, const EmSettings& settings = {});

enum class QuantifierKind { CC, KDEyML };
std::string_view to_string(QuantifierKind kind);
QuantifierKind parse_quantifier_kind(std::string_view name);

struct QuantifierEstimate {
  PrevalenceVector prevalence;
  bool underflow = false;
};

/// A class-prevalence estimator bound to the classifier supplying posteriors.
class Quantifier {
 public:
  Quantifier(QuantifierKind kind, std::shared_ptr<const TrainedModel> model,
             std::optional<ClassDensities> densities);

  QuantifierKind kind() const { return kind_; }
  const std::shared_ptr<const TrainedModel>& model() const { return model_; }
  const std::optional<ClassDensities>& densities() const { return densities_; }

  QuantifierEstimate estimate(const Matrix& bag_features, const EmSettings& settings = {}) const;
  /// Same estimate from posteriors the caller has already computed.
  QuantifierEstimate estimate_from_posteriors(const Matrix& posteriors,
                                              const EmSettings& settings = {}) const;

 private:
  QuantifierKind kind_;
  std::shared_ptr<const TrainedModel> model_;
  std::optional<ClassDensities> densities_;
};

inline constexpr double kDefaultBandwidth = 0.1;

/// Groups the model's validation posteriors by true label as KDE support.
Quantifier fit_kdey(std::shared_ptr<const TrainedModel> model, const LabelledSet& validation,
                    double bandwidth = kDefaultBandwidth);
Quantifier fit_cc(std::shared_ptr<const TrainedModel> model);

PrevalenceVector kdey_ml_estimate(const Quantifier& q, const Matrix& bag_features, double tol = 1e-6,
                                  std::size_t max_iter = 1000);

PrevalenceVector classify_and_count(const TrainedModel& model, const Matrix& bag_features);
PrevalenceVector classify_and_count(std::span<const int> predicted, std::size_t n_classes);

}  // namespace shiftselect
