#pragma once

#include <memory>
#include <span>

#include "shiftselect/classifiers.hpp"
#include "shiftselect/dataspace.hpp"
#include "shiftselect/prevalence.hpp"
#include "shiftselect/quantifiers.hpp"

namespace shiftselect {

/// m(i, j) = P(predicted = i | true = j). Columns are probability vectors.
class RateMatrix {
 public:
  explicit RateMatrix(Matrix m);
  const Matrix& matrix() const { return m_; }
  std::size_t n_classes() const { return static_cast<std::size_t>(m_.cols()); }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Matrix m_;
};

/// c(i, j) = Q(predicted = i, true = j). Nonnegative, sums to one.
class ContingencyTable {
 public:
  explicit ContingencyTable(Matrix c);
  const Matrix& matrix() const { return c_; }
  double operator()(std::size_t i, std::size_t j) const {
    return c_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Matrix c_;
};

inline constexpr double kFallbackSmoothing = 1e-6;

/// (count(pred=i, true=j) + smoothing) / (count(true=j) + n * smoothing).
/// With smoothing 0 and some class never predicted, kFallbackSmoothing is used.
RateMatrix estimate_rate_matrix(std::span<const int> predicted, std::span<const int> truth,
                                std::size_t n_classes, double smoothing = 0.0);
RateMatrix estimate_rate_matrix(const TrainedModel& model, const LabelledSet& validation,
                                double smoothing = 0.0);

struct LeapSettings {
  double weight = 1.0;  // trust in the quantifier block relative to the count block
  double tol = 1e-8;    // gradient-map norm
  std::size_t max_iter = 10000;
};

struct LeapSolution {
  PrevalenceVector theta;
  ContingencyTable table;
  std::size_t iterations = 0;
  double gradient_map_norm = 0.0;
  bool converged = false;
};

/// Euclidean projection onto the probability simplex.
Vector project_to_simplex(const Vector& v);

/// ||M theta - rho||^2 + weight * ||theta - qhat||^2.
double leap_objective(const RateMatrix& m, const Vector& theta, const PrevalenceVector& rho,
                      const PrevalenceVector& qhat, double weight);

/// Solves the stacked system {M theta = rho, theta = qhat} in the least-squares
/// sense over the simplex by projected gradient (step 1/L, started at qhat),
/// then maps theta onto the contingency table c(i, j) = m(i, j) * theta_j.
LeapSolution leap_solve(const RateMatrix& m, const PrevalenceVector& rho, const PrevalenceVector& qhat,
                        const LeapSettings& settings = {});

/// Vanilla accuracy: the trace.
double accuracy_from_table(const ContingencyTable& c);

struct CapEstimate {
  double accuracy = 0.0;
  LeapSolution solution;
  PrevalenceVector rho;
  PrevalenceVector qhat;
  bool solver_warning = false;
  bool quantifier_warning = false;
};

/// Accuracy estimate from a rate matrix, the predicted-label distribution on
/// the bag and a prevalence estimate.
CapEstimate cap_estimate(const RateMatrix& m, const PrevalenceVector& rho, const PrevalenceVector& qhat,
                         const LeapSettings& settings = {});

/// What a CAP predictor needs to know about a bag: the classifier's hard
/// predictions and, for KDEy, the class densities at each posterior.
struct ScoredBag {
  Labels predicted;
  Matrix densities;  // empty for CC
};

struct CapSettings {
  QuantifierKind quantifier = QuantifierKind::KDEyML;
  double bandwidth = kDefaultBandwidth;
  EmSettings em;
  LeapSettings leap;
  double smoothing = 0.0;
};

/// Per-model accuracy predictor. Rate matrix and quantifier share the
/// validation set and model they were fitted on.
class CapPredictor {
 public:
  CapPredictor(std::shared_ptr<const TrainedModel> model, RateMatrix rates, Quantifier quantifier,
               LeapSettings leap, EmSettings em);

  const std::shared_ptr<const TrainedModel>& model() const { return model_; }
  const RateMatrix& rates() const { return rates_; }
  const Quantifier& quantifier() const { return quantifier_; }
  const LeapSettings& leap_settings() const { return leap_; }
  const EmSettings& em_settings() const { return em_; }

  ScoredBag score(const Matrix& bag_features) const;
  CapEstimate predict(const Matrix& bag_features) const;
  CapEstimate predict(const ScoredBag& bag) const;

 private:
  std::shared_ptr<const TrainedModel> model_;
  RateMatrix rates_;
  Quantifier quantifier_;
  LeapSettings leap_;
  EmSettings em_;
};

CapPredictor fit_cap(std::shared_ptr<const TrainedModel> model, const LabelledSet& validation,
                     const CapSettings& settings = {});

double cap_predict(const CapPredictor& psi, const Matrix& bag_features);

struct PpsAccuracies {
  double source = 0.0;  // accuracy under training prevalence p
  double target = 0.0;  // accuracy under shifted prevalence q
};

/// Binary accuracies tpr*p + tnr*(1-p) and tpr*q + tnr*(1-q) for positive-class
/// prevalences p and q. Throws std::invalid_argument outside [0, 1].
PpsAccuracies pps_accuracy_identity(double tpr, double tnr, double p, double q);

}  // namespace shiftselect
