#include "shiftselect/cap.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace shiftselect {

RateMatrix::RateMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0) throw std::invalid_argument("rate matrix must be square");
  for (Eigen::Index j = 0; j < m_.cols(); ++j) {
    if ((m_.col(j).array() < 0.0).any()) throw std::invalid_argument("rate matrix: negative entry");
    if (std::abs(m_.col(j).sum() - 1.0) > 1e-9) throw std::invalid_argument("rate matrix: column does not sum to 1");
  }
}

ContingencyTable::ContingencyTable(Matrix c) : c_(std::move(c)) {
  if (c_.rows() != c_.cols() || c_.rows() == 0) throw std::invalid_argument("contingency table must be square");
  if ((c_.array() < 0.0).any()) throw std::invalid_argument("contingency table: negative entry");
  if (std::abs(c_.sum() - 1.0) > 1e-9) throw std::invalid_argument("contingency table: does not sum to 1");
}

RateMatrix estimate_rate_matrix(std::span<const int> predicted, std::span<const int> truth,
                                std::size_t n_classes, double smoothing) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("rate matrix: length mismatch");
  const auto n = static_cast<Eigen::Index>(n_classes);
  Matrix counts = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < truth.size(); ++i) counts(predicted[i], truth[i]) += 1.0;
  const Vector col_totals = counts.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < n; ++j)
    if (col_totals(j) == 0.0)
      throw std::invalid_argument("rate matrix: class " + std::to_string(j) + " absent from validation");
  if (smoothing == 0.0 && (counts.rowwise().sum().array() == 0.0).any()) smoothing = kFallbackSmoothing;
  Matrix m(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      m(i, j) = (counts(i, j) + smoothing) / (col_totals(j) + static_cast<double>(n) * smoothing);
  return RateMatrix(std::move(m));
}

RateMatrix estimate_rate_matrix(const TrainedModel& model, const LabelledSet& validation, double smoothing) {
  const Labels predicted = model.predict_labels(validation.features());
  const Labels truth = validation.labels();
  return estimate_rate_matrix(predicted, truth, validation.n_classes(), smoothing);
}

Vector project_to_simplex(const Vector& v) {
  Vector sorted = v;
  std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (Eigen::Index k = 0; k < sorted.size(); ++k) {
    cumulative += sorted(k);
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted(k) - t > 0.0) tau = t;
  }
  Vector out = (v.array() - tau).max(0.0);
  return out / out.sum();
}

double leap_objective(const RateMatrix& m, const Vector& theta, const PrevalenceVector& rho,
                      const PrevalenceVector& qhat, double weight) {
  const Eigen::Map<const Vector> r(rho.values().data(), static_cast<Eigen::Index>(rho.size()));
  const Eigen::Map<const Vector> q(qhat.values().data(), static_cast<Eigen::Index>(qhat.size()));
  return (m.matrix() * theta - r).squaredNorm() + weight * (theta - q).squaredNorm();
}

namespace {

ContingencyTable table_from_theta(const RateMatrix& m, const Vector& theta) {
  Matrix c = m.matrix() * theta.asDiagonal();
  c /= c.sum();  // absorbs rounding so the table invariant holds to machine precision
  return ContingencyTable(std::move(c));
}

PrevalenceVector to_prevalence(const Vector& v) {
  return PrevalenceVector(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

LeapSolution leap_solve(const RateMatrix& m, const PrevalenceVector& rho, const PrevalenceVector& qhat,
                        const LeapSettings& settings) {
  const auto n = static_cast<Eigen::Index>(m.n_classes());
  if (static_cast<Eigen::Index>(rho.size()) != n || static_cast<Eigen::Index>(qhat.size()) != n)
    throw std::invalid_argument("leap_solve: dimension mismatch");
  if (!(settings.weight > 0.0)) throw std::invalid_argument("leap_solve: weight must be positive");
  const Matrix& M = m.matrix();
  const Eigen::Map<const Vector> r(rho.values().data(), n);
  const Eigen::Map<const Vector> q(qhat.values().data(), n);

  const Matrix gram = M.transpose() * M;
  const Vector mtr = M.transpose() * r;
  const double lambda_max = Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double lipschitz = 2.0 * (lambda_max + settings.weight);

  Vector theta = q;
  Vector best = theta;
  double best_gmap = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  bool converged = false;
  for (;; ++iter) {
    const Vector grad = 2.0 * (gram * theta - mtr) + 2.0 * settings.weight * (theta - q);
    const Vector next = project_to_simplex(theta - grad / lipschitz);
    const double gmap = lipschitz * (theta - next).norm();
    if (gmap < best_gmap) {
      best_gmap = gmap;
      best = theta;
    }
    if (gmap < settings.tol) {
      converged = true;
      break;
    }
    if (iter >= settings.max_iter) break;
    theta = next;
  }
  return LeapSolution{to_prevalence(best), table_from_theta(m, best), iter, best_gmap, converged};
}

double accuracy_from_table(const ContingencyTable& c) { return c.matrix().trace(); }

CapEstimate cap_estimate(const RateMatrix& m, const PrevalenceVector& rho, const PrevalenceVector& qhat,
                         const LeapSettings& settings) {
  auto solution = leap_solve(m, rho, qhat, settings);
  const double acc = std::clamp(accuracy_from_table(solution.table), 0.0, 1.0);
  const bool warn = !solution.converged;
  return CapEstimate{acc, std::move(solution), rho, qhat, warn, false};
}

CapPredictor::CapPredictor(std::shared_ptr<const TrainedModel> model, RateMatrix rates, Quantifier quantifier,
                           LeapSettings leap, EmSettings em)
    : model_(std::move(model)), rates_(std::move(rates)), quantifier_(std::move(quantifier)), leap_(leap), em_(em) {
  if (!model_) throw std::invalid_argument("CAP predictor needs a model");
  if (quantifier_.model() != model_) throw std::invalid_argument("CAP predictor: quantifier bound to another model");
  if (rates_.n_classes() != model_->n_classes()) throw std::invalid_argument("CAP predictor: class count mismatch");
}

ScoredBag CapPredictor::score(const Matrix& bag_features) const {
  const Matrix posteriors = model_->predict_posteriors(bag_features);
  ScoredBag out{argmax_rows(posteriors), {}};
  if (quantifier_.kind() == QuantifierKind::KDEyML) out.densities = quantifier_.densities()->evaluate(posteriors);
  return out;
}

CapEstimate CapPredictor::predict(const ScoredBag& bag) const {
  if (bag.predicted.empty()) throw std::invalid_argument("cap_predict: empty bag");
  const PrevalenceVector rho = classify_and_count(bag.predicted, model_->n_classes());
  PrevalenceVector qhat = rho;
  bool q_warn = false;
  if (quantifier_.kind() == QuantifierKind::KDEyML) {
    auto em = kdey_em(bag.densities, em_);
    qhat = std::move(em.prevalence);
    q_warn = em.underflow;
  }
  auto est = cap_estimate(rates_, rho, qhat, leap_);
  est.quantifier_warning = q_warn;
  return est;
}

CapEstimate CapPredictor::predict(const Matrix& bag_features) const { return predict(score(bag_features)); }

CapPredictor fit_cap(std::shared_ptr<const TrainedModel> model, const LabelledSet& validation,
                     const CapSettings& settings) {
  RateMatrix rates = estimate_rate_matrix(*model, validation, settings.smoothing);
  Quantifier q = settings.quantifier == QuantifierKind::KDEyML ? fit_kdey(model, validation, settings.bandwidth)
                                                               : fit_cc(model);
  return CapPredictor(std::move(model), std::move(rates), std::move(q), settings.leap, settings.em);
}

double cap_predict(const CapPredictor& psi, const Matrix& bag_features) { return psi.predict(bag_features).accuracy; }

PpsAccuracies pps_accuracy_identity(double tpr, double tnr, double p, double q) {
  for (double v : {tpr, tnr, p, q})
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("pps_accuracy_identity: inputs must lie in [0, 1]");
  return {tpr * p + tnr * (1.0 - p), tpr * q + tnr * (1.0 - q)};
}

}  // namespace shiftselect
