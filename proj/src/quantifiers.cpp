#include "shiftselect/quantifiers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace shiftselect {

ClassDensities::ClassDensities(std::vector<Matrix> support, double bandwidth)
    : support_(std::move(support)), bandwidth_(bandwidth) {
  if (!(bandwidth_ > 0.0)) throw std::invalid_argument("KDE bandwidth must be positive");
  if (support_.empty()) throw std::invalid_argument("KDE needs at least one class");
  for (std::size_t j = 0; j < support_.size(); ++j) {
    if (support_[j].rows() == 0)
      throw std::invalid_argument("KDE: class " + std::to_string(j) + " has no support points");
    if (static_cast<std::size_t>(support_[j].cols()) != support_.size())
      throw std::invalid_argument("KDE: support points must be posterior vectors");
  }
  const double dim = static_cast<double>(support_.size());
  log_norm_ = -0.5 * dim * std::log(2.0 * std::numbers::pi * bandwidth_ * bandwidth_);
}

double ClassDensities::density(std::size_t j, const Eigen::RowVectorXd& point) const {
  const Matrix& s = support_.at(j);
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  double total = 0.0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) total += std::exp(log_norm_ - (s.row(r) - point).squaredNorm() * inv);
  return total / static_cast<double>(s.rows());
}

Matrix ClassDensities::evaluate(const Matrix& posteriors) const {
  if (static_cast<std::size_t>(posteriors.cols()) != n_classes())
    throw std::invalid_argument("KDE: posterior dimension mismatch");
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  Matrix out(posteriors.rows(), static_cast<Eigen::Index>(n_classes()));
  const Vector query_sq = posteriors.rowwise().squaredNorm();
  for (std::size_t j = 0; j < n_classes(); ++j) {
    const Matrix& s = support_[j];
    const Vector support_sq = s.rowwise().squaredNorm();
    Matrix sq = -2.0 * posteriors * s.transpose();
    sq.colwise() += query_sq;
    sq.rowwise() += support_sq.transpose();
    const Vector sums = (log_norm_ - sq.array().max(0.0) * inv).exp().rowwise().sum();
    out.col(static_cast<Eigen::Index>(j)) = sums / static_cast<double>(s.rows());
  }
  return out;
}

double mixture_log_likelihood(const Matrix& densities, std::span<const double> alpha) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < densities.rows(); ++i) {
    double mix = 0.0;
    for (Eigen::Index j = 0; j < densities.cols(); ++j)
      mix += alpha[static_cast<std::size_t>(j)] * std::max(densities(i, j), kDensityFloor);
    ll += std::log(std::max(mix, kDensityFloor));
  }
  return ll;
}

EmResult kdey_em(const Matrix& raw, const EmSettings& settings) {
  if (raw.rows() == 0) throw std::invalid_argument("EM: empty bag");
  const auto n = static_cast<std::size_t>(raw.cols());
  bool underflow = false;
  Matrix f = raw;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    if (f.row(i).maxCoeff() < kDensityFloor) underflow = true;
    f.row(i) = f.row(i).cwiseMax(kDensityFloor);
  }
  std::vector<double> alpha(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  std::vector<double> trace{mixture_log_likelihood(f, alpha)};
  const double bag = static_cast<double>(f.rows());
  std::size_t iter = 0;
  bool converged = false;
  while (iter < settings.max_iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      double mix = 0.0;
      for (std::size_t j = 0; j < n; ++j) mix += alpha[j] * f(i, static_cast<Eigen::Index>(j));
      for (std::size_t j = 0; j < n; ++j) next[j] += alpha[j] * f(i, static_cast<Eigen::Index>(j)) / mix;
    }
    double total = 0.0;
    for (double& v : next) total += (v /= bag);
    for (double& v : next) v /= total;  // removes rounding drift off the simplex
    double change = 0.0;
    for (std::size_t j = 0; j < n; ++j) change += std::abs(next[j] - alpha[j]);
    alpha.swap(next);
    ++iter;
    trace.push_back(mixture_log_likelihood(f, alpha));
    if (change < settings.tol) {
      converged = true;
      break;
    }
  }
  return EmResult{PrevalenceVector(alpha), std::move(trace), iter, converged, underflow};
}

std::string_view to_string(QuantifierKind kind) { return kind == QuantifierKind::CC ? "CC" : "KDEyML"; }

QuantifierKind parse_quantifier_kind(std::string_view name) {
  if (name == "CC") return QuantifierKind::CC;
  if (name == "KDEyML" || name == "KDEy-ML") return QuantifierKind::KDEyML;
  throw std::invalid_argument("unknown quantifier '" + std::string(name) + "'");
}

Quantifier::Quantifier(QuantifierKind kind, std::shared_ptr<const TrainedModel> model,
                       std::optional<ClassDensities> densities)
    : kind_(kind), model_(std::move(model)), densities_(std::move(densities)) {
  if (!model_) throw std::invalid_argument("quantifier needs a model");
  if (kind_ == QuantifierKind::KDEyML && !densities_)
    throw std::invalid_argument("KDEy-ML quantifier needs fitted densities");
}

QuantifierEstimate Quantifier::estimate(const Matrix& bag_features, const EmSettings& settings) const {
  return estimate_from_posteriors(model_->predict_posteriors(bag_features), settings);
}

QuantifierEstimate Quantifier::estimate_from_posteriors(const Matrix& posteriors,
                                                        const EmSettings& settings) const {
  if (posteriors.rows() == 0) throw std::invalid_argument("quantifier: empty bag");
  if (kind_ == QuantifierKind::CC) {
    const Labels predicted = argmax_rows(posteriors);
    return {classify_and_count(predicted, model_->n_classes()), false};
  }
  auto em = kdey_em(densities_->evaluate(posteriors), settings);
  return {std::move(em.prevalence), em.underflow};
}

Quantifier fit_kdey(std::shared_ptr<const TrainedModel> model, const LabelledSet& validation,
                    double bandwidth) {
  if (!model) throw std::invalid_argument("fit_kdey: null model");
  const auto positions = validation.class_positions();
  const Matrix posteriors = model->predict_posteriors(validation.features());
  std::vector<Matrix> support(validation.n_classes());
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (positions[j].empty())
      throw std::invalid_argument("fit_kdey: class " + std::to_string(j) + " missing from validation");
    support[j].resize(static_cast<Eigen::Index>(positions[j].size()), posteriors.cols());
    for (std::size_t r = 0; r < positions[j].size(); ++r)
      support[j].row(static_cast<Eigen::Index>(r)) = posteriors.row(static_cast<Eigen::Index>(positions[j][r]));
  }
  return Quantifier(QuantifierKind::KDEyML, std::move(model), ClassDensities(std::move(support), bandwidth));
}

Quantifier fit_cc(std::shared_ptr<const TrainedModel> model) {
  return Quantifier(QuantifierKind::CC, std::move(model), std::nullopt);
}

PrevalenceVector kdey_ml_estimate(const Quantifier& q, const Matrix& bag_features, double tol,
                                  std::size_t max_iter) {
  if (q.kind() != QuantifierKind::KDEyML) throw std::invalid_argument("kdey_ml_estimate: not a KDEy quantifier");
  return q.estimate(bag_features, EmSettings{tol, max_iter}).prevalence;
}

PrevalenceVector classify_and_count(std::span<const int> predicted, std::size_t n_classes) {
  if (predicted.empty()) throw std::invalid_argument("classify_and_count: empty bag");
  std::vector<std::size_t> counts(n_classes, 0);
  for (int y : predicted) ++counts.at(static_cast<std::size_t>(y));
  return PrevalenceVector::from_counts(std::span<const std::size_t>(counts));
}

PrevalenceVector classify_and_count(const TrainedModel& model, const Matrix& bag_features) {
  if (bag_features.rows() == 0) throw std::invalid_argument("classify_and_count: empty bag");
  const Labels predicted = model.predict_labels(bag_features);
  return classify_and_count(predicted, model.n_classes());
}

}  // namespace shiftselect
