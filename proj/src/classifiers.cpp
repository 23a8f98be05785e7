#include "shiftselect/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "shiftselect/random.hpp"

namespace shiftselect {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::LR: return "LR";
    case Family::KNN: return "KNN";
    case Family::MLP: return "MLP";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "LR") return Family::LR;
  if (name == "KNN") return Family::KNN;
  if (name == "MLP") return Family::MLP;
  throw std::invalid_argument("unknown classifier family '" + std::string(name) + "'");
}

std::vector<double> ClassWeights::class_multipliers(std::span<const std::size_t> class_counts) const {
  const std::size_t n = class_counts.size();
  std::vector<double> m(n, 1.0);
  switch (mode) {
    case Mode::None: break;
    case Mode::Balanced: {
      const double total =
          static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
      for (std::size_t j = 0; j < n; ++j)
        m[j] = class_counts[j] > 0 ? total / (static_cast<double>(n) * static_cast<double>(class_counts[j]))
                                   : 0.0;
      break;
    }
    case Mode::Explicit: {
      if (!explicit_weights || explicit_weights->size() != n)
        throw std::invalid_argument("explicit class weights missing or of wrong size");
      for (std::size_t j = 0; j < n; ++j) m[j] = static_cast<double>(n) * (*explicit_weights)[j];
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Hyperparameters

Family HyperParams::family() const {
  return std::visit(
      [](const auto& p) -> Family {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LrParams>) return Family::LR;
        else if constexpr (std::is_same_v<T, KnnParams>) return Family::KNN;
        else return Family::MLP;
      },
      params);
}

namespace {

nlohmann::json class_weight_json(const ClassWeights& cw) {
  switch (cw.mode) {
    case ClassWeights::Mode::Balanced: return "balanced";
    case ClassWeights::Mode::None: return "none";
    case ClassWeights::Mode::Explicit: return cw.explicit_weights->values();
  }
  return nullptr;
}

ClassWeights class_weight_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "balanced") return ClassWeights::balanced();
    if (s == "none") return ClassWeights::none();
    throw std::invalid_argument("unknown class_weight '" + s + "'");
  }
  return ClassWeights::explicit_vector(PrevalenceVector(j.get<std::vector<double>>()));
}

}  // namespace

std::string HyperParams::describe() const {
  std::ostringstream os;
  os << to_string(family()) << "(";
  std::visit(
      [&os](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LrParams>) {
          os << "C=" << p.C << ",class_weight=" << class_weight_json(p.class_weight).dump();
        } else if constexpr (std::is_same_v<T, KnnParams>) {
          os << "n_neighbors=" << p.n_neighbors << ",weights="
             << (p.weights == KnnWeighting::Uniform ? "uniform" : "distance");
        } else {
          os << "alpha=" << p.alpha << ",learning_rate="
             << (p.learning_rate == LearningRate::Constant ? "constant" : "adaptive");
        }
      },
      params);
  os << ")";
  return os.str();
}

nlohmann::json HyperParams::to_json() const {
  nlohmann::json j;
  j["family"] = std::string(to_string(family()));
  std::visit(
      [&j](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LrParams>) {
          j["C"] = p.C;
          j["class_weight"] = class_weight_json(p.class_weight);
        } else if constexpr (std::is_same_v<T, KnnParams>) {
          j["n_neighbors"] = p.n_neighbors;
          j["weights"] = p.weights == KnnWeighting::Uniform ? "uniform" : "distance";
        } else {
          j["alpha"] = p.alpha;
          j["learning_rate"] = p.learning_rate == LearningRate::Constant ? "constant" : "adaptive";
        }
      },
      params);
  return j;
}

HyperParams HyperParams::from_json(const nlohmann::json& j) {
  switch (parse_family(j.at("family").get<std::string>())) {
    case Family::LR:
      return {LrParams{j.at("C").get<double>(), class_weight_from_json(j.at("class_weight"))}};
    case Family::KNN: {
      const auto w = j.at("weights").get<std::string>();
      if (w != "uniform" && w != "distance") throw std::invalid_argument("unknown knn weights " + w);
      return {KnnParams{j.at("n_neighbors").get<int>(),
                        w == "uniform" ? KnnWeighting::Uniform : KnnWeighting::Distance}};
    }
    case Family::MLP: {
      const auto lr = j.at("learning_rate").get<std::string>();
      if (lr != "constant" && lr != "adaptive") throw std::invalid_argument("unknown learning_rate " + lr);
      return {MlpParams{j.at("alpha").get<double>(),
                        lr == "constant" ? LearningRate::Constant : LearningRate::Adaptive}};
    }
  }
  throw std::invalid_argument("bad hyperparameter record");
}

std::vector<ClassWeights> class_weight_candidates(std::size_t n_classes) {
  if (n_classes < 2) throw std::invalid_argument("class_weight_candidates: need at least 2 classes");
  std::vector<ClassWeights> out{ClassWeights::balanced(), ClassWeights::none()};
  if (n_classes == 2) {
    for (double g : {0.2, 0.4, 0.6, 0.8})
      out.push_back(ClassWeights::explicit_vector(PrevalenceVector({g, 1.0 - g})));
  } else {
    const double n = static_cast<double>(n_classes);
    const double high = 2.0 / n;
    const double low = (1.0 - high) / (n - 1.0);
    for (std::size_t j = 0; j < n_classes; ++j) {
      std::vector<double> v(n_classes, low);
      v[j] = high;
      out.push_back(ClassWeights::explicit_vector(PrevalenceVector(std::move(v))));
    }
  }
  return out;
}

std::vector<HyperParams> build_grid(Family family, std::size_t n_classes) {
  std::vector<HyperParams> grid;
  switch (family) {
    case Family::LR:
      for (const auto& cw : class_weight_candidates(n_classes))
        for (double C : {1e-2, 1e-1, 1e0, 1e1, 1e2}) grid.push_back({LrParams{C, cw}});
      break;
    case Family::KNN:
      for (int k : {5, 7, 9, 11, 13})
        for (auto w : {KnnWeighting::Uniform, KnnWeighting::Distance}) grid.push_back({KnnParams{k, w}});
      break;
    case Family::MLP:
      for (double alpha : {1e-5, 1e-4, 1e-3, 1e-2, 1e-1})
        for (auto lr : {LearningRate::Constant, LearningRate::Adaptive})
          grid.push_back({MlpParams{alpha, lr}});
      break;
  }
  return grid;
}

HyperParams default_model(Family family) {
  switch (family) {
    case Family::LR: return {LrParams{1.0, ClassWeights::none()}};
    case Family::KNN: return {KnnParams{5, KnnWeighting::Uniform}};
    case Family::MLP: return {MlpParams{1e-4, LearningRate::Constant}};
  }
  throw std::invalid_argument("unknown family");
}

// ---------------------------------------------------------------------------
// Shared numerics

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

Labels argmax_rows(const Matrix& posteriors) {
  Labels out(static_cast<std::size_t>(posteriors.rows()));
  for (Eigen::Index i = 0; i < posteriors.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < posteriors.cols(); ++j)
      if (posteriors(i, j) > posteriors(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace {

// Sum over rows of -log softmax(z)_y, and the softmax itself.
double cross_entropy_sum(const Matrix& logits, const Labels& labels, std::span<const double> weights,
                         Matrix& probs) {
  probs.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double s = e.sum();
    probs.row(i) = e / s;
    const double ce = std::log(s) + mx - logits(i, labels[static_cast<std::size_t>(i)]);
    total += (weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)]) * ce;
  }
  return total;
}

double lr_eval(const LinearWeights& p, const Matrix& X, const Labels& y, std::span<const double> w,
               double C, LinearWeights* grad) {
  const double n = static_cast<double>(X.rows());
  Matrix logits = X * p.weights;
  logits.rowwise() += p.bias.transpose();
  Matrix probs;
  const double ce = cross_entropy_sum(logits, y, w, probs);
  const double value = (ce + p.weights.squaredNorm() / (2.0 * C)) / n;
  if (grad) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      probs(i, y[static_cast<std::size_t>(i)]) -= 1.0;
      probs.row(i) *= w[static_cast<std::size_t>(i)];
    }
    grad->weights = (X.transpose() * probs + p.weights / C) / n;
    grad->bias = probs.colwise().sum().transpose() / n;
  }
  return value;
}

double mlp_eval(const MlpWeights& p, const Matrix& X, const Labels& y, double alpha, MlpWeights* grad) {
  const double n = static_cast<double>(X.rows());
  Matrix hidden = X * p.hidden_weights;
  hidden.rowwise() += p.hidden_bias.transpose();
  hidden = hidden.array().tanh();
  Matrix logits = hidden * p.output_weights;
  logits.rowwise() += p.output_bias.transpose();
  Matrix probs;
  const double ce = cross_entropy_sum(logits, y, {}, probs);
  const double penalty =
      alpha / (2.0 * n) * (p.hidden_weights.squaredNorm() + p.output_weights.squaredNorm());
  const double value = ce / n + penalty;
  if (grad) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) probs(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    probs /= n;
    grad->output_weights = hidden.transpose() * probs + (alpha / n) * p.output_weights;
    grad->output_bias = probs.colwise().sum().transpose();
    Matrix d_hidden = (probs * p.output_weights.transpose()).array() * (1.0 - hidden.array().square());
    grad->hidden_weights = X.transpose() * d_hidden + (alpha / n) * p.hidden_weights;
    grad->hidden_bias = d_hidden.colwise().sum().transpose();
  }
  return value;
}

void check_training_data(const Matrix& X, const Labels& y, std::size_t n_classes) {
  if (X.rows() == 0) throw std::invalid_argument("train: empty training set");
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw std::invalid_argument("train: features and labels differ in length");
  std::vector<bool> seen(n_classes, false);
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
      throw std::invalid_argument("train: label out of range");
    seen[static_cast<std::size_t>(label)] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw std::invalid_argument("train: every class must be present in the training set");
}

std::vector<std::size_t> counts_of(const Labels& y, std::size_t n_classes) {
  std::vector<std::size_t> c(n_classes, 0);
  for (int label : y) ++c[static_cast<std::size_t>(label)];
  return c;
}

TrainedModel train_lr(const HyperParams& hp, const LrParams& lp, const Matrix& X, const Labels& y,
                      std::size_t n_classes, std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(X.cols());
  const auto k = static_cast<Eigen::Index>(n_classes);
  const auto multipliers = lp.class_weight.class_multipliers(counts_of(y, n_classes));
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) w[i] = multipliers[static_cast<std::size_t>(y[i])];

  LinearWeights p{Matrix::Zero(d, k), Vector::Zero(k)};
  LinearWeights g;
  double value = lr_eval(p, X, y, w, lp.C, &g);
  double step = 1.0;
  std::size_t iter = 0;
  auto snapshot = [&](const LinearWeights& state, double loss) {
    return std::make_shared<const TrainedModel>(hp, n_classes, static_cast<std::size_t>(d), seed,
                                                TrainingInfo{iter, loss}, state);
  };
  constexpr std::size_t kMaxIter = 1000;
  constexpr double kGradTol = 1e-5;
  for (; iter < kMaxIter; ++iter) {
    const double gmax = std::max(g.weights.cwiseAbs().maxCoeff(), g.bias.cwiseAbs().maxCoeff());
    if (gmax < kGradTol) break;
    const double gnorm2 = g.weights.squaredNorm() + g.bias.squaredNorm();
    step = std::min(step * 2.0, 1e6);
    LinearWeights cand;
    double cand_value = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      cand.weights = p.weights - step * g.weights;
      cand.bias = p.bias - step * g.bias;
      cand_value = lr_eval(cand, X, y, w, lp.C, nullptr);
      if (std::isfinite(cand_value) && cand_value <= value - 0.5 * step * gnorm2) break;
      step *= 0.5;
    }
    if (!std::isfinite(cand_value)) throw TrainingError("LR training: non-finite loss", snapshot(p, value));
    if (cand_value > value) break;  // line search exhausted; at numerical optimum
    p = std::move(cand);
    value = lr_eval(p, X, y, w, lp.C, &g);
  }
  return TrainedModel(hp, n_classes, static_cast<std::size_t>(d), seed, TrainingInfo{iter, value},
                      std::move(p));
}

TrainedModel train_mlp(const HyperParams& hp, const MlpParams& mp, const Matrix& X, const Labels& y,
                       std::size_t n_classes, std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(X.cols());
  const auto h = static_cast<Eigen::Index>(kMlpHiddenUnits);
  const auto k = static_cast<Eigen::Index>(n_classes);
  Rng rng = make_rng(seed, 0x31F);

  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = bound * u(rng);
    return m;
  };
  MlpWeights p;
  p.hidden_weights = glorot(d, h, static_cast<double>(d), static_cast<double>(h));
  p.hidden_bias = glorot(h, 1, static_cast<double>(d), static_cast<double>(h)).col(0);
  p.output_weights = glorot(h, k, static_cast<double>(h), static_cast<double>(k));
  p.output_bias = glorot(k, 1, static_cast<double>(h), static_cast<double>(k)).col(0);

  constexpr std::size_t kEpochs = 200;
  constexpr std::size_t kBatch = 32;
  constexpr double kMinStep = 1e-6;
  constexpr double kTol = 1e-4;
  double step = 1e-2;
  double best_loss = std::numeric_limits<double>::infinity();
  double last_finite_loss = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t epoch = 0;
  MlpWeights g;
  Matrix xb;
  Labels yb;
  for (; epoch < kEpochs && step >= kMinStep; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    const MlpWeights epoch_start = p;
    for (std::size_t start = 0; start < n; start += kBatch) {
      const std::size_t stop = std::min(n, start + kBatch);
      xb.resize(static_cast<Eigen::Index>(stop - start), d);
      yb.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = X.row(static_cast<Eigen::Index>(order[i]));
        yb[i - start] = y[order[i]];
      }
      const double loss = mlp_eval(p, xb, yb, mp.alpha, &g);
      if (!std::isfinite(loss))
        throw TrainingError("MLP training: non-finite loss",
                            std::make_shared<const TrainedModel>(
                                hp, n_classes, static_cast<std::size_t>(d), seed,
                                TrainingInfo{epoch, last_finite_loss}, epoch_start));
      epoch_loss += loss * static_cast<double>(stop - start);
      p.hidden_weights -= step * g.hidden_weights;
      p.hidden_bias -= step * g.hidden_bias;
      p.output_weights -= step * g.output_weights;
      p.output_bias -= step * g.output_bias;
    }
    epoch_loss /= static_cast<double>(n);
    last_finite_loss = epoch_loss;
    if (mp.learning_rate == LearningRate::Adaptive && epoch_loss > best_loss - kTol) step *= 0.5;
    best_loss = std::min(best_loss, epoch_loss);
  }
  const double final_loss = mlp_eval(p, X, y, mp.alpha, nullptr);
  if (!std::isfinite(final_loss))
    throw TrainingError("MLP training: non-finite loss",
                        std::make_shared<const TrainedModel>(hp, n_classes, static_cast<std::size_t>(d),
                                                             seed, TrainingInfo{epoch, last_finite_loss},
                                                             p));
  return TrainedModel(hp, n_classes, static_cast<std::size_t>(d), seed, TrainingInfo{epoch, final_loss},
                      std::move(p));
}

}  // namespace

TrainedModel train(const HyperParams& hp, const Matrix& features, const Labels& labels,
                   std::size_t n_classes, std::uint64_t seed) {
  check_training_data(features, labels, n_classes);
  if (const auto* lp = std::get_if<LrParams>(&hp.params))
    return train_lr(hp, *lp, features, labels, n_classes, seed);
  if (const auto* mp = std::get_if<MlpParams>(&hp.params))
    return train_mlp(hp, *mp, features, labels, n_classes, seed);
  const auto& kp = std::get<KnnParams>(hp.params);
  if (kp.n_neighbors < 1) throw std::invalid_argument("KNN: n_neighbors must be positive");
  return TrainedModel(hp, n_classes, static_cast<std::size_t>(features.cols()), seed, TrainingInfo{},
                      NeighbourStore{features, labels});
}

TrainedModel train(const HyperParams& hp, const LabelledSet& train_set, std::uint64_t seed) {
  return train(hp, train_set.features(), train_set.labels(), train_set.n_classes(), seed);
}

// ---------------------------------------------------------------------------
// TrainedModel

TrainedModel::TrainedModel(HyperParams hp, std::size_t n_classes, std::size_t n_features,
                           std::uint64_t seed, TrainingInfo info, Parameters params)
    : hp_(std::move(hp)),
      n_classes_(n_classes),
      n_features_(n_features),
      seed_(seed),
      info_(info),
      params_(std::move(params)) {
  const bool matches = std::visit(
      [this](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearWeights>) return family() == Family::LR;
        else if constexpr (std::is_same_v<T, NeighbourStore>) return family() == Family::KNN;
        else return family() == Family::MLP;
      },
      params_);
  if (!matches) throw std::invalid_argument("trained model: parameters do not match family");
}

namespace {

Matrix knn_posteriors(const NeighbourStore& store, const KnnParams& kp, const Matrix& X,
                      std::size_t n_classes) {
  const std::size_t n_train = store.labels.size();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(kp.n_neighbors), n_train);
  Matrix out = Matrix::Zero(X.rows(), static_cast<Eigen::Index>(n_classes));
  const Vector train_sq = store.features.rowwise().squaredNorm();
  std::vector<std::pair<double, std::size_t>> dist(n_train);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector q = X.row(i).transpose();
    const Vector cross = store.features * q;
    const double q_sq = q.squaredNorm();
    for (std::size_t t = 0; t < n_train; ++t) {
      const auto ti = static_cast<Eigen::Index>(t);
      dist[t] = {std::max(0.0, train_sq(ti) - 2.0 * cross(ti) + q_sq), t};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    double total = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      const double w = kp.weights == KnnWeighting::Uniform ? 1.0 : 1.0 / (std::sqrt(dist[r].first) + 1e-9);
      out(i, store.labels[dist[r].second]) += w;
      total += w;
    }
    out.row(i) /= total;
  }
  return out;
}

}  // namespace

Matrix TrainedModel::predict_posteriors(const Matrix& features) const {
  if (static_cast<std::size_t>(features.cols()) != n_features_)
    throw std::invalid_argument("predict: expected " + std::to_string(n_features_) + " features, got " +
                                std::to_string(features.cols()));
  if (const auto* lw = std::get_if<LinearWeights>(&params_)) {
    Matrix logits = features * lw->weights;
    logits.rowwise() += lw->bias.transpose();
    return softmax_rows(logits);
  }
  if (const auto* mw = std::get_if<MlpWeights>(&params_)) {
    Matrix hidden = features * mw->hidden_weights;
    hidden.rowwise() += mw->hidden_bias.transpose();
    hidden = hidden.array().tanh();
    Matrix logits = hidden * mw->output_weights;
    logits.rowwise() += mw->output_bias.transpose();
    return softmax_rows(logits);
  }
  return knn_posteriors(std::get<NeighbourStore>(params_), std::get<KnnParams>(hp_.params), features,
                        n_classes_);
}

Labels TrainedModel::predict_labels(const Matrix& features) const {
  return argmax_rows(predict_posteriors(features));
}

BinaryRecord TrainedModel::to_record() const {
  BinaryRecord rec;
  rec.header = {{"kind", "model"},
                {"family", std::string(to_string(family()))},
                {"hyperparams", hp_.to_json()},
                {"n_classes", n_classes_},
                {"n_features", n_features_},
                {"seed", seed_},
                {"epochs", info_.epochs}};
  rec.arrays["final_loss"] = Matrix::Constant(1, 1, info_.final_loss);
  std::visit(
      [&rec](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearWeights>) {
          rec.arrays["weights"] = p.weights;
          rec.arrays["bias"] = p.bias;
        } else if constexpr (std::is_same_v<T, NeighbourStore>) {
          rec.arrays["features"] = p.features;
          Matrix labels(static_cast<Eigen::Index>(p.labels.size()), 1);
          for (std::size_t i = 0; i < p.labels.size(); ++i)
            labels(static_cast<Eigen::Index>(i), 0) = p.labels[i];
          rec.arrays["labels"] = labels;
        } else {
          rec.arrays["hidden_weights"] = p.hidden_weights;
          rec.arrays["hidden_bias"] = p.hidden_bias;
          rec.arrays["output_weights"] = p.output_weights;
          rec.arrays["output_bias"] = p.output_bias;
        }
      },
      params_);
  return rec;
}

TrainedModel TrainedModel::from_record(const BinaryRecord& rec) {
  if (rec.header.at("kind") != "model") throw std::runtime_error("record is not a model");
  auto hp = HyperParams::from_json(rec.header.at("hyperparams"));
  const auto n_classes = rec.header.at("n_classes").get<std::size_t>();
  const auto n_features = rec.header.at("n_features").get<std::size_t>();
  const auto seed = rec.header.at("seed").get<std::uint64_t>();
  TrainingInfo info{rec.header.at("epochs").get<std::size_t>(), rec.array("final_loss")(0, 0)};
  Parameters params;
  switch (hp.family()) {
    case Family::LR:
      params = LinearWeights{rec.array("weights"), rec.array("bias").col(0)};
      break;
    case Family::KNN: {
      const Matrix& l = rec.array("labels");
      Labels labels(static_cast<std::size_t>(l.rows()));
      for (Eigen::Index i = 0; i < l.rows(); ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(l(i, 0));
      params = NeighbourStore{rec.array("features"), std::move(labels)};
      break;
    }
    case Family::MLP:
      params = MlpWeights{rec.array("hidden_weights"), rec.array("hidden_bias").col(0),
                          rec.array("output_weights"), rec.array("output_bias").col(0)};
      break;
  }
  return TrainedModel(std::move(hp), n_classes, n_features, seed, info, std::move(params));
}

// ---------------------------------------------------------------------------
// Flattened objectives

Vector flatten(const LinearWeights& w) {
  Vector theta(w.weights.size() + w.bias.size());
  theta << Eigen::Map<const Vector>(w.weights.data(), w.weights.size()), w.bias;
  return theta;
}

LinearWeights unflatten_linear(const Vector& theta, std::size_t n_features, std::size_t n_classes) {
  const auto d = static_cast<Eigen::Index>(n_features);
  const auto k = static_cast<Eigen::Index>(n_classes);
  if (theta.size() != d * k + k) throw std::invalid_argument("unflatten_linear: size mismatch");
  return {Eigen::Map<const Matrix>(theta.data(), d, k), theta.tail(k)};
}

ObjectiveValue lr_objective(const Vector& theta, const Matrix& features, const Labels& labels,
                            std::span<const double> sample_weights, double C, std::size_t n_classes) {
  const auto p = unflatten_linear(theta, static_cast<std::size_t>(features.cols()), n_classes);
  std::vector<double> w(sample_weights.begin(), sample_weights.end());
  if (w.empty()) w.assign(labels.size(), 1.0);
  LinearWeights g;
  const double value = lr_eval(p, features, labels, w, C, &g);
  return {value, flatten(g)};
}

Vector flatten(const MlpWeights& w) {
  Vector theta(w.hidden_weights.size() + w.hidden_bias.size() + w.output_weights.size() +
               w.output_bias.size());
  theta << Eigen::Map<const Vector>(w.hidden_weights.data(), w.hidden_weights.size()), w.hidden_bias,
      Eigen::Map<const Vector>(w.output_weights.data(), w.output_weights.size()), w.output_bias;
  return theta;
}

MlpWeights unflatten_mlp(const Vector& theta, std::size_t n_features, std::size_t hidden,
                         std::size_t n_classes) {
  const auto d = static_cast<Eigen::Index>(n_features);
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto k = static_cast<Eigen::Index>(n_classes);
  if (theta.size() != d * h + h + h * k + k) throw std::invalid_argument("unflatten_mlp: size mismatch");
  MlpWeights w;
  Eigen::Index off = 0;
  w.hidden_weights = Eigen::Map<const Matrix>(theta.data() + off, d, h);
  off += d * h;
  w.hidden_bias = theta.segment(off, h);
  off += h;
  w.output_weights = Eigen::Map<const Matrix>(theta.data() + off, h, k);
  off += h * k;
  w.output_bias = theta.segment(off, k);
  return w;
}

ObjectiveValue mlp_objective(const Vector& theta, const Matrix& features, const Labels& labels,
                             double alpha, std::size_t hidden, std::size_t n_classes) {
  const auto p = unflatten_mlp(theta, static_cast<std::size_t>(features.cols()), hidden, n_classes);
  MlpWeights g;
  const double value = mlp_eval(p, features, labels, alpha, &g);
  return {value, flatten(g)};
}

}  // namespace shiftselect
