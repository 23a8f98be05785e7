#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "shiftselect/binary_record.hpp"
#include "shiftselect/dataspace.hpp"
#include "shiftselect/prevalence.hpp"

namespace shiftselect {

enum class Family { LR, KNN, MLP };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);
inline constexpr Family kAllFamilies[] = {Family::LR, Family::KNN, Family::MLP};

/// How training instances are weighted by class in the LR loss.
struct ClassWeights {
  enum class Mode { Balanced, None, Explicit };

  Mode mode = Mode::None;
  std::optional<PrevalenceVector> explicit_weights;  // present iff mode == Explicit

  static ClassWeights balanced() { return {Mode::Balanced, std::nullopt}; }
  static ClassWeights none() { return {Mode::None, std::nullopt}; }
  static ClassWeights explicit_vector(PrevalenceVector v) { return {Mode::Explicit, std::move(v)}; }

  /// Per-class multipliers: balanced N/(n*N_j), none 1, explicit n*v_j (so the
  /// uniform vector reproduces "none").
  std::vector<double> class_multipliers(std::span<const std::size_t> class_counts) const;

  bool operator==(const ClassWeights&) const = default;
};

enum class KnnWeighting { Uniform, Distance };
enum class LearningRate { Constant, Adaptive };

struct LrParams {
  double C = 1.0;
  ClassWeights class_weight = ClassWeights::none();
  bool operator==(const LrParams&) const = default;
};

struct KnnParams {
  int n_neighbors = 5;
  KnnWeighting weights = KnnWeighting::Uniform;
  bool operator==(const KnnParams&) const = default;
};

struct MlpParams {
  double alpha = 1e-4;
  LearningRate learning_rate = LearningRate::Constant;
  bool operator==(const MlpParams&) const = default;
};

/// One point of a family's hyperparameter grid.
struct HyperParams {
  std::variant<LrParams, KnnParams, MlpParams> params;

  Family family() const;
  std::string describe() const;
  nlohmann::json to_json() const;
  static HyperParams from_json(const nlohmann::json& j);

  bool operator==(const HyperParams&) const = default;
};

/// The balanced and none schemes followed by one-class-at-a-time emphasis:
/// for two classes (g, 1-g) with g in {0.2, 0.4, 0.6, 0.8}; otherwise each
/// class in turn gets 2/n and the rest share the remainder equally.
std::vector<ClassWeights> class_weight_candidates(std::size_t n_classes);

/// Full Cartesian grid of a family.
std::vector<HyperParams> build_grid(Family family, std::size_t n_classes);

/// Library defaults: LR C=1 unweighted, KNN k=5 uniform, MLP alpha=1e-4 constant.
HyperParams default_model(Family family);

// ---------------------------------------------------------------------------

struct LinearWeights {
  Matrix weights;  // n_features x n_classes
  Vector bias;     // n_classes
};

struct NeighbourStore {
  Matrix features;
  Labels labels;
};

struct MlpWeights {
  Matrix hidden_weights;  // n_features x hidden
  Vector hidden_bias;
  Matrix output_weights;  // hidden x n_classes
  Vector output_bias;
};

struct TrainingInfo {
  std::size_t epochs = 0;  // iterations for LR, epochs for MLP, 0 for KNN
  double final_loss = 0.0;
};

/// An immutable fitted classifier.
class TrainedModel {
 public:
  using Parameters = std::variant<LinearWeights, NeighbourStore, MlpWeights>;

  TrainedModel(HyperParams hp, std::size_t n_classes, std::size_t n_features, std::uint64_t seed,
               TrainingInfo info, Parameters params);

  Family family() const { return hp_.family(); }
  const HyperParams& hyperparams() const { return hp_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t n_features() const { return n_features_; }
  std::uint64_t seed() const { return seed_; }
  const TrainingInfo& info() const { return info_; }
  const Parameters& parameters() const { return params_; }

  /// One row per instance; every row is a probability vector.
  Matrix predict_posteriors(const Matrix& features) const;
  /// Argmax of the posteriors, lowest class index on ties.
  Labels predict_labels(const Matrix& features) const;

  BinaryRecord to_record() const;
  static TrainedModel from_record(const BinaryRecord& record);

 private:
  HyperParams hp_;
  std::size_t n_classes_;
  std::size_t n_features_;
  std::uint64_t seed_;
  TrainingInfo info_;
  Parameters params_;
};

/// Thrown when training produces a non-finite loss. Carries the last state
/// whose loss was finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::shared_ptr<const TrainedModel> last_finite)
      : std::runtime_error(what), last_finite_(std::move(last_finite)) {}
  const std::shared_ptr<const TrainedModel>& last_finite() const { return last_finite_; }

 private:
  std::shared_ptr<const TrainedModel> last_finite_;
};

TrainedModel train(const HyperParams& hp, const LabelledSet& train_set, std::uint64_t seed);
TrainedModel train(const HyperParams& hp, const Matrix& features, const Labels& labels,
                   std::size_t n_classes, std::uint64_t seed);

Labels argmax_rows(const Matrix& posteriors);
Matrix softmax_rows(const Matrix& logits);

// ---------------------------------------------------------------------------
// Training objectives on flattened parameter vectors, exposed for gradient checks.

struct ObjectiveValue {
  double value = 0.0;
  Vector gradient;
};

/// Flattened LR parameters: column-major weights then bias.
Vector flatten(const LinearWeights& w);
LinearWeights unflatten_linear(const Vector& theta, std::size_t n_features, std::size_t n_classes);

/// (1/N) * [sum_i w_i * CE_i + ||W||^2 / (2C)], bias unpenalised.
ObjectiveValue lr_objective(const Vector& theta, const Matrix& features, const Labels& labels,
                            std::span<const double> sample_weights, double C,
                            std::size_t n_classes);

/// Flattened MLP parameters: hidden weights, hidden bias, output weights, output bias.
Vector flatten(const MlpWeights& w);
MlpWeights unflatten_mlp(const Vector& theta, std::size_t n_features, std::size_t hidden,
                         std::size_t n_classes);

/// Mean cross-entropy over the rows + alpha / (2 * rows) * squared weight norm.
ObjectiveValue mlp_objective(const Vector& theta, const Matrix& features, const Labels& labels,
                             double alpha, std::size_t hidden, std::size_t n_classes);

inline constexpr std::size_t kMlpHiddenUnits = 100;

}  // namespace shiftselect
