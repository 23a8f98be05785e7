#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shiftselect/cap.hpp"
#include "shiftselect/classifiers.hpp"
#include "shiftselect/protocol.hpp"

namespace shiftselect {

using ModelId = std::size_t;

struct RegistryEntry {
  ModelId id = 0;
  std::shared_ptr<const TrainedModel> model;
  double validation_accuracy = 0.0;
  CapPredictor cap;

  Family family() const { return model->family(); }
  const HyperParams& hyperparams() const { return model->hyperparams(); }
};

struct RegistryFailure {
  ModelId id = 0;
  HyperParams hyperparams;
  std::string message;
};

/// Every trained grid point with its validation accuracy and CAP predictor.
/// Ids are positions in the enumerated grid, so failed points leave gaps.
class ModelRegistry {
 public:
  ModelRegistry() = default;
  ModelRegistry(std::vector<RegistryEntry> entries, std::vector<RegistryFailure> failures,
                std::size_t n_classes);

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  const std::vector<RegistryFailure>& failures() const { return failures_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t n_classes() const { return n_classes_; }
  const RegistryEntry& at(ModelId id) const;
  std::size_t index_of(ModelId id) const;

 private:
  std::vector<RegistryEntry> entries_;
  std::vector<RegistryFailure> failures_;
  std::size_t n_classes_ = 0;
};

/// Accuracy of predictions against labels.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Trains every grid point of every family on `train`, scores it on
/// `validation` and fits its CAP predictor there. Entries that fail to train
/// are recorded in failures() and reported on stderr.
ModelRegistry build_registry(std::span<const Family> families, const LabelledSet& train,
                             const LabelledSet& validation, const CapSettings& cap, std::uint64_t seed);

/// Directory layout: manifest.json, models/model_<id>.bin, cap/cap_<id>.bin.
/// `manifest` carries caller metadata (run id, seed, dataset fingerprint) and
/// is extended with grids and entries.
void save_registry(const ModelRegistry& registry, const std::filesystem::path& dir, nlohmann::json manifest);
ModelRegistry load_registry(const std::filesystem::path& dir);

BinaryRecord cap_to_record(const CapPredictor& cap, ModelId id);
CapPredictor cap_from_record(const BinaryRecord& record, std::shared_ptr<const TrainedModel> model);

/// Predictions and KDE densities of every registry model over a fixed pool of
/// instances (the test set), so bags drawn from the pool are scored by lookup.
class PoolScores {
 public:
  PoolScores(const ModelRegistry& registry, const Matrix& pool_features);

  ScoredBag gather(std::size_t entry_index, const UnlabelledBag& bag) const;
  Labels predicted(std::size_t entry_index, const UnlabelledBag& bag) const;

 private:
  std::vector<Labels> predicted_;
  std::vector<Matrix> densities_;
};

/// nullopt selects among all families.
using Scope = std::optional<Family>;
std::string scope_name(const Scope& scope);

struct SelectionOutcome {
  std::string strategy;
  ModelId model_id = 0;
  Labels predicted;                           // labels for the bag
  std::optional<double> estimated_accuracy;   // TMS
  std::optional<double> validation_accuracy;  // IMS / defaults
  std::optional<double> true_accuracy;        // filled by the evaluation harness
  std::size_t cap_warnings = 0;
};

/// Highest validation accuracy in scope; lowest id on ties.
ModelId ims_select(const ModelRegistry& registry, const Scope& scope);

/// Highest CAP-estimated accuracy on this bag; lowest id on ties. The outcome
/// carries the winner's labels for the bag.
SelectionOutcome tms_select(const ModelRegistry& registry, const Scope& scope, const Matrix& bag_features);
SelectionOutcome tms_select(const ModelRegistry& registry, const Scope& scope, const PoolScores& pool,
                            const UnlabelledBag& bag);

/// Highest true accuracy on the bag; needs the evaluation-only labels.
SelectionOutcome oracle_select(const ModelRegistry& registry, const Scope& scope, const PoolScores& pool,
                               const Bag& bag);

/// The entry trained with default_model(family).
ModelId default_select(const ModelRegistry& registry, Family family);

/// Outcome of applying a fixed model to a bag (IMS and default strategies).
SelectionOutcome apply_model(const std::string& strategy, const ModelRegistry& registry, ModelId id,
                             const PoolScores& pool, const UnlabelledBag& bag);

}  // namespace shiftselect
