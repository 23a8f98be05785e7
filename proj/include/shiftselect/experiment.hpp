#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "shiftselect/cap.hpp"
#include "shiftselect/classifiers.hpp"
#include "shiftselect/dataspace.hpp"
#include "shiftselect/protocol.hpp"
#include "shiftselect/selection.hpp"

namespace shiftselect {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A failure inside one stage of an experiment run.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("stage '" + stage + "': " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct DatasetSource {
  std::string kind = "synthetic";  // "synthetic" or "csv"
  std::filesystem::path csv_path;
  ColumnRef label_column = std::size_t{0};
  bool header = true;
  SyntheticSpec synthetic{3, 5, 3000, 1.5, {0.5, 0.3, 0.2}};
};

/// A selection strategy as it appears in result files, e.g. "TMS-All",
/// "IMS-KNN", "default-MLP", "oracle".
struct StrategySpec {
  enum class Kind { Default, IMS, TMS, Oracle };
  Kind kind = Kind::Oracle;
  Scope scope;

  std::string name() const;
  static StrategySpec parse(const std::string& name);
};

std::vector<std::string> default_strategy_roster();

struct RunConfig {
  std::string run_id = "run";
  DatasetSource dataset;
  double train_fraction = 0.7;       // L vs U
  double validation_fraction = 0.5;  // L_tr vs L_va inside L
  bool standardize = true;
  std::size_t r = kDefaultBags;
  std::size_t s = kDefaultBagSize;
  std::uint64_t seed = 0;
  std::size_t n_bins = kDefaultShiftBins;
  std::vector<Family> families{Family::LR, Family::KNN, Family::MLP};
  CapSettings cap;
  std::vector<std::string> strategies = default_strategy_roster();
  double alpha = 0.01;
  std::filesystem::path output_dir = "shiftselect_out";

  /// Throws ConfigError on out-of-range values or unknown strategies.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields keep their defaults; unknown fields are rejected.
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config(const std::filesystem::path& path);
/// SHIFTSELECT_SEED, when set, replaces the configured seed.
void apply_env_overrides(RunConfig& config);

/// The data side of a run: dataset, splits and the standardiser fitted on L_tr.
struct PreparedData {
  std::shared_ptr<const Dataset> data;  // standardised when configured
  LabelledSet labelled;                 // L
  LabelledSet test;                     // U
  LabelledSet train;                    // L_tr
  LabelledSet validation;               // L_va
  std::optional<Scaler> scaler;
};

PreparedData prepare_data(const RunConfig& config);
/// Run id, seed, config, dataset fingerprint, split sizes and protocol constants.
nlohmann::json build_manifest(const RunConfig& config, const PreparedData& prepared);

struct ResultRow {
  std::string strategy;
  std::size_t bag_id = 0;
  double l1_shift = 0.0;
  double true_acc = 0.0;
  std::optional<double> est_acc;
  ModelId model_id = 0;
};

struct StrategySummary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single bag
};

/// One row per (strategy, bag), kept sorted by (strategy, bag_id).
struct ResultTable {
  std::string run_id;
  std::string dataset;
  std::vector<ResultRow> rows;
  std::map<std::string, StrategySummary> summary;

  void sort_rows();
  void recompute_summary();
  std::vector<std::string> strategies() const;
  /// Shift records keyed by bag, one accuracy per strategy.
  std::vector<ShiftRecord> shift_records() const;
};

struct ExperimentResult {
  ResultTable table;
  nlohmann::json manifest;
};

/// split -> registry -> APP bags -> per-bag selection -> true accuracy.
/// Writes the manifest and the registry under config.output_dir when
/// `persist` is set. Stage failures surface as StageError.
ExperimentResult run_experiment(const RunConfig& config, bool persist = true);

/// Builds and stores the registry (plus run manifest) without running the protocol.
nlohmann::json train_registry(const RunConfig& config);

}  // namespace shiftselect
