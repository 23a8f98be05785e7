#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "shiftselect/prevalence.hpp"

namespace shiftselect {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

/// Ingestion metadata: how original label values map onto class ids and how
/// raw columns expanded into feature columns.
struct DatasetMetadata {
  std::vector<std::string> class_names;    // class id -> original label value
  std::vector<std::string> feature_names;  // after one-hot expansion
};

/// Dense labelled data. Immutable after construction.
///
/// Construction checks one label per row, labels in [0, n_classes) and no
/// non-finite feature values. Class presence is checked by ingestion and by
/// the operations that need it; a synthetic draw at a simplex vertex keeps
/// its declared class count with some classes empty.
class Dataset {
 public:
  Dataset(std::string name, Matrix features, Labels labels, std::size_t n_classes,
          DatasetMetadata metadata = {});

  const std::string& name() const { return name_; }
  const Matrix& features() const { return features_; }
  const Labels& labels() const { return labels_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t n_features() const { return static_cast<std::size_t>(features_.cols()); }
  bool has_all_classes() const;
  const DatasetMetadata& metadata() const { return metadata_; }

  /// FNV-1a over the raw feature bytes and labels; identifies a dataset in manifests.
  std::uint64_t fingerprint() const;

 private:
  std::string name_;
  Matrix features_;
  Labels labels_;
  std::size_t n_classes_;
  DatasetMetadata metadata_;
};

/// A duplicate-free subset of a shared Dataset, addressed by row index.
class LabelledSet {
 public:
  LabelledSet(std::shared_ptr<const Dataset> data, std::vector<std::size_t> rows);
  explicit LabelledSet(std::shared_ptr<const Dataset> data);

  std::size_t size() const { return rows_.size(); }
  std::size_t n_classes() const { return data_->n_classes(); }
  std::size_t n_features() const { return data_->n_features(); }
  const std::vector<std::size_t>& rows() const { return rows_; }
  const std::shared_ptr<const Dataset>& dataset() const { return data_; }

  int label(std::size_t i) const { return data_->labels()[rows_[i]]; }
  Labels labels() const;
  Matrix features() const;
  /// Feature rows for positions (not dataset rows) inside this set; repeats allowed.
  Matrix gather(std::span<const std::size_t> positions) const;

  std::vector<std::size_t> class_counts() const;
  /// Positions (0..size) of the members of each class, in set order.
  std::vector<std::vector<std::size_t>> class_positions() const;
  PrevalenceVector prevalence() const;

  /// The same rows viewed on another dataset with identical row layout
  /// (e.g. the standardised copy).
  LabelledSet rebind(std::shared_ptr<const Dataset> data) const;

 private:
  std::shared_ptr<const Dataset> data_;
  std::vector<std::size_t> rows_;
};

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Column selector for the label: either a header name or a 0-based index.
using ColumnRef = std::variant<std::string, std::size_t>;

struct CsvOptions {
  ColumnRef label_column = std::size_t{0};
  bool header = true;
  char delimiter = ',';
};

/// Reads a comma-separated file. Numeric columns are kept as-is, any column
/// holding a non-numeric cell is one-hot encoded (categories in first-occurrence
/// order). Label values are remapped to class ids in first-occurrence order.
/// Empty cells, "?" and "NA" count as missing and are rejected.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Dataset parse_csv(std::istream& in, const std::string& name, const CsvOptions& options = {});

/// Stratified two-way split. The first part receives the largest-remainder
/// rounding of fraction * N_j instances of each class j (at least one, at most
/// N_j - 1, so both parts keep every class). Deterministic given seed.
std::pair<LabelledSet, LabelledSet> stratified_split(const LabelledSet& set, double fraction,
                                                     std::uint64_t seed);

/// Per-class sizes of the first part of a stratified split.
std::vector<std::size_t> stratified_part_counts(std::span<const std::size_t> class_counts,
                                                double fraction);

/// Synthetic data under prior probability shift: fixed isotropic unit-variance
/// Gaussians per class with exact per-class counts. Class j draws from its own
/// seeded stream, so the class-conditional samples do not depend on the prevalence.
struct SyntheticSpec {
  std::size_t n_classes = 3;
  std::size_t dims = 5;
  std::size_t n = 3000;
  double class_separation = 2.0;
  std::vector<double> prevalence;  // empty means uniform
};

Dataset synth_gaussian_pps(std::size_t n_classes, std::size_t dims,
                           const PrevalenceVector& prevalence, std::size_t n,
                           double class_separation, std::uint64_t seed);

/// Mean of class j's Gaussian. Pairwise distances between means equal
/// class_separation when dims >= n_classes; otherwise means are collinear
/// and consecutive ones are class_separation apart.
Vector synth_class_mean(std::size_t n_classes, std::size_t dims, std::size_t j,
                        double class_separation);

/// Per-feature standardisation learnt on training rows.
struct Scaler {
  Vector mean;
  Vector scale;  // population std; constant features get 1

  Matrix apply(const Matrix& features) const;
  Matrix invert(const Matrix& features) const;
};

Scaler fit_scaler(const LabelledSet& train);
Scaler fit_scaler(const Matrix& features);
Matrix apply_scaler(const Scaler& scaler, const Matrix& features);
/// Dataset copy with every row standardised by `scaler`.
std::shared_ptr<const Dataset> apply_scaler(const Scaler& scaler, const Dataset& data);

}  // namespace shiftselect
