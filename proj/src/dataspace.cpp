#include "shiftselect/dataspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "shiftselect/random.hpp"

namespace shiftselect {

Dataset::Dataset(std::string name, Matrix features, Labels labels, std::size_t n_classes,
                 DatasetMetadata metadata)
    : name_(std::move(name)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      n_classes_(n_classes),
      metadata_(std::move(metadata)) {
  if (n_classes_ < 1) throw std::invalid_argument("dataset needs at least one class");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size())
    throw std::invalid_argument("dataset: feature rows and labels differ in length");
  for (int y : labels_)
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes_)
      throw std::invalid_argument("dataset: label " + std::to_string(y) + " out of range");
  if (!features_.allFinite()) throw std::invalid_argument("dataset: non-finite feature value");
}

bool Dataset::has_all_classes() const {
  std::vector<bool> seen(n_classes_, false);
  for (int y : labels_) seen[static_cast<std::size_t>(y)] = true;
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t rows = static_cast<std::uint64_t>(features_.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(features_.cols());
  mix(&rows, sizeof rows);
  mix(&cols, sizeof cols);
  mix(features_.data(), sizeof(double) * static_cast<std::size_t>(features_.size()));
  mix(labels_.data(), sizeof(int) * labels_.size());
  return h;
}

LabelledSet::LabelledSet(std::shared_ptr<const Dataset> data, std::vector<std::size_t> rows)
    : data_(std::move(data)), rows_(std::move(rows)) {
  if (!data_) throw std::invalid_argument("labelled set needs a dataset");
  std::vector<bool> seen(data_->size(), false);
  for (std::size_t r : rows_) {
    if (r >= data_->size()) throw std::invalid_argument("labelled set: row out of range");
    if (seen[r]) throw std::invalid_argument("labelled set: duplicate row " + std::to_string(r));
    seen[r] = true;
  }
}

LabelledSet::LabelledSet(std::shared_ptr<const Dataset> data) : data_(std::move(data)) {
  if (!data_) throw std::invalid_argument("labelled set needs a dataset");
  rows_.resize(data_->size());
  std::iota(rows_.begin(), rows_.end(), std::size_t{0});
}

Labels LabelledSet::labels() const {
  Labels out(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) out[i] = data_->labels()[rows_[i]];
  return out;
}

Matrix LabelledSet::features() const {
  Matrix out(static_cast<Eigen::Index>(rows_.size()), data_->features().cols());
  for (std::size_t i = 0; i < rows_.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        data_->features().row(static_cast<Eigen::Index>(rows_[i]));
  return out;
}

Matrix LabelledSet::gather(std::span<const std::size_t> positions) const {
  Matrix out(static_cast<Eigen::Index>(positions.size()), data_->features().cols());
  for (std::size_t i = 0; i < positions.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        data_->features().row(static_cast<Eigen::Index>(rows_.at(positions[i])));
  return out;
}

std::vector<std::size_t> LabelledSet::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (std::size_t r : rows_) ++counts[static_cast<std::size_t>(data_->labels()[r])];
  return counts;
}

std::vector<std::vector<std::size_t>> LabelledSet::class_positions() const {
  std::vector<std::vector<std::size_t>> out(n_classes());
  for (std::size_t i = 0; i < rows_.size(); ++i)
    out[static_cast<std::size_t>(label(i))].push_back(i);
  return out;
}

PrevalenceVector LabelledSet::prevalence() const {
  const auto counts = class_counts();
  return PrevalenceVector::from_counts(std::span<const std::size_t>(counts));
}

LabelledSet LabelledSet::rebind(std::shared_ptr<const Dataset> data) const {
  if (!data || data->size() != data_->size() || data->labels() != data_->labels())
    throw std::invalid_argument("rebind: dataset layout differs");
  return LabelledSet(std::move(data), rows_);
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line, char delim, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw CsvError(line_no, "unterminated quoted field");
  fields.push_back(trim(cur));
  return fields;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?" || cell == "NA"; }

bool parse_double(const std::string& cell, double& out) {
  char* end = nullptr;
  out = std::strtod(cell.c_str(), &end);
  return end != cell.c_str() && *end == '\0' && std::isfinite(out);
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& name, const CsvOptions& options) {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.size() >= 3 && line_no == 1 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
      line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, options.delimiter, line_no);
    if (options.header && header.empty()) {
      header = std::move(fields);
      continue;
    }
    const std::size_t expected = header.empty() ? (rows.empty() ? fields.size() : rows[0].size())
                                                : header.size();
    if (fields.size() != expected)
      throw CsvError(line_no, "expected " + std::to_string(expected) + " fields, found " +
                                  std::to_string(fields.size()));
    rows.push_back(std::move(fields));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw CsvError(line_no, "no data rows");
  const std::size_t n_cols = rows[0].size();
  if (header.empty()) {
    for (std::size_t c = 0; c < n_cols; ++c) header.push_back("col" + std::to_string(c));
  }

  std::size_t label_col = 0;
  if (const auto* idx = std::get_if<std::size_t>(&options.label_column)) {
    label_col = *idx;
    if (label_col >= n_cols)
      throw CsvError(0, "label column index " + std::to_string(label_col) + " out of range");
  } else {
    const auto& wanted = std::get<std::string>(options.label_column);
    const auto it = std::find(header.begin(), header.end(), wanted);
    if (it == header.end()) throw CsvError(0, "label column '" + wanted + "' not found");
    label_col = static_cast<std::size_t>(it - header.begin());
  }

  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < n_cols; ++c)
      if (is_missing(rows[r][c]))
        throw CsvError(line_numbers[r], "missing value in row " + std::to_string(r + 1) +
                                            ", column '" + header[c] + "'");

  DatasetMetadata meta;
  Labels labels(rows.size());
  std::unordered_map<std::string, int> class_ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& value = rows[r][label_col];
    auto [it, inserted] = class_ids.try_emplace(value, static_cast<int>(class_ids.size()));
    if (inserted) meta.class_names.push_back(value);
    labels[r] = it->second;
  }
  if (class_ids.size() < 2) throw CsvError(0, "dataset has a single class");

  // Column plan: numeric columns map to one feature, categoricals to one per category.
  struct ColumnPlan {
    std::size_t source;
    bool numeric;
    std::vector<std::string> categories;
  };
  std::vector<ColumnPlan> plan;
  std::size_t width = 0;
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (c == label_col) continue;
    ColumnPlan p{c, true, {}};
    double tmp = 0.0;
    for (const auto& row : rows)
      if (!parse_double(row[c], tmp)) {
        p.numeric = false;
        break;
      }
    if (p.numeric) {
      meta.feature_names.push_back(header[c]);
      ++width;
    } else {
      for (const auto& row : rows)
        if (std::find(p.categories.begin(), p.categories.end(), row[c]) == p.categories.end())
          p.categories.push_back(row[c]);
      for (const auto& cat : p.categories) meta.feature_names.push_back(header[c] + "=" + cat);
      width += p.categories.size();
    }
    plan.push_back(std::move(p));
  }

  Matrix features = Matrix::Zero(static_cast<Eigen::Index>(rows.size()),
                                 static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Eigen::Index col = 0;
    for (const auto& p : plan) {
      if (p.numeric) {
        double v = 0.0;
        parse_double(rows[r][p.source], v);
        features(static_cast<Eigen::Index>(r), col++) = v;
      } else {
        const auto it = std::find(p.categories.begin(), p.categories.end(), rows[r][p.source]);
        features(static_cast<Eigen::Index>(r), col + (it - p.categories.begin())) = 1.0;
        col += static_cast<Eigen::Index>(p.categories.size());
      }
    }
  }
  const std::size_t n_classes = class_ids.size();
  return Dataset(name, std::move(features), std::move(labels), n_classes, std::move(meta));
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw CsvError(0, "cannot open " + path.string());
  return parse_csv(in, path.stem().string(), options);
}

// ---------------------------------------------------------------------------
// Splitting

std::vector<std::size_t> stratified_part_counts(std::span<const std::size_t> class_counts,
                                                double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split fraction must lie in (0, 1)");
  const std::size_t n = class_counts.size();
  const std::size_t total = std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  const auto target_total =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total) + 0.5));
  std::vector<double> exact(n);
  std::vector<std::size_t> counts(n);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (class_counts[j] < 2) throw std::invalid_argument("every class needs at least two instances to split");
    exact[j] = fraction * static_cast<double>(class_counts[j]);
    counts[j] = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(exact[j] + 1e-12)), 1,
                                        class_counts[j] - 1);
    assigned += counts[j];
  }
  // Greedy unit moves by smallest change in L1 distance to the exact sizes.
  auto cost = [&](std::size_t j, double c) { return std::abs(c - exact[j]); };
  while (assigned < target_total) {
    std::size_t best = n;
    double best_delta = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (counts[j] + 1 > class_counts[j] - 1) continue;
      const double c = static_cast<double>(counts[j]);
      const double delta = cost(j, c + 1) - cost(j, c);
      if (best == n || delta < best_delta - 1e-9) {
        best = j;
        best_delta = delta;
      }
    }
    if (best == n) break;
    ++counts[best];
    ++assigned;
  }
  while (assigned > target_total) {
    std::size_t best = n;
    double best_delta = 0.0;
    for (std::size_t j = n; j-- > 0;) {
      if (counts[j] <= 1) continue;
      const double c = static_cast<double>(counts[j]);
      const double delta = cost(j, c - 1) - cost(j, c);
      if (best == n || delta < best_delta - 1e-9) {
        best = j;
        best_delta = delta;
      }
    }
    if (best == n) break;
    --counts[best];
    --assigned;
  }
  return counts;
}

std::pair<LabelledSet, LabelledSet> stratified_split(const LabelledSet& set, double fraction,
                                                     std::uint64_t seed) {
  const auto counts = set.class_counts();
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] < 2)
      throw std::invalid_argument("stratified_split: class " + std::to_string(j) + " has " +
                                  std::to_string(counts[j]) + " instances, need at least 2");
  const auto first_counts = stratified_part_counts(counts, fraction);
  auto positions = set.class_positions();
  Rng rng = make_rng(seed, 0x5117);
  std::vector<std::size_t> first, second;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    auto& pos = positions[j];
    std::shuffle(pos.begin(), pos.end(), rng);
    for (std::size_t k = 0; k < pos.size(); ++k)
      (k < first_counts[j] ? first : second).push_back(set.rows()[pos[k]]);
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {LabelledSet(set.dataset(), std::move(first)), LabelledSet(set.dataset(), std::move(second))};
}

// ---------------------------------------------------------------------------
// Synthetic data

Vector synth_class_mean(std::size_t n_classes, std::size_t dims, std::size_t j,
                        double class_separation) {
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(dims));
  if (dims >= n_classes) {
    mean(static_cast<Eigen::Index>(j)) = class_separation / std::sqrt(2.0);
  } else {
    mean(0) = class_separation * static_cast<double>(j);
  }
  return mean;
}

Dataset synth_gaussian_pps(std::size_t n_classes, std::size_t dims,
                           const PrevalenceVector& prevalence, std::size_t n,
                           double class_separation, std::uint64_t seed) {
  if (n_classes < 1 || dims < 1) throw std::invalid_argument("synth: need classes and dims");
  if (prevalence.size() != n_classes) throw std::invalid_argument("synth: prevalence size mismatch");
  if (n < n_classes) throw std::invalid_argument("synth: n must be at least n_classes");
  const auto counts = largest_remainder_counts(prevalence.values(), n);

  Matrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  Labels labels(n);
  std::size_t row = 0;
  for (std::size_t j = 0; j < n_classes; ++j) {
    Rng rng = make_rng(seed, 1000 + j);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector mean = synth_class_mean(n_classes, dims, j, class_separation);
    for (std::size_t k = 0; k < counts[j]; ++k, ++row) {
      for (std::size_t d = 0; d < dims; ++d)
        features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d)) =
            mean(static_cast<Eigen::Index>(d)) + normal(rng);
      labels[row] = static_cast<int>(j);
    }
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng shuffle_rng = make_rng(seed, 999);
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);
  Matrix shuffled(features.rows(), features.cols());
  Labels shuffled_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(perm[i]));
    shuffled_labels[i] = labels[perm[i]];
  }

  DatasetMetadata meta;
  for (std::size_t j = 0; j < n_classes; ++j) meta.class_names.push_back(std::to_string(j));
  for (std::size_t d = 0; d < dims; ++d) meta.feature_names.push_back("x" + std::to_string(d));
  return Dataset("synthetic", std::move(shuffled), std::move(shuffled_labels), n_classes,
                 std::move(meta));
}

// ---------------------------------------------------------------------------
// Standardisation

Scaler fit_scaler(const Matrix& features) {
  if (features.rows() == 0) throw std::invalid_argument("fit_scaler: empty training data");
  Scaler s;
  s.mean = features.colwise().mean().transpose();
  s.scale.resize(features.cols());
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double var = (features.col(c).array() - s.mean(c)).square().mean();
    const double sd = std::sqrt(var);
    s.scale(c) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Scaler fit_scaler(const LabelledSet& train) { return fit_scaler(train.features()); }

Matrix Scaler::apply(const Matrix& features) const {
  if (features.cols() != mean.size()) throw std::invalid_argument("scaler: dimension mismatch");
  return (features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Matrix Scaler::invert(const Matrix& features) const {
  if (features.cols() != mean.size()) throw std::invalid_argument("scaler: dimension mismatch");
  Matrix out = features.array().rowwise() * scale.transpose().array();
  return out.rowwise() + mean.transpose();
}

Matrix apply_scaler(const Scaler& scaler, const Matrix& features) { return scaler.apply(features); }

std::shared_ptr<const Dataset> apply_scaler(const Scaler& scaler, const Dataset& data) {
  return std::make_shared<const Dataset>(data.name(), scaler.apply(data.features()), data.labels(),
                                         data.n_classes(), data.metadata());
}

}  // namespace shiftselect
