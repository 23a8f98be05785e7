#include "shiftselect/selection.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "shiftselect/parallel.hpp"
#include "shiftselect/random.hpp"

namespace shiftselect {

namespace fs = std::filesystem;

ModelRegistry::ModelRegistry(std::vector<RegistryEntry> entries, std::vector<RegistryFailure> failures,
                             std::size_t n_classes)
    : entries_(std::move(entries)), failures_(std::move(failures)), n_classes_(n_classes) {
  std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entries_.size(); ++i)
    if (entries_[i].id == entries_[i - 1].id) throw std::invalid_argument("registry: duplicate model id");
}

std::size_t ModelRegistry::index_of(ModelId id) const {
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                                   [](const RegistryEntry& e, ModelId v) { return e.id < v; });
  if (it == entries_.end() || it->id != id) throw std::out_of_range("registry: no model " + std::to_string(id));
  return static_cast<std::size_t>(it - entries_.begin());
}

const RegistryEntry& ModelRegistry::at(ModelId id) const { return entries_[index_of(id)]; }

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw std::invalid_argument("accuracy: bad lengths");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

ModelRegistry build_registry(std::span<const Family> families, const LabelledSet& train,
                             const LabelledSet& validation, const CapSettings& cap, std::uint64_t seed) {
  std::vector<HyperParams> grid;
  for (Family f : families) {
    auto g = build_grid(f, train.n_classes());
    grid.insert(grid.end(), g.begin(), g.end());
  }
  const Matrix train_x = train.features();
  const Labels train_y = train.labels();
  const Matrix val_x = validation.features();
  const Labels val_y = validation.labels();

  std::vector<std::optional<RegistryEntry>> slots(grid.size());
  std::vector<std::optional<RegistryFailure>> failed(grid.size());
  parallel_for(grid.size(), [&](std::size_t id) {
    try {
      auto model = std::make_shared<const TrainedModel>(
          shiftselect::train(grid[id], train_x, train_y, train.n_classes(), derive_seed(seed, id)));
      const double val_acc = accuracy(model->predict_labels(val_x), val_y);
      slots[id] = RegistryEntry{id, model, val_acc, fit_cap(model, validation, cap)};
    } catch (const std::exception& e) {
      failed[id] = RegistryFailure{id, grid[id], e.what()};
    }
  });
  std::vector<RegistryEntry> entries;
  std::vector<RegistryFailure> failures;
  for (std::size_t id = 0; id < grid.size(); ++id) {
    if (slots[id]) entries.push_back(std::move(*slots[id]));
    if (failed[id]) {
      std::cerr << "warning: skipping " << grid[id].describe() << ": " << failed[id]->message << "\n";
      failures.push_back(std::move(*failed[id]));
    }
  }
  return ModelRegistry(std::move(entries), std::move(failures), train.n_classes());
}

// ---------------------------------------------------------------------------
// Persistence

BinaryRecord cap_to_record(const CapPredictor& cap, ModelId id) {
  BinaryRecord rec;
  const auto& q = cap.quantifier();
  rec.header = {{"kind", "cap"},
                {"model_id", id},
                {"quantifier", std::string(to_string(q.kind()))},
                {"leap", {{"weight", cap.leap_settings().weight},
                          {"tol", cap.leap_settings().tol},
                          {"max_iter", cap.leap_settings().max_iter}}},
                {"em", {{"tol", cap.em_settings().tol}, {"max_iter", cap.em_settings().max_iter}}}};
  rec.arrays["rates"] = cap.rates().matrix();
  if (q.densities()) {
    rec.header["bandwidth"] = q.densities()->bandwidth();
    rec.header["n_supports"] = q.densities()->n_classes();
    for (std::size_t j = 0; j < q.densities()->n_classes(); ++j)
      rec.arrays["support_" + std::to_string(j)] = q.densities()->support()[j];
  }
  return rec;
}

CapPredictor cap_from_record(const BinaryRecord& rec, std::shared_ptr<const TrainedModel> model) {
  if (rec.header.at("kind") != "cap") throw std::runtime_error("record is not a CAP sidecar");
  const auto kind = parse_quantifier_kind(rec.header.at("quantifier").get<std::string>());
  LeapSettings leap{rec.header.at("leap").at("weight").get<double>(), rec.header.at("leap").at("tol").get<double>(),
                    rec.header.at("leap").at("max_iter").get<std::size_t>()};
  EmSettings em{rec.header.at("em").at("tol").get<double>(), rec.header.at("em").at("max_iter").get<std::size_t>()};
  std::optional<ClassDensities> densities;
  if (kind == QuantifierKind::KDEyML) {
    std::vector<Matrix> support;
    const auto n = rec.header.at("n_supports").get<std::size_t>();
    for (std::size_t j = 0; j < n; ++j) support.push_back(rec.array("support_" + std::to_string(j)));
    densities.emplace(std::move(support), rec.header.at("bandwidth").get<double>());
  }
  Quantifier q(kind, model, std::move(densities));
  return CapPredictor(model, RateMatrix(rec.array("rates")), std::move(q), leap, em);
}

namespace {

std::string padded(ModelId id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", id);
  return buf;
}

}  // namespace

void save_registry(const ModelRegistry& registry, const fs::path& dir, nlohmann::json manifest) {
  fs::create_directories(dir / "models");
  fs::create_directories(dir / "cap");
  manifest["n_classes"] = registry.n_classes();
  nlohmann::json grids = nlohmann::json::object();
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : registry.entries()) {
    const std::string model_file = "models/model_" + padded(e.id) + ".bin";
    const std::string cap_file = "cap/cap_" + padded(e.id) + ".bin";
    e.model->to_record().save(dir / model_file);
    cap_to_record(e.cap, e.id).save(dir / cap_file);
    entries.push_back({{"id", e.id},
                       {"family", std::string(to_string(e.family()))},
                       {"hyperparams", e.hyperparams().to_json()},
                       {"validation_accuracy", e.validation_accuracy},
                       {"model_file", model_file},
                       {"cap_file", cap_file}});
    grids[std::string(to_string(e.family()))].push_back(e.hyperparams().to_json());
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : registry.failures()) {
    failures.push_back({{"id", f.id}, {"hyperparams", f.hyperparams.to_json()}, {"message", f.message}});
    grids[std::string(to_string(f.hyperparams.family()))].push_back(f.hyperparams.to_json());
  }
  manifest["grids"] = grids;
  manifest["entries"] = entries;
  manifest["failures"] = failures;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write registry manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

ModelRegistry load_registry(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no registry manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in);
  std::vector<RegistryEntry> entries;
  for (const auto& e : manifest.at("entries")) {
    auto model = std::make_shared<const TrainedModel>(
        TrainedModel::from_record(BinaryRecord::load(dir / e.at("model_file").get<std::string>())));
    auto cap = cap_from_record(BinaryRecord::load(dir / e.at("cap_file").get<std::string>()), model);
    entries.push_back(RegistryEntry{e.at("id").get<ModelId>(), model, e.at("validation_accuracy").get<double>(),
                                    std::move(cap)});
  }
  std::vector<RegistryFailure> failures;
  for (const auto& f : manifest.at("failures"))
    failures.push_back(RegistryFailure{f.at("id").get<ModelId>(), HyperParams::from_json(f.at("hyperparams")),
                                       f.at("message").get<std::string>()});
  return ModelRegistry(std::move(entries), std::move(failures), manifest.at("n_classes").get<std::size_t>());
}

// ---------------------------------------------------------------------------
// Pool scoring

PoolScores::PoolScores(const ModelRegistry& registry, const Matrix& pool_features)
    : predicted_(registry.size()), densities_(registry.size()) {
  parallel_for(registry.size(), [&](std::size_t i) {
    const auto scored = registry.entries()[i].cap.score(pool_features);
    predicted_[i] = scored.predicted;
    densities_[i] = scored.densities;
  });
}

Labels PoolScores::predicted(std::size_t entry_index, const UnlabelledBag& bag) const {
  const Labels& all = predicted_.at(entry_index);
  Labels out(bag.size());
  for (std::size_t i = 0; i < bag.size(); ++i) out[i] = all.at(bag.positions[i]);
  return out;
}

ScoredBag PoolScores::gather(std::size_t entry_index, const UnlabelledBag& bag) const {
  ScoredBag out{predicted(entry_index, bag), {}};
  const Matrix& d = densities_.at(entry_index);
  if (d.size() > 0) {
    out.densities.resize(static_cast<Eigen::Index>(bag.size()), d.cols());
    for (std::size_t i = 0; i < bag.size(); ++i)
      out.densities.row(static_cast<Eigen::Index>(i)) = d.row(static_cast<Eigen::Index>(bag.positions[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Strategies

std::string scope_name(const Scope& scope) { return scope ? std::string(to_string(*scope)) : "All"; }

namespace {

bool in_scope(const RegistryEntry& e, const Scope& scope) { return !scope || e.family() == *scope; }

template <typename Score>
std::size_t argmax_in_scope(const ModelRegistry& registry, const Scope& scope, Score&& score) {
  std::optional<std::size_t> best;
  double best_value = 0.0;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto& e = registry.entries()[i];
    if (!in_scope(e, scope)) continue;
    const double v = score(i);
    if (!best || v > best_value) {
      best = i;
      best_value = v;
    }
  }
  if (!best) throw std::invalid_argument("selection: no registry entry in scope " + scope_name(scope));
  return *best;
}

}  // namespace

ModelId ims_select(const ModelRegistry& registry, const Scope& scope) {
  const auto i = argmax_in_scope(registry, scope, [&](std::size_t k) { return registry.entries()[k].validation_accuracy; });
  return registry.entries()[i].id;
}

namespace {

template <typename Scorer>
SelectionOutcome tms_select_impl(const ModelRegistry& registry, const Scope& scope, Scorer&& scored) {
  std::vector<std::optional<CapEstimate>> estimates(registry.size());
  std::vector<ScoredBag> bags(registry.size());
  std::size_t warnings = 0;
  const auto best = argmax_in_scope(registry, scope, [&](std::size_t k) {
    bags[k] = scored(k);
    estimates[k] = registry.entries()[k].cap.predict(bags[k]);
    warnings += (estimates[k]->solver_warning ? 1 : 0) + (estimates[k]->quantifier_warning ? 1 : 0);
    return estimates[k]->accuracy;
  });
  SelectionOutcome out;
  out.strategy = "TMS-" + scope_name(scope);
  out.model_id = registry.entries()[best].id;
  out.predicted = std::move(bags[best].predicted);
  out.estimated_accuracy = estimates[best]->accuracy;
  out.cap_warnings = warnings;
  return out;
}

}  // namespace

SelectionOutcome tms_select(const ModelRegistry& registry, const Scope& scope, const Matrix& bag_features) {
  if (bag_features.rows() == 0) throw std::invalid_argument("tms_select: empty bag");
  return tms_select_impl(registry, scope,
                         [&](std::size_t k) { return registry.entries()[k].cap.score(bag_features); });
}

SelectionOutcome tms_select(const ModelRegistry& registry, const Scope& scope, const PoolScores& pool,
                            const UnlabelledBag& bag) {
  if (bag.size() == 0) throw std::invalid_argument("tms_select: empty bag");
  return tms_select_impl(registry, scope, [&](std::size_t k) { return pool.gather(k, bag); });
}

SelectionOutcome oracle_select(const ModelRegistry& registry, const Scope& scope, const PoolScores& pool,
                               const Bag& bag) {
  std::vector<Labels> predicted(registry.size());
  std::vector<double> acc(registry.size(), 0.0);
  const auto best = argmax_in_scope(registry, scope, [&](std::size_t k) {
    predicted[k] = pool.predicted(k, bag.unlabelled());
    acc[k] = accuracy(predicted[k], bag.true_labels());
    return acc[k];
  });
  SelectionOutcome out;
  out.strategy = scope ? "oracle-" + scope_name(scope) : "oracle";
  out.model_id = registry.entries()[best].id;
  out.predicted = std::move(predicted[best]);
  out.true_accuracy = acc[best];
  return out;
}

ModelId default_select(const ModelRegistry& registry, Family family) {
  const HyperParams wanted = default_model(family);
  for (const auto& e : registry.entries())
    if (e.hyperparams() == wanted) return e.id;
  throw std::invalid_argument("default_select: no default " + std::string(to_string(family)) + " model in registry");
}

SelectionOutcome apply_model(const std::string& strategy, const ModelRegistry& registry, ModelId id,
                             const PoolScores& pool, const UnlabelledBag& bag) {
  const auto idx = registry.index_of(id);
  SelectionOutcome out;
  out.strategy = strategy;
  out.model_id = id;
  out.predicted = pool.predicted(idx, bag);
  out.validation_accuracy = registry.entries()[idx].validation_accuracy;
  return out;
}

}  // namespace shiftselect
