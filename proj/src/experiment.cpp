#include "shiftselect/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "shiftselect/parallel.hpp"
#include "shiftselect/random.hpp"
#include "shiftselect/report.hpp"

namespace shiftselect {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Strategies

std::string StrategySpec::name() const {
  switch (kind) {
    case Kind::Default: return "default-" + scope_name(scope);
    case Kind::IMS: return "IMS-" + scope_name(scope);
    case Kind::TMS: return "TMS-" + scope_name(scope);
    case Kind::Oracle: return scope ? "oracle-" + scope_name(scope) : "oracle";
  }
  return "?";
}

StrategySpec StrategySpec::parse(const std::string& name) {
  if (name == "oracle") return {Kind::Oracle, std::nullopt};
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw ConfigError("unknown strategy '" + name + "'");
  const std::string head = name.substr(0, dash);
  const std::string tail = name.substr(dash + 1);
  Scope scope;
  if (tail != "All") {
    try {
      scope = parse_family(tail);
    } catch (const std::invalid_argument&) {
      throw ConfigError("unknown strategy scope in '" + name + "'");
    }
  }
  if (head == "default") {
    if (!scope) throw ConfigError("default strategy needs a family: '" + name + "'");
    return {Kind::Default, scope};
  }
  if (head == "IMS") return {Kind::IMS, scope};
  if (head == "TMS") return {Kind::TMS, scope};
  if (head == "oracle") return {Kind::Oracle, scope};
  throw ConfigError("unknown strategy '" + name + "'");
}

std::vector<std::string> default_strategy_roster() {
  return {"default-LR", "default-KNN", "default-MLP", "IMS-LR", "IMS-KNN", "IMS-MLP", "IMS-All", "TMS-All", "oracle"};
}

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(train_fraction)) throw ConfigError("split.train_fraction must lie in (0, 1)");
  if (!in_unit(validation_fraction)) throw ConfigError("split.validation_fraction must lie in (0, 1)");
  if (r < 1) throw ConfigError("protocol.r must be at least 1");
  if (s < 1) throw ConfigError("protocol.s must be at least 1");
  if (n_bins < 1) throw ConfigError("protocol.n_bins must be at least 1");
  if (families.empty()) throw ConfigError("families must not be empty");
  if (!(cap.bandwidth > 0.0)) throw ConfigError("quantifier.bandwidth must be positive");
  if (!(cap.leap.weight > 0.0)) throw ConfigError("cap.weight must be positive");
  if (cap.smoothing < 0.0) throw ConfigError("cap.smoothing must be nonnegative");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (dataset.kind != "synthetic" && dataset.kind != "csv")
    throw ConfigError("dataset.source must be 'synthetic' or 'csv'");
  if (dataset.kind == "csv" && dataset.csv_path.empty()) throw ConfigError("dataset.csv.path is required");
  if (dataset.kind == "synthetic") {
    const auto& sp = dataset.synthetic;
    if (sp.n_classes < 2 || sp.dims < 1 || sp.n < sp.n_classes)
      throw ConfigError("dataset.synthetic needs n_classes >= 2, dims >= 1 and n >= n_classes");
    if (!sp.prevalence.empty()) {
      if (sp.prevalence.size() != sp.n_classes) throw ConfigError("dataset.synthetic.prevalence has wrong length");
      try {
        PrevalenceVector check(sp.prevalence);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("dataset.synthetic.prevalence: ") + e.what());
      }
    }
  }
  for (const auto& s : strategies) {
    const auto spec = StrategySpec::parse(s);
    if (spec.scope && std::find(families.begin(), families.end(), *spec.scope) == families.end())
      throw ConfigError("strategy '" + s + "' refers to a family that is not trained");
  }
}

json RunConfig::to_json() const {
  json source;
  source["source"] = dataset.kind;
  source["synthetic"] = {{"n_classes", dataset.synthetic.n_classes},
                         {"dims", dataset.synthetic.dims},
                         {"n", dataset.synthetic.n},
                         {"class_separation", dataset.synthetic.class_separation},
                         {"prevalence", dataset.synthetic.prevalence}};
  json label = std::holds_alternative<std::string>(dataset.label_column)
                   ? json(std::get<std::string>(dataset.label_column))
                   : json(std::get<std::size_t>(dataset.label_column));
  source["csv"] = {{"path", dataset.csv_path.string()}, {"label_column", label}, {"header", dataset.header}};
  json fam = json::array();
  for (Family f : families) fam.push_back(std::string(to_string(f)));
  return {{"run_id", run_id},
          {"dataset", source},
          {"split", {{"train_fraction", train_fraction}, {"validation_fraction", validation_fraction}}},
          {"standardize", standardize},
          {"protocol", {{"r", r}, {"s", s}, {"seed", seed}, {"n_bins", n_bins}}},
          {"families", fam},
          {"quantifier",
           {{"kind", std::string(to_string(cap.quantifier))},
            {"bandwidth", cap.bandwidth},
            {"tol", cap.em.tol},
            {"max_iter", cap.em.max_iter}}},
          {"cap",
           {{"weight", cap.leap.weight},
            {"tol", cap.leap.tol},
            {"max_iter", cap.leap.max_iter},
            {"smoothing", cap.smoothing}}},
          {"strategies", strategies},
          {"alpha", alpha},
          {"output_dir", output_dir.string()}};
}

namespace {

// Reads known keys of an object into their targets and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + key + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config field '" + path_ + key + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  ObjectReader root(j, "");
  root.read("run_id", c.run_id);
  root.read("standardize", c.standardize);
  root.read("alpha", c.alpha);
  root.read("strategies", c.strategies);
  std::string out_dir = c.output_dir.string();
  root.read("output_dir", out_dir);
  c.output_dir = out_dir;
  if (const json* d = root.child("dataset")) {
    ObjectReader ds(*d, "dataset.");
    ds.read("source", c.dataset.kind);
    if (const json* syn = ds.child("synthetic")) {
      ObjectReader sr(*syn, "dataset.synthetic.");
      sr.read("n_classes", c.dataset.synthetic.n_classes);
      sr.read("dims", c.dataset.synthetic.dims);
      sr.read("n", c.dataset.synthetic.n);
      sr.read("class_separation", c.dataset.synthetic.class_separation);
      sr.read("prevalence", c.dataset.synthetic.prevalence);
      sr.finish();
      if (!syn->contains("prevalence") && c.dataset.synthetic.prevalence.size() != c.dataset.synthetic.n_classes)
        c.dataset.synthetic.prevalence.clear();
    }
    if (const json* csv = ds.child("csv")) {
      ObjectReader cr(*csv, "dataset.csv.");
      std::string path;
      cr.read("path", path);
      c.dataset.csv_path = path;
      cr.read("header", c.dataset.header);
      if (const json* label = cr.child("label_column")) {
        if (label->is_string()) c.dataset.label_column = label->get<std::string>();
        else if (label->is_number_unsigned()) c.dataset.label_column = label->get<std::size_t>();
        else throw ConfigError("dataset.csv.label_column must be a name or a nonnegative index");
      }
      cr.finish();
    }
    ds.finish();
  }
  if (const json* sp = root.child("split")) {
    ObjectReader r(*sp, "split.");
    r.read("train_fraction", c.train_fraction);
    r.read("validation_fraction", c.validation_fraction);
    r.finish();
  }
  if (const json* p = root.child("protocol")) {
    ObjectReader r(*p, "protocol.");
    r.read("r", c.r);
    r.read("s", c.s);
    r.read("seed", c.seed);
    r.read("n_bins", c.n_bins);
    r.finish();
  }
  if (const json* f = root.child("families")) {
    if (!f->is_array()) throw ConfigError("families must be an array");
    c.families.clear();
    for (const auto& name : *f) {
      try {
        c.families.push_back(parse_family(name.get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("families: ") + e.what());
      }
    }
  }
  if (const json* q = root.child("quantifier")) {
    ObjectReader r(*q, "quantifier.");
    std::string kind(to_string(c.cap.quantifier));
    r.read("kind", kind);
    try {
      c.cap.quantifier = parse_quantifier_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("quantifier.kind: ") + e.what());
    }
    r.read("bandwidth", c.cap.bandwidth);
    r.read("tol", c.cap.em.tol);
    r.read("max_iter", c.cap.em.max_iter);
    r.finish();
  }
  if (const json* cp = root.child("cap")) {
    ObjectReader r(*cp, "cap.");
    r.read("weight", c.cap.leap.weight);
    r.read("tol", c.cap.leap.tol);
    r.read("max_iter", c.cap.leap.max_iter);
    r.read("smoothing", c.cap.smoothing);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void apply_env_overrides(RunConfig& config) {
  if (const char* env = std::getenv("SHIFTSELECT_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError("SHIFTSELECT_SEED must be a nonnegative integer");
    config.seed = v;
  }
}

// ---------------------------------------------------------------------------
// Data preparation

PreparedData prepare_data(const RunConfig& config) {
  std::shared_ptr<const Dataset> raw;
  try {
    if (config.dataset.kind == "csv") {
      CsvOptions opts;
      opts.label_column = config.dataset.label_column;
      opts.header = config.dataset.header;
      raw = std::make_shared<const Dataset>(load_csv(config.dataset.csv_path, opts));
    } else {
      const auto& sp = config.dataset.synthetic;
      const auto prev = sp.prevalence.empty() ? PrevalenceVector::uniform(sp.n_classes) : PrevalenceVector(sp.prevalence);
      raw = std::make_shared<const Dataset>(
          synth_gaussian_pps(sp.n_classes, sp.dims, prev, sp.n, sp.class_separation, derive_seed(config.seed, 1)));
    }
    if (!raw->has_all_classes()) throw std::invalid_argument("dataset does not contain every class");
  } catch (const std::exception& e) {
    throw StageError("load", e.what());
  }
  try {
    auto [labelled, test] = stratified_split(LabelledSet(raw), config.train_fraction, derive_seed(config.seed, 2));
    auto [train, validation] = stratified_split(labelled, config.validation_fraction, derive_seed(config.seed, 3));
    std::optional<Scaler> scaler;
    std::shared_ptr<const Dataset> data = raw;
    if (config.standardize) {
      scaler = fit_scaler(train);
      data = apply_scaler(*scaler, *raw);
    }
    return PreparedData{data,
                        labelled.rebind(data),
                        test.rebind(data),
                        train.rebind(data),
                        validation.rebind(data),
                        std::move(scaler)};
  } catch (const std::exception& e) {
    throw StageError("split", e.what());
  }
}

json build_manifest(const RunConfig& config, const PreparedData& p) {
  char fp[32];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(p.data->fingerprint()));
  json manifest = {
      {"run_id", config.run_id},
      {"seed", config.seed},
      {"config", config.to_json()},
      {"dataset",
       {{"name", p.data->name()},
        {"fingerprint", fp},
        {"instances", p.data->size()},
        {"n_classes", p.data->n_classes()},
        {"n_features", p.data->n_features()},
        {"class_names", p.data->metadata().class_names}}},
      {"split",
       {{"train_fraction", config.train_fraction},
        {"validation_fraction", config.validation_fraction},
        {"L", p.labelled.size()},
        {"U", p.test.size()},
        {"L_tr", p.train.size()},
        {"L_va", p.validation.size()},
        {"L_tr_prevalence", p.train.prevalence().values()},
        {"U_prevalence", p.test.prevalence().values()}}},
      {"protocol", {{"r", config.r}, {"s", config.s}, {"seed", config.seed}, {"n_bins", config.n_bins}}},
  };
  if (p.scaler) {
    manifest["scaler"] = {{"mean", std::vector<double>(p.scaler->mean.data(), p.scaler->mean.data() + p.scaler->mean.size())},
                          {"scale", std::vector<double>(p.scaler->scale.data(), p.scaler->scale.data() + p.scaler->scale.size())}};
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Result table

void ResultTable::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.strategy != b.strategy) return a.strategy < b.strategy;
    return a.bag_id < b.bag_id;
  });
}

void ResultTable::recompute_summary() {
  summary.clear();
  std::map<std::string, std::vector<double>> by_strategy;
  for (const auto& r : rows) by_strategy[r.strategy].push_back(r.true_acc);
  for (const auto& [name, values] : by_strategy) {
    StrategySummary s;
    s.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
      double sq = 0.0;
      for (double v : values) sq += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
    }
    summary[name] = s;
  }
}

std::vector<std::string> ResultTable::strategies() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.strategy) == out.end()) out.push_back(r.strategy);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ShiftRecord> ResultTable::shift_records() const {
  std::map<std::size_t, ShiftRecord> by_bag;
  for (const auto& r : rows) {
    auto& rec = by_bag[r.bag_id];
    rec.bag_id = r.bag_id;
    rec.l1_shift = r.l1_shift;
    rec.accuracy[r.strategy] = r.true_acc;
  }
  std::vector<ShiftRecord> out;
  for (auto& [id, rec] : by_bag) out.push_back(std::move(rec));
  return out;
}

// ---------------------------------------------------------------------------
// Running

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

ModelRegistry build_registry_stage(const RunConfig& config, const PreparedData& prepared) {
  try {
    auto registry = build_registry(config.families, prepared.train, prepared.validation, config.cap,
                                   derive_seed(config.seed, 4));
    if (registry.size() == 0) throw std::runtime_error("every registry entry failed to train");
    return registry;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("registry", e.what());
  }
}

void persist_registry(const RunConfig& config, const ModelRegistry& registry, const json& manifest) {
  try {
    json reg_manifest = {{"run_id", config.run_id},
                         {"seed", config.seed},
                         {"dataset_fingerprint", manifest.at("dataset").at("fingerprint")},
                         {"cap", manifest.at("config").at("cap")},
                         {"quantifier", manifest.at("config").at("quantifier")}};
    save_registry(registry, config.output_dir / "registry", reg_manifest);
  } catch (const std::exception& e) {
    throw StageError("registry", std::string("persisting registry: ") + e.what());
  }
}

}  // namespace

json train_registry(const RunConfig& config) {
  config.validate();
  const auto prepared = prepare_data(config);
  json manifest = build_manifest(config, prepared);
  try {
    fs::create_directories(config.output_dir);
    write_json(config.output_dir / "manifest.json", manifest);
  } catch (const std::exception& e) {
    throw StageError("output", e.what());
  }
  const auto registry = build_registry_stage(config, prepared);
  persist_registry(config, registry, manifest);
  manifest["registry_size"] = registry.size();
  manifest["registry_failures"] = registry.failures().size();
  write_json(config.output_dir / "manifest.json", manifest);
  return manifest;
}

ExperimentResult run_experiment(const RunConfig& config, bool persist) {
  config.validate();
  const auto prepared = prepare_data(config);
  json manifest = build_manifest(config, prepared);
  if (persist) {
    try {
      fs::create_directories(config.output_dir);
      write_json(config.output_dir / "manifest.json", manifest);
    } catch (const std::exception& e) {
      throw StageError("output", e.what());
    }
  }
  const auto registry = build_registry_stage(config, prepared);
  if (persist) persist_registry(config, registry, manifest);
  manifest["registry_size"] = registry.size();
  manifest["registry_failures"] = registry.failures().size();

  std::vector<Bag> bags;
  try {
    bags = app_generate(prepared.test, config.r, config.s, derive_seed(config.seed, 5));
  } catch (const std::exception& e) {
    throw StageError("protocol", e.what());
  }

  std::vector<StrategySpec> specs;
  for (const auto& name : config.strategies) specs.push_back(StrategySpec::parse(name));
  if (std::none_of(specs.begin(), specs.end(),
                   [](const StrategySpec& s) { return s.kind == StrategySpec::Kind::Oracle && !s.scope; }))
    specs.push_back({StrategySpec::Kind::Oracle, std::nullopt});

  ResultTable table;
  table.run_id = config.run_id;
  table.dataset = prepared.data->name();
  const PrevalenceVector train_prev = prepared.train.prevalence();
  std::vector<std::vector<ResultRow>> per_bag(bags.size());
  std::vector<bool> done(bags.size(), false);
  try {
    const Matrix pool_features = prepared.test.features();
    const PoolScores pool(registry, pool_features);
    // Inductive choices do not depend on the bag.
    std::map<std::string, ModelId> fixed;
    for (const auto& spec : specs) {
      if (spec.kind == StrategySpec::Kind::IMS) fixed[spec.name()] = ims_select(registry, spec.scope);
      if (spec.kind == StrategySpec::Kind::Default) fixed[spec.name()] = default_select(registry, *spec.scope);
    }
    parallel_for(bags.size(), [&](std::size_t b) {
      const Bag& bag = bags[b];
      const double shift = l1_shift(train_prev, bag.realized());
      std::vector<ResultRow> rows;
      for (const auto& spec : specs) {
        SelectionOutcome outcome;
        switch (spec.kind) {
          case StrategySpec::Kind::Default:
          case StrategySpec::Kind::IMS:
            outcome = apply_model(spec.name(), registry, fixed.at(spec.name()), pool, bag.unlabelled());
            break;
          case StrategySpec::Kind::TMS:
            outcome = tms_select(registry, spec.scope, pool, bag.unlabelled());
            break;
          case StrategySpec::Kind::Oracle:
            outcome = oracle_select(registry, spec.scope, pool, bag);
            break;
        }
        const double true_acc = accuracy(outcome.predicted, bag.true_labels());
        rows.push_back(ResultRow{spec.name(), bag.id(), shift, true_acc, outcome.estimated_accuracy, outcome.model_id});
      }
      per_bag[b] = std::move(rows);
      done[b] = true;
    });
  } catch (const std::exception& e) {
    if (persist) {
      ResultTable partial = table;
      for (std::size_t b = 0; b < bags.size(); ++b)
        if (done[b]) partial.rows.insert(partial.rows.end(), per_bag[b].begin(), per_bag[b].end());
      partial.sort_rows();
      partial.recompute_summary();
      try {
        write_results_csv(partial, config.output_dir / "results.csv");
      } catch (const std::exception&) {
      }
    }
    throw StageError("evaluate", e.what());
  }
  for (auto& rows : per_bag) table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  table.sort_rows();
  table.recompute_summary();

  if (persist) {
    try {
      emit_report(table, config.output_dir, config.n_bins, config.alpha);
    } catch (const std::exception& e) {
      throw StageError("report", e.what());
    }
  }
  return ExperimentResult{std::move(table), std::move(manifest)};
}

}  // namespace shiftselect
