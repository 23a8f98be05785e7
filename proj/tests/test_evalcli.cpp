#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "shiftselect/experiment.hpp"
#include "shiftselect/report.hpp"
#include "shiftselect/wilcoxon.hpp"

using namespace shiftselect;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const std::string& out) {
  RunConfig c;
  c.run_id = "small";
  c.dataset.synthetic = SyntheticSpec{2, 3, 400, 2.0, {0.6, 0.4}};
  c.families = {Family::LR, Family::KNN};
  c.strategies = {"default-LR", "default-KNN", "IMS-LR", "IMS-KNN", "IMS-All", "TMS-All", "oracle"};
  c.r = 10;
  c.s = 50;
  c.seed = 3;
  c.output_dir = fs::temp_directory_path() / out;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

ResultTable handmade_table() {
  ResultTable t;
  t.run_id = "r";
  t.dataset = "d";
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t b = 0; b < 40; ++b) {
    const double shift = 1.5 * u(rng);
    const double base = 0.6 + 0.3 * u(rng);
    t.rows.push_back({"A", b, shift, base, 0.7, 1});
    t.rows.push_back({"B", b, shift, base - 0.05 - 0.05 * u(rng), std::nullopt, 2});
    t.rows.push_back({"C", b, shift, base + (b % 2 ? 1e-3 : -1e-3) * u(rng), std::nullopt, 3});
  }
  t.sort_rows();
  t.recompute_summary();
  return t;
}

}  // namespace

TEST_SUITE("wilcoxon") {
  TEST_CASE("n=6 all positive differences gives exact p 2/64") {
    const std::vector<double> a{1, 2, 3, 4, 5, 6}, b(6, 0.0);
    const auto w = wilcoxon_signed_rank(a, b);
    CHECK(w.exact);
    CHECK(w.w_minus == 0.0);
    CHECK(w.w_plus == 21.0);
    CHECK(w.p_value == 0.03125);
    CHECK_FALSE(w.significant);
    CHECK(wilcoxon_signed_rank(a, b, 0.05).significant);
  }

  TEST_CASE("identical samples are degenerate") {
    const std::vector<double> a{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), std::invalid_argument);
    const std::vector<double> b{0.1, 0.2, 0.3, 0.4, 0.0, 0.0};
    CHECK_THROWS(wilcoxon_signed_rank(a, b));  // two nonzero differences
    CHECK_THROWS(wilcoxon_signed_rank(a, std::vector<double>{1.0}));
  }

  TEST_CASE("exact mode matches sign enumeration, ties and zeros included") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> v(-4, 4);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 5 + static_cast<std::size_t>(trial % 8);
      std::vector<double> a(n), b(n, 0.0);
      for (auto& x : a) x = v(rng) * 0.25;
      std::size_t nonzero = 0;
      for (double x : a) nonzero += x != 0.0;
      if (nonzero < 5) continue;
      const auto w = wilcoxon_signed_rank(a, b, 0.01, WilcoxonMethod::Exact);
      CHECK(w.p_value == doctest::Approx(oracle::wilcoxon_exact_p(a, b)).epsilon(1e-12));
      CHECK(w.n == nonzero);
      CHECK(w.statistic == std::min(w.w_plus, w.w_minus));
      CHECK(w.w_plus + w.w_minus == doctest::Approx(nonzero * (nonzero + 1) / 2.0));
    }
  }

  TEST_CASE("normal approximation tracks the exact p at n=12") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.3, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> a(12), b(12);
      for (std::size_t i = 0; i < 12; ++i) {
        a[i] = g(rng);
        b[i] = g(rng) * 0.5;
      }
      const auto e = wilcoxon_signed_rank(a, b, 0.01, WilcoxonMethod::Exact);
      const auto z = wilcoxon_signed_rank(a, b, 0.01, WilcoxonMethod::Normal);
      CHECK(std::abs(e.p_value - z.p_value) <= 0.02);
      CHECK(wilcoxon_signed_rank(a, b).exact);
    }
    std::vector<double> big(30), zero(30, 0.0);
    for (std::size_t i = 0; i < 30; ++i) big[i] = static_cast<double>(i) - 10.5;
    CHECK_FALSE(wilcoxon_signed_rank(big, zero).exact);
    CHECK_THROWS(wilcoxon_signed_rank(big, zero, 0.01, WilcoxonMethod::Exact));
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const RunConfig c;
    CHECK(c.r == 1000);
    CHECK(c.s == 100);
    CHECK(c.train_fraction == 0.7);
    CHECK(c.validation_fraction == 0.5);
    CHECK(c.n_bins == 10);
    CHECK(c.families.size() == 3);
    CHECK(c.cap.bandwidth == 0.1);
    CHECK(c.cap.leap.weight == 1.0);
    CHECK(c.strategies == default_strategy_roster());
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("JSON round trip and partial documents") {
    RunConfig c = small_config("x");
    c.cap.quantifier = QuantifierKind::CC;
    c.dataset.label_column = std::string("y");
    const auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    const auto partial = RunConfig::from_json(nlohmann::json::parse(R"({"protocol": {"r": 20}, "run_id": "p"})"));
    CHECK(partial.r == 20);
    CHECK(partial.s == 100);
    CHECK(partial.run_id == "p");
  }

  TEST_CASE("invalid documents are config errors") {
    using nlohmann::json;
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"bogus": 1})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"protocol": {"rr": 1}})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"split": {"train_fraction": 1.0}})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"protocol": {"r": 0}})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"protocol": {"s": "ten"}})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"strategies": ["TMS-SVM"]})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"families": ["LR"]})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"quantifier": {"kind": "HDy"}})")), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("seed override from the environment") {
    RunConfig c;
    ::setenv("SHIFTSELECT_SEED", "1234", 1);
    apply_env_overrides(c);
    CHECK(c.seed == 1234);
    ::setenv("SHIFTSELECT_SEED", "12x", 1);
    CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
    ::unsetenv("SHIFTSELECT_SEED");
  }

  TEST_CASE("strategy names") {
    for (const auto& name : default_strategy_roster()) CHECK(StrategySpec::parse(name).name() == name);
    CHECK(StrategySpec::parse("oracle-MLP").scope == Family::MLP);
    CHECK(StrategySpec::parse("TMS-KNN").kind == StrategySpec::Kind::TMS);
    CHECK_THROWS(StrategySpec::parse("default-All"));
    CHECK_THROWS(StrategySpec::parse("best"));
  }
}

TEST_SUITE("experiment") {
  TEST_CASE("two-class run with r=10 has ten rows per strategy") {
    const auto cfg = small_config("shiftselect_small_run");
    fs::remove_all(cfg.output_dir);
    const auto res = run_experiment(cfg);
    const auto& t = res.table;
    CHECK(t.strategies().size() == cfg.strategies.size());
    for (const auto& s : t.strategies()) CHECK(t.summary.at(s).n == 10);
    CHECK(t.rows.size() == 10 * cfg.strategies.size());
    for (std::size_t i = 1; i < t.rows.size(); ++i)
      CHECK(std::make_pair(t.rows[i - 1].strategy, t.rows[i - 1].bag_id) < std::make_pair(t.rows[i].strategy, t.rows[i].bag_id));
    for (const auto& r : t.rows) {
      CHECK(r.l1_shift >= 0.0);
      CHECK(r.l1_shift <= 2.0);
      CHECK(r.est_acc.has_value() == (r.strategy == "TMS-All"));
    }
    CHECK(fs::exists(cfg.output_dir / "results.csv"));
    CHECK(fs::exists(cfg.output_dir / "summary.csv"));
    CHECK(fs::exists(cfg.output_dir / "shift_curve.csv"));
    CHECK(fs::exists(cfg.output_dir / "summary.txt"));
    CHECK(fs::exists(cfg.output_dir / "registry" / "manifest.json"));
    CHECK(res.manifest.at("registry_size") == 40);
    // Per-strategy oracle dominance on every bag.
    std::map<std::size_t, double> oracle;
    for (const auto& r : t.rows)
      if (r.strategy == "oracle") oracle[r.bag_id] = r.true_acc;
    for (const auto& r : t.rows) CHECK(oracle.at(r.bag_id) >= r.true_acc);
    fs::remove_all(cfg.output_dir);
  }

  TEST_CASE("an oracle-only run dominates strategies added later on the same seed") {
    auto cfg = small_config("shiftselect_oracle_only");
    cfg.strategies = {"oracle"};
    const auto only = run_experiment(cfg, false);
    CHECK(only.table.strategies() == std::vector<std::string>{"oracle"});
    cfg.strategies = small_config("").strategies;
    const auto full = run_experiment(cfg, false);
    const double oracle_mean = only.table.summary.at("oracle").mean;
    for (const auto& [name, s] : full.table.summary) CHECK(oracle_mean >= s.mean);
    CHECK(full.table.summary.at("oracle").mean == oracle_mean);
  }

  TEST_CASE("the oracle is always evaluated") {
    auto cfg = small_config("");
    cfg.strategies = {"IMS-All"};
    const auto res = run_experiment(cfg, false);
    CHECK(res.table.strategies() == std::vector<std::string>{"IMS-All", "oracle"});
  }

  TEST_CASE("reruns are byte-identical") {
    auto a = small_config("shiftselect_det_a");
    auto b = small_config("shiftselect_det_b");
    run_experiment(a);
    run_experiment(b);
    for (const char* f : {"results.csv", "summary.csv", "shift_curve.csv"}) CHECK(slurp(a.output_dir / f) == slurp(b.output_dir / f));
    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
  }

  TEST_CASE("stage failures name the stage") {
    auto cfg = small_config("");
    cfg.dataset.kind = "csv";
    cfg.dataset.csv_path = "/nonexistent/data.csv";
    try {
      run_experiment(cfg, false);
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "load");
    }
    auto tiny = small_config("");
    tiny.dataset.synthetic = SyntheticSpec{2, 2, 4, 2.0, {0.5, 0.5}};
    try {
      run_experiment(tiny, false);
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "split");
    }
  }

  TEST_CASE("the manifest records the protocol constants") {
    const RunConfig c;
    RunConfig quick = c;
    quick.dataset.synthetic.n = 1000;
    const auto prepared = prepare_data(quick);
    const auto m = build_manifest(quick, prepared);
    CHECK(m.at("protocol").at("r") == 1000);
    CHECK(m.at("protocol").at("s") == 100);
    CHECK(m.at("split").at("L") == 700);
    CHECK(m.at("split").at("U") == 300);
    CHECK(m.at("split").at("L_tr") == m.at("split").at("L_va"));
    CHECK(prepared.scaler.has_value());
    const Matrix z = prepared.train.features();
    for (Eigen::Index j = 0; j < z.cols(); ++j) CHECK(std::abs(z.col(j).mean()) < 1e-9);
  }

  TEST_CASE("csv-backed run") {
    const auto path = fs::temp_directory_path() / "shiftselect_exp.csv";
    {
      std::ofstream out(path);
      out << "a,b,label\n";
      std::mt19937_64 rng(2);
      std::normal_distribution<double> g(0.0, 1.0);
      for (int i = 0; i < 200; ++i) {
        const bool pos = i % 3 == 0;
        out << g(rng) + (pos ? 2.0 : 0.0) << ',' << g(rng) << ',' << (pos ? "yes" : "no") << "\n";
      }
    }
    auto cfg = small_config("");
    cfg.dataset.kind = "csv";
    cfg.dataset.csv_path = path;
    cfg.dataset.label_column = std::string("label");
    const auto res = run_experiment(cfg, false);
    CHECK(res.table.rows.size() == 10 * cfg.strategies.size());
    CHECK(res.manifest.at("dataset").at("class_names") == nlohmann::json::array({"yes", "no"}));
    fs::remove(path);
  }
}

TEST_SUITE("report") {
  TEST_CASE("empty table writes header-only files") {
    const auto dir = fs::temp_directory_path() / "shiftselect_empty_report";
    fs::remove_all(dir);
    ResultTable t;
    emit_report(t, dir);
    CHECK(lines_of(dir / "results.csv").size() == 1);
    CHECK(lines_of(dir / "summary.csv").size() == 1);
    CHECK(lines_of(dir / "shift_curve.csv").size() == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("unwritable directory is an error") {
    CHECK_THROWS(emit_report(handmade_table(), "/proc/shiftselect_cannot_write"));
  }

  TEST_CASE("summary means match the rows of results.csv") {
    const auto dir = fs::temp_directory_path() / "shiftselect_report";
    fs::remove_all(dir);
    const auto t = handmade_table();
    emit_report(t, dir, 5, 0.01);
    // Hand recomputation from the written file.
    std::map<std::string, std::pair<double, std::size_t>> sums;
    const auto rows = lines_of(dir / "results.csv");
    CHECK(rows[0] == "run_id,dataset,strategy,bag_id,l1_shift,true_acc,est_acc,model_id");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      std::vector<std::string> cells;
      std::stringstream ss(rows[i]);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      auto& [s, n] = sums[cells[2]];
      s += std::stod(cells[5]);
      ++n;
    }
    const auto summary = lines_of(dir / "summary.csv");
    CHECK(summary[0].find("per_bag") != std::string::npos);
    for (std::size_t i = 1; i < summary.size(); ++i) {
      std::vector<std::string> cells;
      std::stringstream ss(summary[i]);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      const auto& [s, n] = sums.at(cells[0]);
      CHECK(std::abs(std::stod(cells[2]) - s / static_cast<double>(n)) <= 1e-12);
      CHECK(std::abs(t.summary.at(cells[0]).mean - s / static_cast<double>(n)) <= 1e-12);
    }
    fs::remove_all(dir);
  }

  TEST_CASE("best and not-significantly-worse flags") {
    const auto rows = summarize(handmade_table(), 0.01);
    REQUIRE(rows.size() == 3);
    std::map<std::string, SummaryRow> by;
    for (const auto& r : rows) by[r.strategy] = r;
    const std::string best = by["A"].mean >= by["C"].mean ? "A" : "C";
    const std::string other = best == "A" ? "C" : "A";
    CHECK(by[best].best);
    CHECK_FALSE(by["B"].best);
    CHECK_FALSE(by["B"].not_significantly_worse);
    CHECK(*by["B"].p_value < 0.01);
    CHECK(by[best].not_significantly_worse);
    CHECK(by[other].not_significantly_worse);
  }

  TEST_CASE("shift curve file matches bin_by_shift exactly") {
    const auto dir = fs::temp_directory_path() / "shiftselect_curve";
    fs::remove_all(dir);
    const auto t = handmade_table();
    emit_report(t, dir, 4, 0.01);
    const auto records = t.shift_records();
    const auto curve = bin_by_shift(records, 4);
    std::vector<std::string> expected{"bin,bin_lo,bin_hi,n_bags,strategy,mean_true_acc"};
    for (const auto& b : curve.bins)
      for (const auto& [s, m] : b.mean_accuracy)
        expected.push_back(std::to_string(b.index) + "," + format_double(b.lo) + "," + format_double(b.hi) + "," +
                           std::to_string(b.count) + "," + s + "," + format_double(m));
    CHECK(lines_of(dir / "shift_curve.csv") == expected);
    fs::remove_all(dir);
  }

  TEST_CASE("results.csv round-trips exactly") {
    const auto dir = fs::temp_directory_path() / "shiftselect_roundtrip";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto t = handmade_table();
    write_results_csv(t, dir / "results.csv");
    const auto back = read_results_csv(dir / "results.csv");
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      CHECK(back.rows[i].strategy == t.rows[i].strategy);
      CHECK(back.rows[i].l1_shift == t.rows[i].l1_shift);
      CHECK(back.rows[i].true_acc == t.rows[i].true_acc);
      CHECK(back.rows[i].est_acc == t.rows[i].est_acc);
      CHECK(back.rows[i].model_id == t.rows[i].model_id);
    }
    CHECK(back.run_id == "r");
    {
      std::ofstream bad(dir / "bad.csv");
      bad << "run_id,dataset,strategy,bag_id,l1_shift,true_acc,est_acc,model_id\nr,d,A,x,0,0,,1\n";
    }
    CHECK_THROWS(read_results_csv(dir / "bad.csv"));
    fs::remove_all(dir);
  }
}
