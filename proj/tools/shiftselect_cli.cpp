#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "shiftselect/experiment.hpp"
#include "shiftselect/report.hpp"

namespace ss = shiftselect;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

ss::RunConfig resolve_config(const std::string& config_path, const std::string& out_dir) {
  ss::RunConfig config = config_path.empty() ? ss::RunConfig{} : ss::load_config(config_path);
  ss::apply_env_overrides(config);
  if (!out_dir.empty()) config.output_dir = out_dir;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transductive model selection under prior probability shift"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  auto* train = app.add_subcommand("train", "build and persist the model registry");
  train->add_option("-c,--config", config_path, "run config (JSON)");
  train->add_option("-o,--out", out_dir, "output directory, overrides the config");

  auto* run = app.add_subcommand("run", "run the full experiment and write reports");
  run->add_option("-c,--config", config_path, "run config (JSON)");
  run->add_option("-o,--out", out_dir, "output directory, overrides the config");

  std::string results_path;
  std::size_t n_bins = ss::kDefaultShiftBins;
  double alpha = 0.01;
  auto* report = app.add_subcommand("report", "re-emit reports from an existing results.csv");
  report->add_option("-r,--results", results_path, "results.csv to read")->required();
  report->add_option("-o,--out", out_dir, "output directory")->required();
  report->add_option("-b,--bins", n_bins, "number of shift bins")->check(CLI::PositiveNumber);
  report->add_option("-a,--alpha", alpha, "significance level")->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      const auto config = resolve_config(config_path, out_dir);
      const auto manifest = ss::train_registry(config);
      std::cout << "registry: " << manifest.at("registry_size").get<std::size_t>() << " models written to "
                << (config.output_dir / "registry").string() << "\n";
    } else if (*run) {
      const auto config = resolve_config(config_path, out_dir);
      const auto result = ss::run_experiment(config);
      const auto rows = ss::summarize(result.table, config.alpha);
      for (const auto& r : rows)
        std::printf("%-16s %.4f +- %.4f%s\n", r.strategy.c_str(), r.mean, r.std, r.best ? " *" : "");
      std::cout << "reports written to " << config.output_dir.string() << "\n";
    } else if (*report) {
      const auto table = ss::read_results_csv(results_path);
      const std::filesystem::path out = out_dir;
      ss::emit_report(table, out, n_bins, alpha);
      std::cout << "reports written to " << out.string() << "\n";
    }
  } catch (const ss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
