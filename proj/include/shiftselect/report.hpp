#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shiftselect/experiment.hpp"
#include "shiftselect/protocol.hpp"

namespace shiftselect {

struct SummaryRow {
  std::string strategy;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
  bool best = false;
  // Set for strategies the signed-rank test cannot separate from the best one.
  bool not_significantly_worse = false;
  std::optional<double> p_value;  // vs the best strategy, per-bag pairing
};

/// Rows in strategy order. The best strategy has the maximum mean (first name
/// on ties) and is also flagged as not significantly worse than itself.
std::vector<SummaryRow> summarize(const ResultTable& table, double alpha = 0.01);

ShiftCurve shift_curve(const ResultTable& table, std::size_t n_bins = kDefaultShiftBins);

std::string format_double(double v);

void write_results_csv(const ResultTable& table, const std::filesystem::path& path);
ResultTable read_results_csv(const std::filesystem::path& path);

/// Writes results.csv, summary.csv, shift_curve.csv and summary.txt.
void emit_report(const ResultTable& table, const std::filesystem::path& outdir, std::size_t n_bins = kDefaultShiftBins,
                 double alpha = 0.01);

}  // namespace shiftselect
