#include "shiftselect/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "shiftselect/wilcoxon.hpp"

namespace shiftselect {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("error while writing " + path.string());
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& text, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw std::runtime_error("results.csv line " + std::to_string(line) + ": bad number '" + text + "'");
  return v;
}

std::size_t parse_index(const std::string& text, std::size_t line) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw std::runtime_error("results.csv line " + std::to_string(line) + ": bad integer '" + text + "'");
  return static_cast<std::size_t>(std::stoull(text));
}

const char* kResultsHeader = "run_id,dataset,strategy,bag_id,l1_shift,true_acc,est_acc,model_id";

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<SummaryRow> summarize(const ResultTable& table, double alpha) {
  std::map<std::string, std::map<std::size_t, double>> by_bag;
  for (const auto& r : table.rows) by_bag[r.strategy][r.bag_id] = r.true_acc;

  ResultTable copy;
  copy.rows = table.rows;
  copy.recompute_summary();

  std::vector<SummaryRow> out;
  for (const auto& [name, s] : copy.summary) out.push_back(SummaryRow{name, s.n, s.mean, s.std, false, false, {}});
  if (out.empty()) return out;

  std::size_t best = 0;
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].mean > out[best].mean) best = i;
  out[best].best = true;
  out[best].not_significantly_worse = true;

  const auto& best_bags = by_bag.at(out[best].strategy);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i == best) continue;
    std::vector<double> a, b;
    for (const auto& [bag, acc] : by_bag.at(out[i].strategy)) {
      const auto it = best_bags.find(bag);
      if (it == best_bags.end()) continue;
      a.push_back(acc);
      b.push_back(it->second);
    }
    try {
      const auto w = wilcoxon_signed_rank(a, b, alpha);
      out[i].p_value = w.p_value;
      out[i].not_significantly_worse = !w.significant;
    } catch (const std::invalid_argument&) {
      // Too few differing bags to tell the two apart.
      out[i].not_significantly_worse = true;
    }
  }
  return out;
}

ShiftCurve shift_curve(const ResultTable& table, std::size_t n_bins) {
  const auto records = table.shift_records();
  return bin_by_shift(records, n_bins);
}

void write_results_csv(const ResultTable& table, const fs::path& path) {
  auto out = open_output(path);
  out << kResultsHeader << "\n";
  for (const auto& r : table.rows) {
    out << table.run_id << ',' << table.dataset << ',' << r.strategy << ',' << r.bag_id << ','
        << format_double(r.l1_shift) << ',' << format_double(r.true_acc) << ','
        << (r.est_acc ? format_double(*r.est_acc) : std::string()) << ',' << r.model_id << "\n";
  }
  check_written(out, path);
}

ResultTable read_results_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw std::runtime_error(path.string() + ": unexpected header");
  ResultTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 8)
      throw std::runtime_error("results.csv line " + std::to_string(line_no) + ": expected 8 fields");
    if (table.rows.empty()) {
      table.run_id = cells[0];
      table.dataset = cells[1];
    }
    ResultRow row;
    row.strategy = cells[2];
    row.bag_id = parse_index(cells[3], line_no);
    row.l1_shift = parse_double(cells[4], line_no);
    row.true_acc = parse_double(cells[5], line_no);
    if (!cells[6].empty()) row.est_acc = parse_double(cells[6], line_no);
    row.model_id = parse_index(cells[7], line_no);
    table.rows.push_back(std::move(row));
  }
  table.sort_rows();
  table.recompute_summary();
  return table;
}

void emit_report(const ResultTable& table, const fs::path& outdir, std::size_t n_bins, double alpha) {
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (!fs::is_directory(outdir)) throw std::runtime_error("cannot create output directory " + outdir.string());

  write_results_csv(table, outdir / "results.csv");

  const auto rows = summarize(table, alpha);
  {
    const auto path = outdir / "summary.csv";
    auto out = open_output(path);
    out << "strategy,n_bags,mean_true_acc,std_true_acc,best,not_significantly_worse,wilcoxon_p_vs_best_per_bag\n";
    for (const auto& r : rows) {
      out << r.strategy << ',' << r.n << ',' << format_double(r.mean) << ',' << format_double(r.std) << ','
          << (r.best ? 1 : 0) << ',' << (r.not_significantly_worse ? 1 : 0) << ','
          << (r.p_value ? format_double(*r.p_value) : std::string()) << "\n";
    }
    check_written(out, path);
  }

  const auto curve = shift_curve(table, n_bins);
  {
    const auto path = outdir / "shift_curve.csv";
    auto out = open_output(path);
    out << "bin,bin_lo,bin_hi,n_bags,strategy,mean_true_acc\n";
    for (const auto& bin : curve.bins)
      for (const auto& [strategy, mean] : bin.mean_accuracy)
        out << bin.index << ',' << format_double(bin.lo) << ',' << format_double(bin.hi) << ',' << bin.count << ','
            << strategy << ',' << format_double(mean) << "\n";
    check_written(out, path);
  }

  {
    const auto path = outdir / "summary.txt";
    auto out = open_output(path);
    out << "run " << table.run_id << " on " << table.dataset << "\n";
    out << "accuracy over bags (mean +- std); * best, + not significantly worse than best"
        << " (Wilcoxon signed-rank on per-bag accuracies, alpha " << format_double(alpha) << ")\n\n";
    char buf[160];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "  %-16s %.4f +- %.4f  n=%zu %s%s\n", r.strategy.c_str(), r.mean, r.std, r.n,
                    r.best ? "*" : "", r.not_significantly_worse ? "+" : "");
      out << buf;
    }
    if (!curve.bins.empty()) {
      out << "\nmean accuracy by L1 shift bin\n";
      for (const auto& bin : curve.bins) {
        std::snprintf(buf, sizeof buf, "  [%.3f, %.3f] n=%zu", bin.lo, bin.hi, bin.count);
        out << buf;
        for (const auto& [strategy, mean] : bin.mean_accuracy) {
          std::snprintf(buf, sizeof buf, "  %s=%.4f", strategy.c_str(), mean);
          out << buf;
        }
        out << "\n";
      }
    }
    check_written(out, path);
  }
}

}  // namespace shiftselect
