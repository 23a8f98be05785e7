#pragma once

#include <cstddef>
#include <span>

namespace shiftselect {

enum class WilcoxonMethod {
  Auto,    // exact up to kWilcoxonExactMax pairs, normal approximation beyond
  Exact,   // sign enumeration; at most 20 nonzero pairs
  Normal,  // continuity-corrected normal approximation with tie correction
};

inline constexpr std::size_t kWilcoxonExactMax = 12;
inline constexpr std::size_t kWilcoxonMinPairs = 5;

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;  // two-sided
  bool significant = false;
  std::size_t n = 0;  // pairs after dropping zero differences
  bool exact = false;
};

/// Two-sided signed-rank test on a - b. Zero differences are dropped and tied
/// absolute differences get averaged ranks. Throws std::invalid_argument for
/// unequal lengths or fewer than five nonzero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, double alpha = 0.01,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

}  // namespace shiftselect
