#pragma once

// Evaluation primitives shared by the heads, fusion and policy evaluation.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace deckshift {

struct MeanAccumulator {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) { sum += v, ++n; }
  std::optional<double> mean() const {
    return n == 0 ? std::nullopt : std::optional<double>(sum / static_cast<double>(n));
  }
};

struct SwitchGapResult {
  std::optional<double> gap;  // undefined when either side is empty
  MeanAccumulator approved;   // actual switchers the policy approved
  MeanAccumulator rejected;   // actual switchers the policy rejected
};

// Among events with is_switch set: mean y of approved minus mean y of rejected.
SwitchGapResult switch_gap(std::span<const char> approved, std::span<const double> y,
                           std::span<const char> is_switch);

// Linear-interpolated percentile of sorted data, q in [0,1].
double percentile_sorted(const std::vector<double>& sorted, double q);

struct BootstrapCi {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t valid_resamples = 0;
};

// Percentile bootstrap of the gap mean(y | pred > 0) - mean(y | pred <= 0)
// over events resampled with replacement. Resamples with an empty side are
// skipped.
BootstrapCi bootstrap_gap_ci(std::span<const double> pred, std::span<const double> y,
                             std::size_t resamples, std::uint64_t seed, double level = 0.95);

}  // namespace deckshift
