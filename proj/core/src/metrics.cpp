#include "deckshift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deckshift/common.hpp"

namespace deckshift {

SwitchGapResult switch_gap(std::span<const char> approved, std::span<const double> y,
                           std::span<const char> is_switch) {
  if (approved.size() != y.size() || is_switch.size() != y.size())
    throw DataError("switch gap inputs differ in length");
  SwitchGapResult r;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!is_switch[i]) continue;
    (approved[i] ? r.approved : r.rejected).add(y[i]);
  }
  const auto a = r.approved.mean(), b = r.rejected.mean();
  if (a && b) r.gap = *a - *b;
  return r;
}

double percentile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) throw DataError("percentile of an empty sample");
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return s[lo] + w * (s[hi] - s[lo]);
}

BootstrapCi bootstrap_gap_ci(std::span<const double> pred, std::span<const double> y,
                             std::size_t resamples, std::uint64_t seed, double level) {
  if (pred.size() != y.size()) throw DataError("bootstrap inputs differ in length");
  BootstrapCi ci;
  const std::size_t n = y.size();
  if (n == 0) return ci;
  std::vector<double> gaps;
  gaps.reserve(resamples);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t r = 0; r < resamples; ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    MeanAccumulator pos, neg;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = pick(rng);
      (pred[j] > 0.0 ? pos : neg).add(y[j]);
    }
    if (pos.n && neg.n) gaps.push_back(*pos.mean() - *neg.mean());
  }
  ci.valid_resamples = gaps.size();
  if (gaps.empty()) return ci;
  std::sort(gaps.begin(), gaps.end());
  const double a = (1.0 - level) / 2.0;
  ci.lo = percentile_sorted(gaps, a);
  ci.hi = percentile_sorted(gaps, 1.0 - a);
  return ci;
}

}  // namespace deckshift
