#include "deckshift/clustering_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "deckshift/common.hpp"

namespace deckshift {
namespace {

struct Contingency {
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows;
  std::map<int, double> cols;
  double n = 0.0;
};

Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DataError("labelings differ in length");
  Contingency c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.cells[{a[i], b[i]}] += 1.0;
    c.rows[a[i]] += 1.0;
    c.cols[b[i]] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const auto c = contingency(a, b);
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : c.cells) index += comb2(v);
  for (const auto& [k, v] : c.rows) sa += comb2(v);
  for (const auto& [k, v] : c.cols) sb += comb2(v);
  const double total = comb2(c.n);
  if (total == 0.0) return 1.0;
  const double expected = sa * sb / total;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double normalized_mutual_info(const std::vector<int>& a, const std::vector<int>& b) {
  const auto c = contingency(a, b);
  if (c.n == 0.0) return 1.0;
  double mi = 0.0;
  for (const auto& [k, v] : c.cells)
    mi += v / c.n * std::log(c.n * v / (c.rows.at(k.first) * c.cols.at(k.second)));
  auto entropy = [&](const std::map<int, double>& m) {
    double h = 0.0;
    for (const auto& [k, v] : m) h -= v / c.n * std::log(v / c.n);
    return h;
  };
  const double ha = entropy(c.rows);
  const double hb = entropy(c.cols);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  const double denom = 0.5 * (ha + hb);
  return std::clamp(mi / denom, 0.0, 1.0);
}

double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    throw DataError("silhouette: label count does not match points");
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, static_cast<int>(ids.size()));
  if (ids.size() < 2) throw DataError("silhouette is undefined for a single cluster");
  const auto n = points.rows();
  const auto k = static_cast<Eigen::Index>(ids.size());
  std::vector<int> lab(labels.size());
  std::vector<double> size(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    lab[i] = ids.at(labels[i]);
    size[static_cast<std::size_t>(lab[i])] += 1.0;
  }
  double total = 0.0;
  Eigen::VectorXd sums(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    sums.setZero();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      sums(lab[static_cast<std::size_t>(j)]) += (points.row(i) - points.row(j)).norm();
    }
    const int own = lab[static_cast<std::size_t>(i)];
    if (size[static_cast<std::size_t>(own)] <= 1.0) continue;
    const double a = sums(own) / (size[static_cast<std::size_t>(own)] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums(c) / size[static_cast<std::size_t>(c)]);
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

}  // namespace deckshift
