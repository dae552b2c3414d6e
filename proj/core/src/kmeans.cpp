#include "deckshift/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include "deckshift/common.hpp"

namespace deckshift {
namespace {

struct Run {
  Eigen::MatrixXd centroids;
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<double> trace;
  std::size_t iterations = 0;
};

Eigen::MatrixXd plus_plus_init(const Eigen::MatrixXd& x, std::size_t k, std::mt19937_64& rng) {
  const auto n = x.rows();
  Eigen::MatrixXd c(static_cast<Eigen::Index>(k), x.cols());
  const auto first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  c.row(0) = x.row(first);
  Eigen::VectorXd d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (std::size_t j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    } else {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2(pick);
        if (r < 0.0) break;
      }
    }
    c.row(static_cast<Eigen::Index>(j)) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - c.row(static_cast<Eigen::Index>(j))).rowwise().squaredNorm());
  }
  return c;
}

double assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, std::vector<int>& labels,
              Eigen::VectorXd& dist) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = (x.row(i) - c.row(j)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist(i) = bd;
    inertia += bd;
  }
  return inertia;
}

Run lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd c, const KMeansOptions& opt) {
  const auto n = x.rows();
  const auto k = c.rows();
  Run run;
  run.labels.assign(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dist(n);
  run.inertia = assign(x, c, run.labels, dist);
  run.trace.push_back(run.inertia);
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto l = run.labels[static_cast<std::size_t>(i)];
      next.row(l) += x.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    std::vector<Eigen::Index> taken;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        next.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      // Empty cluster: reseed from the point farthest from its centroid.
      Eigen::Index far = 0;
      double fd = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::find(taken.begin(), taken.end(), i) != taken.end()) continue;
        if (dist(i) > fd) {
          fd = dist(i);
          far = i;
        }
      }
      taken.push_back(far);
      next.row(j) = x.row(far);
    }
    const double shift = (next - c).rowwise().norm().maxCoeff();
    c = std::move(next);
    run.inertia = assign(x, c, run.labels, dist);
    run.trace.push_back(run.inertia);
    run.iterations = it + 1;
    if (shift < opt.tol) break;
  }
  run.centroids = std::move(c);
  return run;
}

}  // namespace

std::size_t count_distinct_rows(const Eigen::MatrixXd& points) {
  std::set<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index j = 0; j < points.cols(); ++j) r[static_cast<std::size_t>(j)] = points(i, j);
    rows.insert(std::move(r));
  }
  return rows.size();
}

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& x) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    const double d = (x - centroids.row(j)).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& options) {
  if (options.k == 0) throw DataError("k must be positive");
  if (count_distinct_rows(points) < options.k)
    throw DataError("k-means needs at least " + std::to_string(options.k) +
                    " distinct points");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(derive_seed(options.seed, r));
    auto run = lloyd(points, plus_plus_init(points, options.k, rng), options);
    if (run.inertia < best.inertia) {
      best.centroids = std::move(run.centroids);
      best.labels = std::move(run.labels);
      best.inertia = run.inertia;
      best.inertia_trace = std::move(run.trace);
      best.iterations = run.iterations;
      best.restart = r;
    }
  }
  return best;
}

}  // namespace deckshift
