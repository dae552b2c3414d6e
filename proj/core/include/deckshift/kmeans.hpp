#pragma once

// Lloyd's k-means with k-means++ seeding and best-of-N restarts. Shared by
// deck archetype and player subtype clustering.

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace deckshift {

struct KMeansOptions {
  std::size_t k = 13;
  std::size_t restarts = 50;
  std::size_t max_iter = 300;
  double tol = 1e-8;  // stop when no centroid moves further than this
  std::uint64_t seed = 1;
};

struct KMeansResult {
  Eigen::MatrixXd centroids;  // k x d
  std::vector<int> labels;    // nearest centroid per point
  double inertia = 0.0;       // sum of squared distances
  std::vector<double> inertia_trace;  // per iteration of the kept restart
  std::size_t iterations = 0;
  std::size_t restart = 0;  // index of the kept restart
};

// Points are rows. Throws DataError when there are fewer than k distinct rows.
KMeansResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& options);

// Nearest row of `centroids` to `x` under squared Euclidean distance; ties go
// to the lowest index.
int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& x);

std::size_t count_distinct_rows(const Eigen::MatrixXd& points);

}  // namespace deckshift
