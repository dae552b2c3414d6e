#pragma once

#include <Eigen/Core>
#include <vector>

namespace deckshift {

// Adjusted Rand index from the pair-counting contingency formulas.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Mutual information normalized by the arithmetic mean of the entropies.
double normalized_mutual_info(const std::vector<int>& a, const std::vector<int>& b);

// Mean over points of (b - a) / max(a, b); points alone in their cluster
// contribute 0. Throws DataError when fewer than two clusters are present.
double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& labels);

}  // namespace deckshift
