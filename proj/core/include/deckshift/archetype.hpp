#pragma once

// Deck archetype clustering: seven structural deck indicators, a per-feature
// empirical-CDF (quantile) transform, domain weights, and k-means into the
// strategy states used as transition origins and destinations.

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "deckshift/matchlog.hpp"
#include "deckshift/synthgen.hpp"

namespace deckshift {

inline constexpr std::size_t kNumDeckFeatures = 7;
using FeatureVector = std::array<double, kNumDeckFeatures>;

struct DeckFeatures {
  double avg_elixir = 0.0;
  double elixir_std = 0.0;  // population std over the eight costs
  double ratio_win_condition = 0.0;
  double ratio_spell = 0.0;
  double ratio_building = 0.0;
  double ratio_support = 0.0;
  double ratio_cheap = 0.0;  // cost <= 2

  FeatureVector values() const;
  static const std::array<const char*, kNumDeckFeatures>& names();
};

DeckFeatures deck_features(const Deck& deck, const CardCatalog& catalog);
// Throws DataError for unknown card ids or a deck that is not eight cards.
DeckFeatures deck_features(std::span<const std::string> card_ids, const CardCatalog& catalog);

// Piecewise-linear empirical CDF per feature over the reference corpus.
// Tied reference values map to their mid-rank; outputs are rescaled so the
// reference minimum maps to 0 and the maximum to 1.
class QuantileMap {
 public:
  struct Table {
    std::vector<double> values;     // distinct, ascending
    std::vector<double> positions;  // non-decreasing, in [0,1]
  };

  static QuantileMap fit(const std::vector<FeatureVector>& reference);

  double map(std::size_t feature, double x) const;
  FeatureVector transform(const FeatureVector& raw) const;

  std::array<Table, kNumDeckFeatures> tables;
};

struct StateInfo {
  int state_id = 0;
  StateGroup group = StateGroup::Control;
  std::string name;
};

struct ArchetypeFitOptions {
  std::size_t k = kNumStates;
  FeatureVector weights{1, 1, 1, 1, 1, 1, 1};
  std::size_t restarts = 50;
  std::size_t max_iter = 300;
  double tol = 1e-8;
  std::uint64_t seed = 1;
  std::size_t silhouette_sample = 2000;
};

struct ArchetypeModel {
  QuantileMap quantiles;
  FeatureVector weights{1, 1, 1, 1, 1, 1, 1};
  Eigen::MatrixXd centroids;      // k x 7, weighted quantile space
  Eigen::MatrixXd centroids_raw;  // k x 7, member means in raw feature space
  std::vector<StateInfo> states;
  double silhouette = 0.0;
  double inertia = 0.0;
  std::vector<int> fit_labels;  // state per corpus point

  std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
  Eigen::RowVectorXd embed(const DeckFeatures& f) const;
  // Nearest centroid; ties go to the lowest state id.
  int assign(const DeckFeatures& f) const;
  int assign(const Deck& deck, const CardCatalog& catalog) const;
  std::vector<int> assign_batch(const std::vector<DeckFeatures>& corpus) const;
};

// Throws DataError when the corpus holds fewer than k distinct vectors.
ArchetypeModel fit_archetypes(const std::vector<DeckFeatures>& corpus,
                              const ArchetypeFitOptions& options = {});

struct StabilityReport {
  double ari = 0.0;  // mean pairwise
  double nmi = 0.0;  // mean pairwise
  double silhouette = 0.0;  // of the first run
  std::size_t runs = 0;
};

// Pairwise agreement of independently fitted models on the same corpus.
StabilityReport clustering_stability(const std::vector<ArchetypeModel>& runs,
                                     const std::vector<DeckFeatures>& corpus);

void write_archetype_model(std::ostream& out, const ArchetypeModel& model);
ArchetypeModel read_archetype_model(std::istream& in);
void save_archetype_model(const std::string& path, const ArchetypeModel& model);
ArchetypeModel load_archetype_model(const std::string& path);

}  // namespace deckshift
