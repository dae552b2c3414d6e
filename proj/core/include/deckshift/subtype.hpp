#pragma once

// Player behavioral profiles, k=3 subtype clustering with canonical labels,
// and the persona gate.

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "deckshift/matchlog.hpp"

namespace deckshift {

enum class Subtype : std::uint8_t { Loyalist = 0, LossReactive = 1, Flex = 2 };
std::string_view to_string(Subtype s);

inline constexpr std::size_t kNumSubtypeFeatures = 4;
using SubtypeFeatures = std::array<double, kNumSubtypeFeatures>;

struct BehaviorProfile {
  double overall_switch_rate = 0.0;
  double post_loss_switch_rate = 0.0;
  double post_win_switch_rate = 0.0;
  double loss_reactivity = 0.0;
  double avg_change_magnitude = 0.0;  // mean Jaccard distance over changes
  double top_deck_occupancy = 0.0;
  double deck_entropy = 0.0;  // nats, reported only
  std::size_t matches = 0;
  std::size_t post_loss_obs = 0;
  std::size_t post_win_obs = 0;

  // [overall_switch_rate, loss_reactivity, avg_change_magnitude, top_deck_occupancy]
  SubtypeFeatures features() const;
};

double jaccard_distance(const Deck& a, const Deck& b);

// Rates with an empty denominator are reported as 0.
BehaviorProfile behavior_profile(std::span<const MatchRecord> matches);
BehaviorProfile behavior_profile(const PlayerHistory& history);

struct SubtypeModel {
  SubtypeFeatures mean{};
  SubtypeFeatures stddev{1, 1, 1, 1};
  Eigen::MatrixXd centroids;      // 3 x 4 standardized, row = canonical label
  Eigen::MatrixXd centroids_raw;  // 3 x 4 member means in raw feature space
  double silhouette = 0.0;
  double inertia = 0.0;
  std::vector<int> fit_labels;

  Eigen::RowVectorXd standardize(const SubtypeFeatures& f) const;
  Subtype assign(const BehaviorProfile& p) const;
  std::vector<Subtype> assign_batch(const std::vector<BehaviorProfile>& profiles) const;
};

struct SubtypeFitOptions {
  std::size_t restarts = 50;
  std::size_t max_iter = 300;
  double tol = 1e-8;
  std::uint64_t seed = 1;
};

// Throws DataError with fewer than three distinct profiles.
SubtypeModel fit_subtypes(const std::vector<BehaviorProfile>& profiles,
                          const SubtypeFitOptions& options = {});

enum class GateDecision : std::uint8_t { Stay, Forward };
std::string_view to_string(GateDecision d);
GateDecision persona_gate(Subtype s);

void write_subtype_model(std::ostream& out, const SubtypeModel& model);
SubtypeModel read_subtype_model(std::istream& in);
void save_subtype_model(const std::string& path, const SubtypeModel& model);
SubtypeModel load_subtype_model(const std::string& path);

struct SubtypeRow {
  std::string player_id;
  Subtype label = Subtype::Flex;
  BehaviorProfile profile;
};
void write_subtype_table(std::ostream& out, const std::vector<SubtypeRow>& rows);
std::vector<SubtypeRow> read_subtype_table(std::istream& in);

}  // namespace deckshift
