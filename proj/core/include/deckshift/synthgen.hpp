#pragma once

// Synthetic match-log populations with planted ground truth: 13 deck
// archetype templates, three behavioral subtypes driven by a post-outcome
// switching automaton, mastery that accrues with consecutive deck use, and
// per-player state affinities.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "deckshift/matchlog.hpp"

namespace deckshift {

class KeyValueConfig;

struct SubtypeBehavior {
  double p_switch_after_loss = 0.0;
  double p_switch_after_win = 0.0;
  double within_state_adjust_prob = 0.5;
};

struct GeneratorConfig {
  std::size_t n_players = 2000;
  std::size_t min_matches = 180;
  std::size_t max_matches = 220;
  std::array<double, kNumSubtypes> subtype_mix{0.481, 0.160, 0.359};
  std::array<SubtypeBehavior, kNumSubtypes> behavior{{
      {0.0, 0.0, 0.9},        // one-deck loyalist
      {0.487, 0.064, 0.25},   // loss-reactive switcher
      {0.148, 0.066, 0.6},    // flex player
  }};
  std::array<double, 3> tier_base{0.44, 0.48, 0.52};
  double state_base_spread = 0.015;
  double affinity_sd = 0.05;
  double mastery_gain = 0.005;
  double mastery_cap = 0.06;
  double mastery_retain_cross = 0.4;
  double mastery_retain_within = 0.8;
  std::array<double, kNumStates> state_meta_penalty{0, 0, 0, 0, 0, 0, 0,
                                                     0, 0, 0, 0, 0, -0.08};
  double opponent_meta = 0.0;
  double deck_noise = 0.15;  // per-slot probability of a +-1 cost shift
  std::size_t repertoire_size = 4;
  double path_of_legend_share = 0.3;
  std::uint64_t seed = 1;

  // Throws ConfigError when probabilities, mixes or ranges are invalid.
  void validate() const;

  static GeneratorConfig from_key_values(const KeyValueConfig& kv);
  static GeneratorConfig load(const std::string& path);
};

enum class StateGroup : std::uint8_t { Cycle, Control, Beatdown, Specialist };
std::string_view to_string(StateGroup g);

// A planted archetype: one functional type and nominal cost per deck slot.
struct ArchetypeTemplate {
  int id = 0;
  std::string name;
  StateGroup group = StateGroup::Control;
  std::array<FuncType, kDeckSize> funcs{};
  std::array<int, kDeckSize> costs{};
};

const std::array<ArchetypeTemplate, kNumStates>& archetype_templates();

// Deterministic catalog: three variants for every (func_type, cost) pair.
CardCatalog generate_cards(const GeneratorConfig& config);

struct PlayerTruth {
  std::string player_id;
  int subtype = 0;
  int skill_tier = 0;
};

struct MatchTruth {
  int archetype = 0;
  double win_prob = 0.5;
};

// Emitted alongside the match log; never consumed by the pipeline.
struct GroundTruth {
  std::vector<PlayerTruth> players;
  std::vector<std::vector<MatchTruth>> matches;  // parallel to histories

  bool operator==(const GroundTruth& o) const;
};

struct Population {
  CardCatalog catalog;
  std::vector<PlayerHistory> histories;  // ordered by player id
  GroundTruth truth;
};

// Throws ConfigError for infeasible configurations.
Population generate_population(const GeneratorConfig& config);

// A fresh deck realizing the given template, for a catalog produced by
// generate_cards. `noise` is the per-slot probability of a +-1 cost shift.
Deck instantiate_template(const ArchetypeTemplate& t, double noise, std::mt19937_64& rng);

void write_ground_truth(std::ostream& out, const GroundTruth& truth);
void save_ground_truth(const std::string& path, const GroundTruth& truth);

}  // namespace deckshift
