#pragma once

// Per-match encoder inputs, K-step windows, next-match targets and the
// seven window-level mastery features.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deckshift/matchlog.hpp"

namespace deckshift {

inline constexpr std::size_t kWindowLength = 10;
inline constexpr std::size_t kNumMastery = 7;
inline constexpr std::size_t kNumCrownBuckets = 7;
inline constexpr int kUnknownState = kNumStates;  // reserved state embedding row

// avg_win_rate, avg_deck_switch_rate, avg_elixir, tilt_signal,
// win_rate_trend, crown_trend, deck_switch_concentration
using MasteryVector = std::array<double, kNumMastery>;

enum class TransitionType : std::uint8_t { NoChange = 0, WithinState = 1, CrossState = 2 };
std::string_view to_string(TransitionType t);

struct StepInput {
  int state = kUnknownState;
  int outcome = 0;     // 1 = win
  int dc = 0;          // deck differs from the previous match
  int crown_diff = 0;  // -3..3
  double log_dt = 0.0; // log(1 + seconds since the previous match)
  double avg_elixir = 0.0;
  Deck deck{};

  int crown_bucket() const { return crown_diff + 3; }
};

struct PlayerSequence {
  std::string player_id;
  int subtype = 2;
  std::vector<StepInput> steps;
};

// `states` holds the archetype state of every match.
PlayerSequence make_sequence(const std::string& player_id, std::span<const MatchRecord> matches,
                             std::span<const int> states, int subtype);

struct WindowTargets {
  int next_dc = 0;
  int next_type = 0;  // TransitionType
  int next_outcome = 0;
  double next_cd = 0.0;  // crown_diff / 3
  int subtype = 0;
};

struct Window {
  std::size_t start = 0;
  std::span<const StepInput> steps;
  MasteryVector mf{};
  bool has_target = false;
  WindowTargets target;
};

// Steps [start, start+k). A target is attached when match start+k exists.
Window make_window(const PlayerSequence& seq, std::size_t start, std::size_t k = kWindowLength);

MasteryVector mastery_features(std::span<const StepInput> steps);

// Least-squares slope of y against 1..n.
double ols_slope(std::span<const double> y);

const std::array<const char*, kNumMastery>& mastery_names();

}  // namespace deckshift
