#pragma once

// Transition/stay decision events at window boundaries, the raw win-rate
// change y_tq, matched stay baselines, net effects and timing labels.

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "deckshift/matchlog.hpp"

namespace deckshift {

inline constexpr int kNumWrBuckets = 5;

// [0,.3) [.3,.45) [.45,.55) [.55,.7) [.7,1]
int wr_bucket(double wr);

enum class Action : std::uint8_t { Stay = 0, Switch = 1 };
std::string_view to_string(Action a);

struct TransitionConfig {
  std::size_t k = 10;
  std::size_t horizon = 10;
  std::size_t min_next = 5;
};

struct TransitionEvent {
  std::string player_id;
  std::size_t player = 0;    // index into the histories
  std::size_t start = 0;     // first match of the input window
  std::size_t boundary = 0;  // first match after the window
  Split split = Split::Train;
  Action action = Action::Stay;
  int from_state = 0;
  int to_state = 0;
  int subtype = 0;
  std::size_t wins_current = 0;
  std::size_t wins_next = 0;
  std::size_t next_count = 0;
  double wr_current = 0.0;
  double wr_next = 0.0;
  double y_tq = 0.0;
  int bucket = 0;
  double stay_baseline = 0.0;
  double delta_net = 0.0;
  int baseline_level = -1;  // 0 cell, 1 (state, subtype), 2 global; -1 unset

  bool is_switch() const { return action == Action::Switch; }
  bool cross_state() const { return is_switch() && from_state != to_state; }
};

struct ExtractionReport {
  std::array<std::size_t, 3> events{};
  std::array<std::size_t, 3> switches{};
  std::array<std::size_t, 3> dropped_short_tail{};
};

// `states[p][t]` is the archetype state of match t of player p and
// `subtypes[p]` the player's subtype label. Events are emitted for every
// split, ordered by player then boundary.
std::vector<TransitionEvent> extract_events(const std::vector<PlayerHistory>& histories,
                                            const std::vector<std::vector<int>>& states,
                                            const std::vector<int>& subtypes,
                                            const SplitAssignment& splits,
                                            const TransitionConfig& config = {},
                                            ExtractionReport* report = nullptr);

// One event for the window [start, start+k) of a single history whose
// post-boundary matches are limited to [boundary, seg_end). Returns nothing
// when fewer than min_next matches follow.
std::optional<TransitionEvent> make_event(const PlayerHistory& h, const std::vector<int>& states,
                                          std::size_t start, std::size_t seg_end,
                                          const TransitionConfig& config);

class StayBaselineTable {
 public:
  static constexpr std::size_t kMinSupport = 5;

  struct Cell {
    double sum = 0.0;
    std::size_t support = 0;
    double mean() const { return sum / static_cast<double>(support); }
  };

  // Stay events of the training split only. Throws DataError when there are none.
  static StayBaselineTable build(const std::vector<TransitionEvent>& events);

  double value(int state, int subtype, int bucket) const;
  // 0 cell, 1 (state, subtype) fallback, 2 global fallback.
  int level(int state, int subtype, int bucket) const;

  const Cell& cell(int state, int subtype, int bucket) const;
  const Cell& state_subtype(int state, int subtype) const;
  const Cell& global() const { return global_; }

  void write(std::ostream& out) const;
  static StayBaselineTable read(std::istream& in);
  bool operator==(const StayBaselineTable&) const;

 private:
  std::vector<Cell> cells_ = std::vector<Cell>(kNumStates * kNumSubtypes * kNumWrBuckets);
  std::vector<Cell> su_ = std::vector<Cell>(kNumStates * kNumSubtypes);
  Cell global_;
};

double net_effect(const TransitionEvent& e, const StayBaselineTable& table);
// Fills stay_baseline, delta_net and baseline_level for every event.
void attach_net_effects(std::vector<TransitionEvent>& events, const StayBaselineTable& table);

enum class LabelSource : std::uint8_t { GoodSwitch, BadSwitch, StayNegative };
std::string_view to_string(LabelSource s);

struct TimingLabel {
  std::size_t event = 0;  // index into the event list
  int label = 0;
  LabelSource source = LabelSource::StayNegative;
};

int timing_label(const TransitionEvent& e);

struct TimingLabelSet {
  std::vector<TimingLabel> train;  // every switch plus undersampled stays
  std::vector<TimingLabel> val;    // full distribution
  std::vector<TimingLabel> test;   // full distribution
  bool stay_shortfall = false;     // fewer stays than switches in training
};

TimingLabelSet build_timing_labels(const std::vector<TransitionEvent>& events, std::uint64_t seed);

void write_events(std::ostream& out, const std::vector<TransitionEvent>& events);
std::vector<TransitionEvent> read_events(std::istream& in);
void save_events(const std::string& path, const std::vector<TransitionEvent>& events);
std::vector<TransitionEvent> load_events(const std::string& path);

void write_labels(std::ostream& out, const TimingLabelSet& labels);

}  // namespace deckshift
