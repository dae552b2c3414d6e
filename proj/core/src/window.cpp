#include "deckshift/window.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace deckshift {

std::string_view to_string(TransitionType t) {
  switch (t) {
    case TransitionType::NoChange: return "no_change";
    case TransitionType::WithinState: return "within_state";
    case TransitionType::CrossState: return "cross_state";
  }
  return "?";
}

const std::array<const char*, kNumMastery>& mastery_names() {
  static const std::array<const char*, kNumMastery> n{
      "avg_win_rate",   "avg_deck_switch_rate", "avg_elixir", "tilt_signal",
      "win_rate_trend", "crown_trend",          "deck_switch_concentration"};
  return n;
}

PlayerSequence make_sequence(const std::string& player_id, std::span<const MatchRecord> m,
                             std::span<const int> states, int subtype) {
  if (states.size() != m.size()) throw DataError("state list does not match the history");
  PlayerSequence seq;
  seq.player_id = player_id;
  seq.subtype = subtype;
  seq.steps.reserve(m.size());
  for (std::size_t t = 0; t < m.size(); ++t) {
    StepInput s;
    s.state = states[t] >= 0 && states[t] < kNumStates ? states[t] : kUnknownState;
    s.outcome = m[t].win() ? 1 : 0;
    s.dc = t > 0 && m[t].deck != m[t - 1].deck;
    s.crown_diff = std::clamp(m[t].crown_diff, -3, 3);
    if (t > 0) {
      const auto gap = std::max<std::int64_t>(0, m[t].timestamp - m[t - 1].timestamp);
      s.log_dt = std::log1p(static_cast<double>(gap));
    }
    s.avg_elixir = m[t].avg_elixir;
    s.deck = m[t].deck;
    seq.steps.push_back(s);
  }
  return seq;
}

double ols_slope(std::span<const double> y) {
  const double n = static_cast<double>(y.size());
  if (y.size() < 2) return 0.0;
  const double xbar = (n + 1.0) / 2.0;
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = static_cast<double>(i + 1) - xbar;
    sxy += dx * (y[i] - ybar);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

MasteryVector mastery_features(std::span<const StepInput> steps) {
  MasteryVector mf{};
  const std::size_t k = steps.size();
  if (k == 0) return mf;
  const double n = static_cast<double>(k);
  std::vector<double> outcomes, crowns;
  double wins = 0.0, elixir = 0.0, switches = 0.0;
  std::map<Deck, double> usage;
  for (std::size_t t = 0; t < k; ++t) {
    wins += steps[t].outcome;
    elixir += steps[t].avg_elixir;
    outcomes.push_back(steps[t].outcome);
    crowns.push_back(steps[t].crown_diff);
    if (t > 0 && steps[t].deck != steps[t - 1].deck) switches += 1.0;
    usage[steps[t].deck] += 1.0;
  }
  double tilt = 0.0;
  for (std::size_t t = k >= 3 ? k - 3 : 0; t < k; ++t) tilt += steps[t].outcome ? 0.0 : 1.0;
  double hhi = 0.0;
  for (const auto& [deck, c] : usage) hhi += (c / n) * (c / n);
  mf[0] = wins / n;
  mf[1] = k > 1 ? switches / (n - 1.0) : 0.0;
  mf[2] = elixir / n;
  mf[3] = tilt;
  mf[4] = ols_slope(outcomes);
  mf[5] = ols_slope(crowns);
  mf[6] = hhi;
  return mf;
}

Window make_window(const PlayerSequence& seq, std::size_t start, std::size_t k) {
  if (k == 0 || start + k > seq.steps.size()) throw DataError("window runs past the history");
  Window w;
  w.start = start;
  w.steps = std::span<const StepInput>(seq.steps).subspan(start, k);
  w.mf = mastery_features(w.steps);
  const std::size_t next = start + k;
  if (next < seq.steps.size()) {
    const auto& cur = seq.steps[next - 1];
    const auto& nx = seq.steps[next];
    w.has_target = true;
    w.target.next_dc = nx.deck != cur.deck;
    w.target.next_type = !w.target.next_dc ? 0 : (nx.state == cur.state ? 1 : 2);
    w.target.next_outcome = nx.outcome;
    w.target.next_cd = nx.crown_diff / 3.0;
    w.target.subtype = seq.subtype;
  }
  return w;
}

}  // namespace deckshift
