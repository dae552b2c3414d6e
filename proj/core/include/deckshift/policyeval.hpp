#pragma once

// Offline policy evaluation over logged transition events: SwitchGap,
// Rec_TQP, Prec@1 and switch rate; the six baseline policies; the
// incremental ablation (a)-(d); per-subtype breakdowns and report output.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "deckshift/fusion.hpp"
#include "deckshift/heads.hpp"
#include "deckshift/transition.hpp"

namespace deckshift {

struct PolicyDecision {
  bool approve = false;
  int target = -1;  // recommended destination, -1 when the policy names none
};

struct PolicyMetrics {
  std::size_t evaluated = 0;
  std::size_t approved = 0;
  double switch_rate = 0.0;
  std::optional<double> switch_gap;
  std::size_t approved_switches = 0;  // approved and actually switched
  std::size_t rejected_switches = 0;
  double approved_switch_sum = 0.0;   // sum of y_tq over approved switches
  double rejected_switch_sum = 0.0;
  std::optional<double> rec_tqp;
  std::optional<double> prec_at_1;
};

// One evaluated decision point: the logged event and its model context.
struct EvalItem {
  const TransitionEvent* event = nullptr;
  const DecisionContext* ctx = nullptr;
};

// y_hat for an approved actual switch: the policy's target when it names
// one, else the logged destination.
using QualityFn = std::function<double(const EvalItem&, int to_state)>;

PolicyMetrics evaluate_policy(const std::vector<PolicyDecision>& decisions, const std::vector<EvalItem>& items,
                              const QualityFn& quality);

// Baseline auxiliaries, all built from the training split.
struct BaselineAux {
  std::array<double, kNumStates> state_winrate{};  // population mean per state
  std::vector<std::array<double, kNumStates>> cf_prediction;  // per player
  std::vector<std::vector<std::size_t>> player_transitions;   // per player, from*13+to counts
  double wr_threshold = 0.45;
  double oracle_tau = 0.02;
  std::uint64_t seed = 1;
};

struct CfConfig {
  std::size_t rank = 8;
  std::size_t iterations = 20;
  double reg = 0.1;
  std::uint64_t seed = 1;
};

// Alternating least squares on the observed entries of a players x states
// matrix (NaN marks missing); returns the dense reconstruction.
std::vector<std::array<double, kNumStates>> als_complete(
    const std::vector<std::array<double, kNumStates>>& observed, const CfConfig& config);

BaselineAux build_baseline_aux(const std::vector<PlayerHistory>& histories,
                               const std::vector<std::vector<int>>& states, const SplitAssignment& splits,
                               const std::vector<TransitionEvent>& events, const CfConfig& cf);

enum class Baseline { AlwaysStay, AlwaysSwitch, WrThreshold, PopulationOracle, CollaborativeFiltering, LastK };
std::string_view to_string(Baseline b);
const std::vector<Baseline>& all_baselines();

std::vector<PolicyDecision> run_baseline(Baseline b, const std::vector<EvalItem>& items, const BaselineAux& aux);

struct AblationRows {
  std::vector<PolicyDecision> a, b, c, d;
};

// (a) adoptability-only: approve every forwarded event, target = top
// supported candidate by adoptability; (b) adds PersonaGate; (c) adds the
// TimingGate; (d) is the full recommend().
AblationRows run_ablation(const std::vector<EvalItem>& items, const Recommender& rec);

struct ReportRow {
  std::string name;
  PolicyMetrics metrics;
};

std::string format_pp(const std::optional<double>& v, bool signed_value = true);
void write_policy_table(std::ostream& out, const std::vector<ReportRow>& rows);
void write_policy_flat(std::ostream& out, const std::vector<ReportRow>& rows);

// Items restricted to forwarded subtypes (1 and 2).
std::vector<EvalItem> forwarded_items(const std::vector<EvalItem>& items);

}  // namespace deckshift
