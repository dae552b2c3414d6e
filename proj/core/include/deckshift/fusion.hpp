#pragma once

// ScoreFusion: candidate construction from training transition support,
// adoptability scoring, TQP filtering, fused ranking and the final
// Stay / Switch(target) decision of the Who -> When -> What pipeline.

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deckshift/heads.hpp"
#include "deckshift/transition.hpp"

namespace deckshift {

// Cross-state training switches counted per (subtype, from, to).
class TransitionCounts {
 public:
  static TransitionCounts build(const std::vector<TransitionEvent>& events);

  std::size_t count(int subtype, int from, int to) const;
  std::size_t total(int subtype, int from) const;
  void add(int subtype, int from, int to, std::size_t n = 1);

  void write(std::ostream& out) const;
  static TransitionCounts read(std::istream& in);
  bool operator==(const TransitionCounts&) const = default;

 private:
  std::vector<std::size_t> counts_ = std::vector<std::size_t>(kNumSubtypes * kNumStates * kNumStates);
};

class AdoptabilityScorer {
 public:
  virtual ~AdoptabilityScorer() = default;
  virtual double score(const DecisionContext& ctx, int to_state) const = 0;
  virtual std::string name() const = 0;
};

// (count(u, s->s') + 1) / (count(u, s->.) + 13)
class FrequencyScorer final : public AdoptabilityScorer {
 public:
  explicit FrequencyScorer(const TransitionCounts& counts) : counts_(&counts) {}
  double score(const DecisionContext& ctx, int to_state) const override;
  std::string name() const override { return "laplace-frequency"; }

 private:
  const TransitionCounts* counts_;
};

struct FusionConfig {
  double alpha = 0.5;
  double scale = 0.1;
  std::size_t min_support = 3;
  std::vector<double> grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  void validate() const;
  void write(std::ostream& out) const;
  static FusionConfig read(std::istream& in);
};

struct Candidate {
  int to_state = 0;
  std::size_t support = 0;
  double adoptability = 0.0;       // raw scorer output
  double adoptability_norm = 0.0;  // min-max within the query
  double quality = 0.0;            // TQP y_hat
  double fused = 0.0;
};

// Stage 1: s' != s with count(u, s->s') >= min_support. Stage 2: TQP > 0.
// Returned in state order, unscored.
std::vector<Candidate> build_candidates(const DecisionContext& ctx, const TransitionCounts& counts,
                                        const AdoptabilityScorer& scorer, const QualityModel& quality,
                                        std::size_t min_support = 3);

// Normalizes adoptability, fuses, and sorts by fused score (ties: larger
// quality, then lower state id).
void fuse_scores(std::vector<Candidate>& candidates, double alpha, double scale = 0.1);

enum class Provenance : std::uint8_t { PersonaGate, TimingGate, NoCandidates, Fusion };
std::string_view to_string(Provenance p);
std::string explain(Provenance p);

struct Recommendation {
  bool switch_ = false;
  int target_state = -1;  // valid when switch_
  int from_state = 0;
  int subtype = 0;
  std::optional<double> gate_prob;  // absent when PersonaGate held
  std::vector<Candidate> candidates;
  Provenance provenance = Provenance::PersonaGate;

  bool operator==(const Recommendation& o) const;
};

class Recommender {
 public:
  Recommender(const TimingGate& gate, const QualityModel& quality, const TransitionCounts& counts,
              std::shared_ptr<const AdoptabilityScorer> scorer, FusionConfig config);

  Recommendation recommend(const DecisionContext& ctx) const;
  // Same pipeline with a different fusion weight.
  Recommendation recommend(const DecisionContext& ctx, double alpha) const;

  const FusionConfig& config() const { return config_; }
  void set_alpha(double alpha);
  const TimingGate& gate() const { return *gate_; }
  const QualityModel& quality() const { return *quality_; }
  const TransitionCounts& counts() const { return *counts_; }
  const AdoptabilityScorer& scorer() const { return *scorer_; }

 private:
  const TimingGate* gate_;
  const QualityModel* quality_;
  const TransitionCounts* counts_;
  std::shared_ptr<const AdoptabilityScorer> scorer_;
  FusionConfig config_;
};

// One validation decision point: its context, the realized transition and
// the observed y_tq.
struct AlphaSample {
  DecisionContext ctx;
  bool is_switch = false;
  int to_state = 0;
  double y = 0.0;
};

struct AlphaChoice {
  double alpha = 0.5;
  std::vector<std::optional<double>> gaps;  // per grid value
  bool fallback = false;
};

// For each grid value, approved = the pipeline recommends exactly the
// realized target; SwitchGap is taken over the actual switchers. The best
// defined gap wins, ties go to the smaller alpha, and 0.5 is the fallback.
AlphaChoice tune_alpha(const Recommender& rec, const std::vector<AlphaSample>& samples,
                       const std::vector<double>& grid);

}  // namespace deckshift
