#pragma once

// End-to-end orchestration: ingest -> states -> subtypes -> encoder ->
// events -> heads -> fusion -> evaluation, with artifact persistence in a
// work directory and the context builder shared with the live service.

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deckshift/archetype.hpp"
#include "deckshift/encoder.hpp"
#include "deckshift/fusion.hpp"
#include "deckshift/heads.hpp"
#include "deckshift/matchlog.hpp"
#include "deckshift/policyeval.hpp"
#include "deckshift/subtype.hpp"
#include "deckshift/synthgen.hpp"
#include "deckshift/transition.hpp"

namespace deckshift {

struct PipelineConfig {
  std::uint64_t seed = 1;
  GeneratorConfig generator;
  FilterConfig filter;
  SplitRatios splits;
  ArchetypeFitOptions archetype;
  std::size_t archetype_max_decks = 5000;  // distinct training decks used for fitting
  SubtypeFitOptions subtype;
  std::size_t min_history_for_subtype = 20;
  EncoderConfig encoder;
  TransitionConfig transition;
  MlpTrainConfig gate;
  MlpTrainConfig quality;
  ThetaSearch theta;
  FusionConfig fusion;
  CfConfig cf;
  double wr_threshold = 0.45;
  double oracle_tau = 0.02;
  std::size_t bootstrap_resamples = 10000;
  // Input logs; the generator is used when these are empty.
  std::string matches_path;
  std::string catalog_path;

  PipelineConfig();
  // Applies flat key-value overrides; generator keys use the "synth." prefix.
  static PipelineConfig from_key_values(const KeyValueConfig& kv);
  static PipelineConfig load(const std::string& path);
  // Re-derives every stage seed from `seed`.
  void derive_seeds();
};

// Everything the live advisor needs. Not movable once a Recommender has
// been taken from it.
struct ModelBundle {
  CardCatalog catalog;
  ArchetypeModel archetype;
  SubtypeModel subtype;
  Encoder encoder;
  TimingGate gate;
  QualityModel quality;
  TransitionCounts counts;
  FusionConfig fusion;
  std::size_t min_history_for_subtype = 20;

  Recommender recommender() const;
  void save(const std::string& dir) const;
  static std::unique_ptr<ModelBundle> load(const std::string& dir);
};

inline constexpr int kProvisionalSubtype = static_cast<int>(Subtype::Flex);

// Subtype from the behavior profile of the whole history once it has at
// least `min_history` matches, else the provisional Flex label.
int history_subtype(const ModelBundle& models, std::span<const MatchRecord> matches, bool* provisional = nullptr);

// Decision context for the boundary after the last match: the window is the
// last K matches and z_user folds every earlier window.
DecisionContext build_context(const ModelBundle& models, const std::string& player_id,
                              std::span<const MatchRecord> matches, int subtype);

struct PipelineReports {
  std::string summary;
  std::string predictors;
  std::string predictors_flat;
  std::string policies;
  std::string policies_flat;
  std::string subtypes;
};

struct PipelineState {
  PipelineConfig config;
  std::unique_ptr<ModelBundle> models = std::make_unique<ModelBundle>();
  std::optional<GroundTruth> truth;      // set when the data was generated
  std::vector<PlayerHistory> histories;  // filtered
  IngestStats ingest;
  FilterReport filter;
  SplitAssignment splits;
  std::vector<std::vector<int>> states;
  std::vector<BehaviorProfile> profiles;
  std::vector<int> subtypes;
  std::vector<PlayerSequence> sequences;
  PretrainReport pretrain;
  std::vector<TransitionEvent> events;
  ExtractionReport extraction;
  std::optional<StayBaselineTable> baseline;
  TimingLabelSet labels;
  std::vector<std::optional<DecisionContext>> contexts;  // parallel to events
  MlpTrainReport gate_report;
  MlpTrainReport quality_report;
  ThetaChoice theta;
  AlphaChoice alpha;
  PredictorReport tqp_report;
  PredictorReport zero_report;
  std::vector<ReportRow> policy_rows;
  std::vector<ReportRow> subtype_rows;
};

// Stages, each consuming the fields filled by the previous ones.
void stage_data(PipelineState& st, std::vector<PlayerHistory> raw);
void stage_archetype(PipelineState& st);
void stage_assign_states(PipelineState& st);
// Profiles over each player's training segment; fits the model when `fit`
// is set, otherwise labels with the loaded one.
void stage_subtype(PipelineState& st, bool fit = true);
void stage_sequences(PipelineState& st);
void stage_encoder(PipelineState& st, std::ostream* log = nullptr);
void stage_events(PipelineState& st);
void stage_contexts(PipelineState& st);
void stage_gate(PipelineState& st, std::ostream* log = nullptr);
void stage_quality(PipelineState& st, std::ostream* log = nullptr);
void stage_heads(PipelineState& st, std::ostream* log = nullptr);  // gate, then quality
void stage_fusion(PipelineState& st);
void stage_eval(PipelineState& st);
PipelineReports render_reports(const PipelineState& st);

// Loads or generates the data and runs every stage.
void run_pipeline(PipelineState& st, std::ostream* log = nullptr);

void save_reports(const std::string& dir, const PipelineReports& reports);
void save_artifacts(const std::string& dir, const PipelineState& st);

// File names inside a work / model directory.
namespace files {
inline constexpr const char* kCatalog = "cards.jsonl";
inline constexpr const char* kMatches = "matches.jsonl";
inline constexpr const char* kTruth = "truth.jsonl";
inline constexpr const char* kArchetype = "archetype.model";
inline constexpr const char* kSubtype = "subtype.model";
inline constexpr const char* kSubtypeTable = "subtypes.table";
inline constexpr const char* kEncoder = "encoder.tensors";
inline constexpr const char* kHeads = "heads.tensors";
inline constexpr const char* kGate = "gate.tensors";
inline constexpr const char* kQuality = "quality.tensors";
inline constexpr const char* kCounts = "transition_counts.table";
inline constexpr const char* kFusion = "fusion.conf";
inline constexpr const char* kEvents = "events.table";
inline constexpr const char* kBaseline = "baseline.table";
inline constexpr const char* kLabels = "timing_labels.table";
inline constexpr const char* kFilterReport = "filter_report.txt";
inline constexpr const char* kManifest = "models.manifest";
}  // namespace files

}  // namespace deckshift
