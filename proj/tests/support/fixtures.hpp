#pragma once

// Shared builders for the test suites.

#include <random>
#include <string>
#include <vector>

#include "deckshift/encoder.hpp"
#include "deckshift/heads.hpp"
#include "deckshift/matchlog.hpp"
#include "deckshift/pipeline.hpp"
#include "deckshift/synthgen.hpp"
#include "deckshift/transition.hpp"
#include "deckshift/window.hpp"

namespace deckshift::fixture {

inline Population small_population(std::size_t players, std::uint64_t seed, std::size_t min_matches = 60,
                                   std::size_t max_matches = 80) {
  GeneratorConfig g;
  g.n_players = players;
  g.min_matches = min_matches;
  g.max_matches = max_matches;
  g.seed = seed;
  return generate_population(g);
}

// Planted archetype per match, straight from the ground truth.
inline std::vector<std::vector<int>> true_states(const Population& pop) {
  std::vector<std::vector<int>> out;
  for (const auto& row : pop.truth.matches) {
    out.emplace_back();
    for (const auto& m : row) out.back().push_back(m.archetype);
  }
  return out;
}

inline std::vector<int> true_subtypes(const Population& pop) {
  std::vector<int> out;
  for (const auto& p : pop.truth.players) out.push_back(p.subtype);
  return out;
}

inline EncoderConfig tiny_encoder_config(std::size_t vocab) {
  EncoderConfig c;
  c.vocab = vocab;
  c.card_dim = 3;
  c.cat_dim = 2;
  c.hidden = 4;
  c.layers = 2;
  c.d_z = 4;
  return c;
}

inline std::vector<PlayerSequence> true_sequences(const Population& pop) {
  const auto states = true_states(pop);
  std::vector<PlayerSequence> out;
  for (std::size_t p = 0; p < pop.histories.size(); ++p)
    out.push_back(make_sequence(pop.histories[p].player_id, pop.histories[p].matches, states[p],
                                pop.truth.players[p].subtype));
  return out;
}

// Events extracted over planted states and subtypes.
struct EventFixture {
  Population pop;
  SplitAssignment splits;
  std::vector<std::vector<int>> states;
  std::vector<TransitionEvent> events;
};

inline EventFixture event_fixture(std::size_t players = 60, std::uint64_t seed = 11) {
  EventFixture f;
  f.pop = small_population(players, seed);
  f.splits = make_splits(f.pop.histories);
  f.states = true_states(f.pop);
  f.events = extract_events(f.pop.histories, f.states, true_subtypes(f.pop), f.splits);
  return f;
}

// Small end-to-end configuration for pipeline tests.
inline PipelineConfig tiny_pipeline_config(std::uint64_t seed = 3) {
  PipelineConfig c;
  c.seed = seed;
  c.derive_seeds();
  c.generator.n_players = 500;
  c.generator.min_matches = 120;
  c.generator.max_matches = 140;
  c.archetype.restarts = 4;
  c.subtype.restarts = 4;
  c.encoder.card_dim = 4;
  c.encoder.cat_dim = 3;
  c.encoder.hidden = 8;
  c.encoder.layers = 1;
  c.encoder.d_z = 8;
  c.encoder.epochs = 2;
  c.encoder.max_train_windows = 4000;
  c.encoder.max_val_windows = 1000;
  c.encoder.optim.kind = OptimizerKind::Adam;
  c.encoder.optim.lr = 3e-3;
  for (auto* h : {&c.gate, &c.quality}) {
    h->hidden = 16;
    h->epochs = 5;
    h->optim.kind = OptimizerKind::Adam;
    h->optim.lr = 1e-3;
  }
  c.bootstrap_resamples = 200;
  return c;
}

// Perceptron whose output is `value` for every input.
inline Mlp constant_mlp(std::size_t inputs, double value) {
  Mlp net(inputs, kNumStates, 1);
  auto grad = net.zeros_like();
  for (auto& r : net.param_refs(grad)) r.value->setZero();
  net.param_refs(grad)[5].value->fill(value);
  return net;
}

// Perceptron reading the one-hot block at `offset`: output values[i] when
// input offset + i is hot.
inline Mlp lookup_mlp(std::size_t inputs, std::size_t offset, const std::vector<double>& values) {
  Mlp net(inputs, values.size(), 1);
  auto grad = net.zeros_like();
  auto refs = net.param_refs(grad);
  for (auto& r : refs) r.value->setZero();
  for (std::size_t i = 0; i < values.size(); ++i) {
    (*refs[0].value)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(offset + i)) = 1.0;
    (*refs[2].value)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    (*refs[4].value)(0, static_cast<Eigen::Index>(i)) = values[i];
  }
  return net;
}

inline DecisionContext context(int subtype, int state, Eigen::Index d = 2) {
  DecisionContext c;
  c.player_id = "ctx";
  c.subtype = subtype;
  c.state = state;
  c.z_cls = Eigen::VectorXd::Zero(d);
  c.z_user = Eigen::VectorXd::Zero(d);
  return c;
}

inline std::size_t quality_inputs(Eigen::Index d = 2) { return static_cast<std::size_t>(2 * d) + kNumMastery + 2 * kNumStates; }
inline std::size_t gate_inputs(Eigen::Index d = 2) {
  return static_cast<std::size_t>(2 * d) + kNumMastery + kNumSubtypes + kNumStates;
}
// Offset of the to_state one-hot inside quality_features.
inline std::size_t to_offset(Eigen::Index d = 2) { return static_cast<std::size_t>(2 * d) + kNumMastery + kNumStates; }

inline QualityModel lookup_quality(const std::vector<double>& values, Eigen::Index d = 2) {
  return {lookup_mlp(quality_inputs(d), to_offset(d), values)};
}

inline TimingGate constant_gate(double logit, double theta = 0.5, Eigen::Index d = 2) {
  return {constant_mlp(gate_inputs(d), logit), theta};
}

inline std::string source_path(const std::string& rel) { return std::string(DECKSHIFT_SOURCE_DIR) + "/" + rel; }

}  // namespace deckshift::fixture
