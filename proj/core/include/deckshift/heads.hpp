#pragma once

// TimingGate (is switching better than staying now?) and the TQP quality
// predictor on top of the frozen encoder, plus predictor-level evaluation.

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "deckshift/metrics.hpp"
#include "deckshift/mlp.hpp"
#include "deckshift/window.hpp"

namespace deckshift {

// Everything a decision needs about one player at one boundary.
struct DecisionContext {
  std::string player_id;
  int subtype = 2;
  int state = 0;  // current (from) state
  Eigen::VectorXd z_cls;
  Eigen::VectorXd z_user;
  MasteryVector mf{};
};

// concat(z_cls, z_user, mf, subtype one-hot(3), state one-hot(13))
Eigen::VectorXd gate_features(const DecisionContext& ctx);
// concat(z_cls, z_user, mf, from one-hot(13), to one-hot(13))
Eigen::VectorXd quality_features(const DecisionContext& ctx, int to_state);

struct TimingGate {
  Mlp net;
  double theta = 0.5;

  double probability(const DecisionContext& ctx) const;
  bool approves(double prob) const { return prob >= theta; }
};

struct QualityModel {
  Mlp net;

  double predict(const DecisionContext& ctx, int to_state) const;
};

// Throws DataError when the training labels hold a single class.
TimingGate train_timing_gate(const Eigen::MatrixXd& x_train, const Eigen::RowVectorXd& labels,
                             const Eigen::MatrixXd& x_val, const Eigen::RowVectorXd& val_labels,
                             MlpTrainConfig config, MlpTrainReport* report = nullptr,
                             std::ostream* log = nullptr);

QualityModel train_quality(const Eigen::MatrixXd& x_train, const Eigen::RowVectorXd& y_train,
                           const Eigen::MatrixXd& x_val, const Eigen::RowVectorXd& y_val,
                           const MlpTrainConfig& config, MlpTrainReport* report = nullptr,
                           std::ostream* log = nullptr);

struct ThetaSearch {
  double max_approval = 0.15;
  std::size_t min_approved_switches = 20;
};

struct ThetaChoice {
  double theta = 0.5;
  std::optional<double> gap;
  double approval_rate = 0.0;
  bool fallback = false;  // no threshold met the constraints
};

// Picks the threshold (approve iff prob >= theta) maximizing SwitchGap over
// the given events, subject to the approval-rate cap. Ties go to the
// higher threshold.
ThetaChoice tune_theta(const std::vector<double>& probs, const std::vector<double>& y,
                       const std::vector<char>& is_switch, const ThetaSearch& search = {});

struct PredictorReport {
  std::size_t events = 0;
  double mae = 0.0;
  double direction_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> gap;  // mean y over pred > 0 minus over pred <= 0
  BootstrapCi gap_ci;
  std::size_t predicted_beneficial = 0;
  std::size_t predicted_harmful = 0;
  std::optional<double> negative_confirmation;  // share of pred <= 0 with y <= 0
};

PredictorReport evaluate_predictor(const std::vector<double>& pred, const std::vector<double>& y,
                                   std::size_t resamples = 10000, std::uint64_t seed = 1);

void write_predictor_table(std::ostream& out, const std::vector<std::pair<std::string, PredictorReport>>& rows);
void write_predictor_flat(std::ostream& out, const std::vector<std::pair<std::string, PredictorReport>>& rows);

void save_heads(const std::string& path, const TimingGate& gate, const QualityModel& quality);
void load_heads(const std::string& path, TimingGate& gate, QualityModel& quality);
// Single-head files for stage-by-stage runs.
void save_gate(const std::string& path, const TimingGate& gate);
TimingGate load_gate(const std::string& path);
void save_quality(const std::string& path, const QualityModel& quality);
QualityModel load_quality(const std::string& path);

}  // namespace deckshift
