#pragma once

// Bidirectional GRU window encoder with mastery injection, the z_user EMA,
// and five-head multi-task pre-training.

#include <Eigen/Core>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "deckshift/matchlog.hpp"
#include "deckshift/nn.hpp"
#include "deckshift/window.hpp"

namespace deckshift {

class KeyValueConfig;
struct TensorFile;

enum Head : std::size_t { kHeadDc = 0, kHeadDv = 1, kHeadWin = 2, kHeadSub = 3, kHeadCd = 4 };
inline constexpr std::size_t kNumHeads = 5;
inline constexpr std::size_t kNumHeadOutputs = 9;  // dc 1, dv 3, win 1, sub 3, cd 1
inline constexpr double kUserDecay = 0.9;
inline constexpr double kUserMix = 0.1;

struct EncoderConfig {
  std::size_t k = kWindowLength;
  std::size_t vocab = 0;  // catalog size; index `vocab` is the unknown card
  std::size_t card_dim = 32;
  std::size_t cat_dim = 8;
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t d_z = 128;
  std::array<double, kNumHeads> head_weights{1.5, 1.5, 1.0, 1.0, 0.5};
  std::size_t batch = 256;
  std::size_t epochs = 20;
  std::size_t patience = 3;
  std::size_t max_train_windows = 0;  // 0 keeps every window
  std::size_t max_val_windows = 0;
  OptimizerConfig optim;
  std::uint64_t seed = 1;

  std::size_t input_dim() const { return 5 * cat_dim + card_dim; }
  void validate() const;
  // Keys prefixed "encoder." in a flat config; missing keys keep defaults.
  void apply(const KeyValueConfig& kv);
};

struct GruParams {
  Eigen::MatrixXd w;  // 3H x in, gate rows ordered reset, update, candidate
  Eigen::MatrixXd u;  // 3H x H
  Eigen::MatrixXd b;  // 3H x 1
};

struct EncoderParams {
  EncoderConfig config;
  // Fixed standardization of [log_dt, avg_elixir], taken from training data.
  Eigen::MatrixXd cont_mean = Eigen::MatrixXd::Zero(2, 1);
  Eigen::MatrixXd cont_std = Eigen::MatrixXd::Ones(2, 1);

  Eigen::MatrixXd emb_state;    // cat x (13 + 1)
  Eigen::MatrixXd emb_outcome;  // cat x 2
  Eigen::MatrixXd emb_dc;       // cat x 2
  Eigen::MatrixXd emb_crown;    // cat x 7
  Eigen::MatrixXd emb_card;     // card x (vocab + 1)
  Eigen::MatrixXd cont_gain;    // 2 x 1
  Eigen::MatrixXd cont_bias;    // 2 x 1
  Eigen::MatrixXd cont_proj;    // cat x 2
  Eigen::MatrixXd cont_proj_b;  // cat x 1
  std::vector<std::array<GruParams, 2>> gru;  // [layer][forward, backward]
  Eigen::MatrixXd w_out;      // d_z x 2H, no bias
  Eigen::MatrixXd mastery_w;  // d_z x 7
  Eigen::MatrixXd mastery_b;  // d_z x 1, zero at init
  Eigen::MatrixXd head_w;     // 9 x d_z
  Eigen::MatrixXd head_b;     // 9 x 1

  // Same shapes, all zero.
  EncoderParams zeros_like() const;
  // Visits every learnable tensor in a fixed order.
  void for_each(const std::function<void(const std::string&, Eigen::MatrixXd&)>& f);
  std::size_t num_parameters();
};

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);

struct SessionEmbedding {
  Eigen::VectorXd z_raw;
  Eigen::VectorXd z_cls;
  Eigen::VectorXd z_user;       // the prior z_user this window was encoded with
  Eigen::VectorXd z_user_next;  // EMA after absorbing this window's z_cls
};

struct HeadMetrics {
  double auc_dc = 0.0;
  double acc_dv = 0.0;
  double auc_win = 0.0;
  double acc_sub = 0.0;
  double mse_cd = 0.0;
  std::size_t windows = 0;
};

struct PretrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::size_t train_windows = 0;
  HeadMetrics val_metrics;
};

class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(EncoderParams params);

  const EncoderParams& params() const { return params_; }
  EncoderParams& mutable_params() { return params_; }
  const EncoderConfig& config() const { return params_.config; }
  std::size_t d_z() const { return params_.config.d_z; }

  // z_raw from the recurrent stack alone.
  Eigen::VectorXd encode_raw(const Window& w) const;
  Eigen::VectorXd mastery_projection(const MasteryVector& mf) const;
  SessionEmbedding encode(const Window& w, const Eigen::VectorXd& prior_user) const;
  // Raw head outputs (logits / regression value) for a z_cls vector.
  Eigen::VectorXd head_outputs(const Eigen::VectorXd& z_cls) const;

  // Mean weighted multi-task loss over the batch; accumulates gradients
  // into `grad` when it is non-null. Windows must carry targets.
  double loss(const std::vector<Window>& batch, EncoderParams* grad = nullptr) const;
  double loss(const std::vector<Window>& batch, const std::array<double, kNumHeads>& weights,
              EncoderParams* grad) const;

  // Head outputs for a batch of windows, one column per window.
  Eigen::MatrixXd batch_head_outputs(const std::vector<Window>& batch) const;

 private:
  EncoderParams params_;
};

Eigen::VectorXd ema_update(const Eigen::VectorXd& z_user, const Eigen::VectorXd& z_cls);

// z_cls of every window start 0..n-k and the z_user each start is encoded
// with (EMA over the z_cls of all earlier starts, zero for the first).
struct SequenceEmbeddings {
  std::vector<Eigen::VectorXd> z_cls;
  std::vector<Eigen::VectorXd> z_user;
};
SequenceEmbeddings encode_sequence(const Encoder& enc, const PlayerSequence& seq,
                                   std::size_t max_start = static_cast<std::size_t>(-1));

// Standardization stats of the continuous step inputs over the given windows.
void fit_continuous_stats(EncoderParams& params, const std::vector<PlayerSequence>& seqs,
                          const std::vector<WindowRef>& windows);

PretrainReport pretrain(Encoder& enc, const std::vector<PlayerSequence>& seqs,
                        const std::vector<WindowRef>& train, const std::vector<WindowRef>& val,
                        std::ostream* log = nullptr);

HeadMetrics evaluate_heads(const Encoder& enc, const std::vector<PlayerSequence>& seqs,
                           const std::vector<WindowRef>& windows);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};
// Central finite differences over every parameter entry.
GradCheckResult gradient_check(const Encoder& enc, const std::vector<Window>& batch,
                               double eps = 1e-4);

TensorFile encoder_to_tensors(const Encoder& enc);
Encoder encoder_from_tensors(const TensorFile& file);
void save_encoder(const std::string& path, const Encoder& enc);
Encoder load_encoder(const std::string& path);

}  // namespace deckshift
