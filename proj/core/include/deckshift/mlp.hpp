#pragma once

// Three-layer ReLU perceptron with a fixed input standardization, trained
// with mini-batches under either weighted binary cross-entropy or squared
// error. Samples are columns.

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "deckshift/nn.hpp"

namespace deckshift {

struct TensorFile;

enum class MlpLoss { WeightedBce, SquaredError };

struct MlpTrainConfig {
  std::size_t hidden = 256;
  std::size_t batch = 256;
  std::size_t epochs = 50;
  std::size_t patience = 3;
  double pos_weight = 1.0;  // WeightedBce only
  OptimizerConfig optim;
  std::uint64_t seed = 1;
};

struct MlpTrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed);

  std::size_t inputs() const { return static_cast<std::size_t>(w_[0].cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(w_[0].rows()); }

  // Raw output (logit or regression value), one per column.
  Eigen::RowVectorXd forward(const Eigen::MatrixXd& x) const;
  double forward_one(const Eigen::VectorXd& x) const;

  // Mean loss over the columns; accumulates gradients when requested.
  double loss(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y, MlpLoss kind,
              double pos_weight, Mlp* grad = nullptr) const;

  void set_standardization(const Eigen::MatrixXd& x);
  std::vector<ParamRef> param_refs(Mlp& grad);
  Mlp zeros_like() const;

  void to_tensors(TensorFile& f, const std::string& prefix) const;
  static Mlp from_tensors(const TensorFile& f, const std::string& prefix);

  bool operator==(const Mlp& o) const;

 private:
  Eigen::MatrixXd in_mean_, in_std_;  // inputs x 1, fixed
  Eigen::MatrixXd w_[3], b_[3];
};

// Fits input standardization on the training columns, then trains with
// early stopping on the validation loss and restores the best epoch.
MlpTrainReport train_mlp(Mlp& net, const Eigen::MatrixXd& x_train, const Eigen::RowVectorXd& y_train,
                         const Eigen::MatrixXd& x_val, const Eigen::RowVectorXd& y_val, MlpLoss kind,
                         const MlpTrainConfig& config, std::ostream* log = nullptr,
                         const std::string& tag = "mlp");

}  // namespace deckshift
