#pragma once

// Small numeric building blocks shared by the encoder and the decision
// heads: stable activations, parameter lists, optimizers, clipping.

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

namespace deckshift {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Binary cross-entropy on a logit, optionally weighting the positive class.
inline double bce_with_logit(double logit, double label, double pos_weight = 1.0) {
  return pos_weight * label * softplus(-logit) + (1.0 - label) * softplus(logit);
}

// d bce / d logit
inline double bce_grad(double logit, double label, double pos_weight = 1.0) {
  const double p = sigmoid(logit);
  return pos_weight * label * (p - 1.0) + (1.0 - label) * p;
}

struct ParamRef {
  std::string name;
  Eigen::MatrixXd* value = nullptr;
  Eigen::MatrixXd* grad = nullptr;
};

enum class OptimizerKind { Sgd, Adam };
OptimizerKind parse_optimizer(const std::string& s);
std::string_view to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // 0 disables clipping
};

double global_grad_norm(const std::vector<ParamRef>& params);
// Rescales every gradient so the global norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm);
void zero_grads(const std::vector<ParamRef>& params);

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}
  // Clips, then applies one update.
  void step(const std::vector<ParamRef>& params);
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long long t_ = 0;
};

// Area under the ROC curve via the rank statistic; tied scores count half.
// Returns NaN when one class is absent.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace deckshift
