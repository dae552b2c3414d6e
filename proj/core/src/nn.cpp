#include "deckshift/nn.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "deckshift/common.hpp"

namespace deckshift {

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (sgd|adam)");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

double global_grad_norm(const std::vector<ParamRef>& params) {
  double s = 0.0;
  for (const auto& p : params) s += p.grad->squaredNorm();
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) *p.grad *= scale;
  }
  return norm;
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) p.grad->setZero();
}

void Optimizer::step(const std::vector<ParamRef>& params) {
  clip_grad_norm(params, config_.clip_norm);
  if (config_.kind == OptimizerKind::Sgd) {
    for (const auto& p : params) *p.value -= config_.lr * *p.grad;
    return;
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = *params[i].grad;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    *params[i].value -= (config_.lr * (m_[i] / c1).array() /
                         ((v_[i] / c2).array().sqrt() + config_.eps)).matrix();
  }
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos = 0.0, rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]]) rank_sum += mid, pos += 1.0;
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

}  // namespace deckshift
