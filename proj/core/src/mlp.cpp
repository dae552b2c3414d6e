#include "deckshift/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "deckshift/common.hpp"
#include "deckshift/flatfile.hpp"

namespace deckshift {
namespace {

using Eigen::MatrixXd;

MatrixXd he_uniform(Eigen::Index out, Eigen::Index in, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> d(-a, a);
  MatrixXd m(out, in);
  for (Eigen::Index j = 0; j < in; ++j)
    for (Eigen::Index i = 0; i < out; ++i) m(i, j) = d(rng);
  return m;
}

}  // namespace

Mlp::Mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed) {
  if (inputs == 0 || hidden == 0) throw ConfigError("perceptron dimensions must be positive");
  std::mt19937_64 rng(seed);
  const auto in = static_cast<Eigen::Index>(inputs), h = static_cast<Eigen::Index>(hidden);
  w_[0] = he_uniform(h, in, rng);
  w_[1] = he_uniform(h, h, rng);
  w_[2] = he_uniform(1, h, rng) * 0.1;
  b_[0] = MatrixXd::Zero(h, 1);
  b_[1] = MatrixXd::Zero(h, 1);
  b_[2] = MatrixXd::Zero(1, 1);
  in_mean_ = MatrixXd::Zero(in, 1);
  in_std_ = MatrixXd::Ones(in, 1);
}

void Mlp::set_standardization(const MatrixXd& x) {
  const double n = static_cast<double>(x.cols());
  in_mean_ = x.rowwise().mean();
  in_std_.resize(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double var = n > 0 ? (x.row(i).array() - in_mean_(i, 0)).square().sum() / n : 0.0;
    in_std_(i, 0) = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

Eigen::RowVectorXd Mlp::forward(const MatrixXd& x) const {
  if (static_cast<std::size_t>(x.rows()) != inputs()) throw DataError("perceptron input has the wrong width");
  MatrixXd a0 = (x.colwise() - in_mean_.col(0)).array().colwise() / in_std_.col(0).array();
  MatrixXd h1 = w_[0] * a0;
  h1.colwise() += b_[0].col(0);
  h1 = h1.cwiseMax(0.0);
  MatrixXd h2 = w_[1] * h1;
  h2.colwise() += b_[1].col(0);
  h2 = h2.cwiseMax(0.0);
  Eigen::RowVectorXd out = w_[2] * h2;
  out.array() += b_[2](0, 0);
  return out;
}

double Mlp::forward_one(const Eigen::VectorXd& x) const {
  MatrixXd m = x;
  return forward(m)(0);
}

double Mlp::loss(const MatrixXd& x, const Eigen::RowVectorXd& y, MlpLoss kind, double pos_weight,
                 Mlp* grad) const {
  const auto n = x.cols();
  if (n == 0 || y.size() != n) throw DataError("perceptron batch is empty or mismatched");
  MatrixXd a0 = (x.colwise() - in_mean_.col(0)).array().colwise() / in_std_.col(0).array();
  MatrixXd z1 = w_[0] * a0;
  z1.colwise() += b_[0].col(0);
  const MatrixXd h1 = z1.cwiseMax(0.0);
  MatrixXd z2 = w_[1] * h1;
  z2.colwise() += b_[1].col(0);
  const MatrixXd h2 = z2.cwiseMax(0.0);
  Eigen::RowVectorXd out = w_[2] * h2;
  out.array() += b_[2](0, 0);

  const double inv = 1.0 / static_cast<double>(n);
  double total = 0.0;
  Eigen::RowVectorXd dout(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (kind == MlpLoss::WeightedBce) {
      total += bce_with_logit(out(j), y(j), pos_weight);
      dout(j) = bce_grad(out(j), y(j), pos_weight) * inv;
    } else {
      const double e = out(j) - y(j);
      total += e * e;
      dout(j) = 2.0 * e * inv;
    }
  }
  if (grad) {
    grad->w_[2].noalias() += dout * h2.transpose();
    grad->b_[2](0, 0) += dout.sum();
    MatrixXd d2 = w_[2].transpose() * dout;
    d2 = d2.cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
    grad->w_[1].noalias() += d2 * h1.transpose();
    grad->b_[1] += d2.rowwise().sum();
    MatrixXd d1 = w_[1].transpose() * d2;
    d1 = d1.cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
    grad->w_[0].noalias() += d1 * a0.transpose();
    grad->b_[0] += d1.rowwise().sum();
  }
  return total * inv;
}

std::vector<ParamRef> Mlp::param_refs(Mlp& grad) {
  std::vector<ParamRef> refs;
  for (int i = 0; i < 3; ++i) {
    refs.push_back({"w" + std::to_string(i), &w_[i], &grad.w_[i]});
    refs.push_back({"b" + std::to_string(i), &b_[i], &grad.b_[i]});
  }
  return refs;
}

Mlp Mlp::zeros_like() const {
  Mlp z = *this;
  for (int i = 0; i < 3; ++i) {
    z.w_[i].setZero();
    z.b_[i].setZero();
  }
  return z;
}

bool Mlp::operator==(const Mlp& o) const {
  if (in_mean_ != o.in_mean_ || in_std_ != o.in_std_) return false;
  for (int i = 0; i < 3; ++i)
    if (w_[i] != o.w_[i] || b_[i] != o.b_[i]) return false;
  return true;
}

void Mlp::to_tensors(TensorFile& f, const std::string& prefix) const {
  f.tensors.push_back({prefix + ".in_mean", in_mean_});
  f.tensors.push_back({prefix + ".in_std", in_std_});
  for (int i = 0; i < 3; ++i) {
    f.tensors.push_back({prefix + ".w" + std::to_string(i), w_[i]});
    f.tensors.push_back({prefix + ".b" + std::to_string(i), b_[i]});
  }
}

Mlp Mlp::from_tensors(const TensorFile& f, const std::string& prefix) {
  Mlp m;
  m.in_mean_ = f.at(prefix + ".in_mean");
  m.in_std_ = f.at(prefix + ".in_std");
  for (int i = 0; i < 3; ++i) {
    m.w_[i] = f.at(prefix + ".w" + std::to_string(i));
    m.b_[i] = f.at(prefix + ".b" + std::to_string(i));
  }
  const auto in = m.w_[0].cols(), h = m.w_[0].rows();
  if (m.in_mean_.rows() != in || m.in_std_.rows() != in || m.w_[1].rows() != h || m.w_[1].cols() != h ||
      m.w_[2].rows() != 1 || m.w_[2].cols() != h || m.b_[0].rows() != h || m.b_[1].rows() != h ||
      m.b_[2].size() != 1)
    throw DataError("perceptron tensors '" + prefix + "' have inconsistent shapes");
  return m;
}

MlpTrainReport train_mlp(Mlp& net, const MatrixXd& xt, const Eigen::RowVectorXd& yt, const MatrixXd& xv,
                         const Eigen::RowVectorXd& yv, MlpLoss kind, const MlpTrainConfig& cfg,
                         std::ostream* log, const std::string& tag) {
  if (xt.cols() == 0) throw DataError(tag + ": no training samples");
  net.set_standardization(xt);
  Mlp grad = net.zeros_like();
  const auto refs = net.param_refs(grad);
  Optimizer opt(cfg.optim);
  MlpTrainReport rep;
  Mlp best = net;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  const auto n = static_cast<std::size_t>(xt.cols());
  std::vector<Eigen::Index> order(n);
  auto eval = [&](const MatrixXd& x, const Eigen::RowVectorXd& y) {
    return net.loss(x, y, kind, cfg.pos_weight);
  };
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i = 0; i < n; i += cfg.batch) {
      const std::size_t end = std::min(n, i + cfg.batch);
      MatrixXd xb(xt.rows(), static_cast<Eigen::Index>(end - i));
      Eigen::RowVectorXd yb(static_cast<Eigen::Index>(end - i));
      for (std::size_t j = i; j < end; ++j) {
        xb.col(static_cast<Eigen::Index>(j - i)) = xt.col(order[j]);
        yb(static_cast<Eigen::Index>(j - i)) = yt(order[j]);
      }
      zero_grads(refs);
      const double l = net.loss(xb, yb, kind, cfg.pos_weight, &grad);
      if (!std::isfinite(l)) throw DivergenceError(tag + ": loss became non-finite in epoch " + std::to_string(epoch + 1));
      opt.step(refs);
      total += l * static_cast<double>(end - i);
    }
    total /= static_cast<double>(n);
    const double vl = xv.cols() > 0 ? eval(xv, yv) : total;
    rep.train_loss.push_back(total);
    rep.val_loss.push_back(vl);
    if (log) *log << tag << " epoch " << epoch + 1 << " train " << format_double(total) << " val " << format_double(vl) << '\n';
    if (vl < best_val) {
      best_val = vl;
      best = net;
      rep.best_epoch = epoch + 1;
      bad = 0;
    } else if (++bad >= cfg.patience) {
      rep.early_stopped = true;
      break;
    }
  }
  net = best;
  return rep;
}

}  // namespace deckshift
