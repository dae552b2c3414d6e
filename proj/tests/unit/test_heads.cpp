#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "deckshift/heads.hpp"
#include "fixtures.hpp"

using namespace deckshift;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Mann-Whitney AUC by direct pair counting.
double pair_auc(const std::vector<double>& score, const std::vector<int>& label) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < score.size(); ++i)
    for (std::size_t j = 0; j < score.size(); ++j)
      if (label[i] == 1 && label[j] == 0) {
        pairs += 1;
        good += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
      }
  return good / pairs;
}

struct Noisy {
  std::vector<double> pred, y;
};

Noisy noisy_events(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.08);
  std::uniform_int_distribution<int> ticks(-5, 5);
  Noisy out;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = ticks(rng) / 10.0;
    out.y.push_back(y);
    out.pred.push_back(0.5 * y + nd(rng));
  }
  return out;
}

MlpTrainConfig small_config() {
  MlpTrainConfig c;
  c.hidden = 16;
  c.batch = 64;
  c.epochs = 40;
  c.patience = 40;
  c.optim.kind = OptimizerKind::Adam;
  c.optim.lr = 1e-2;
  return c;
}

}  // namespace

TEST(Predictor, FourEventToySet) {
  const auto r = evaluate_predictor({0.1, 0.2, -0.1, -0.2}, {0.05, -0.05, -0.1, 0.1}, 100, 1);
  // |.05| + |.25| + 0 + |.3| over 4
  EXPECT_NEAR(r.mae, 0.15, 1e-15);
  EXPECT_EQ(r.direction_accuracy, 0.5);
  EXPECT_EQ(r.precision, 0.5);
  EXPECT_EQ(r.recall, 0.5);
  EXPECT_EQ(r.f1, 0.5);
  EXPECT_EQ(r.predicted_beneficial, 2u);
  ASSERT_TRUE(r.gap);
  EXPECT_NEAR(*r.gap, 0.0 - (-0.1 + 0.1) / 2, 1e-15);
  ASSERT_TRUE(r.negative_confirmation);
  EXPECT_EQ(*r.negative_confirmation, 0.5);
}

TEST(Predictor, AlwaysZeroScoresTheNonPositiveShare) {
  const auto ev = noisy_events(3000, 4);
  const auto r = evaluate_predictor(std::vector<double>(ev.y.size(), 0.0), ev.y, 10, 1);
  double nonpos = 0, abs_sum = 0;
  for (double y : ev.y) nonpos += y <= 0.0, abs_sum += std::abs(y);
  EXPECT_EQ(r.direction_accuracy, nonpos / static_cast<double>(ev.y.size()));
  EXPECT_NEAR(r.mae, abs_sum / static_cast<double>(ev.y.size()), 1e-15);
  EXPECT_FALSE(r.gap);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.predicted_beneficial, 0u);
}

TEST(Predictor, PerfectPredictorAndTwoWayGap) {
  const auto ev = noisy_events(2000, 5);
  const auto r = evaluate_predictor(ev.y, ev.y, 10, 1);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.f1, 1.0);
  std::vector<double> up, down;
  for (double y : ev.y) (y > 0 ? up : down).push_back(y);
  ASSERT_TRUE(r.gap);
  EXPECT_EQ(*r.gap, mean_of(up) - mean_of(down));

  const auto noisy = evaluate_predictor(ev.pred, ev.y, 10, 1);
  std::map<bool, std::vector<double>> groups;
  for (std::size_t i = 0; i < ev.y.size(); ++i) groups[ev.pred[i] > 0].push_back(ev.y[i]);
  EXPECT_EQ(*noisy.gap, mean_of(groups[true]) - mean_of(groups[false]));
  EXPECT_EQ(noisy.predicted_beneficial + noisy.predicted_harmful, ev.y.size());
}

TEST(Bootstrap, DeterministicAndStableInResampleCount) {
  const auto ev = noisy_events(2000, 6);
  const auto a = bootstrap_gap_ci(ev.pred, ev.y, 1000, 9);
  const auto b = bootstrap_gap_ci(ev.pred, ev.y, 1000, 9);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  const auto c = bootstrap_gap_ci(ev.pred, ev.y, 10000, 9);
  EXPECT_EQ(c.valid_resamples, 10000u);
  EXPECT_LT(std::abs(c.lo - a.lo), 0.005);
  EXPECT_LT(std::abs(c.hi - a.hi), 0.005);
  const auto r = evaluate_predictor(ev.pred, ev.y, 2000, 3);
  EXPECT_LT(r.gap_ci.lo, *r.gap);
  EXPECT_GT(r.gap_ci.hi, *r.gap);
  EXPECT_GT(r.gap_ci.lo, 0.0);
}

TEST(Bootstrap, PercentileInterpolation) {
  EXPECT_EQ(percentile_sorted({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_EQ(percentile_sorted({1, 2, 3, 4, 5}, 0.125), 1.5);
  EXPECT_EQ(percentile_sorted({7}, 0.975), 7.0);
  EXPECT_THROW(percentile_sorted({}, 0.5), DataError);
}

TEST(Features, LayoutAndOneHots) {
  auto c = fixture::context(2, 7);
  c.z_cls << 1, 2;
  c.z_user << 3, 4;
  c.mf = {5, 6, 7, 8, 9, 10, 11};
  const auto g = gate_features(c);
  ASSERT_EQ(static_cast<std::size_t>(g.size()), fixture::gate_inputs());
  EXPECT_EQ(g.head(11).sum(), 66.0);
  EXPECT_EQ(g(11 + 2), 1.0);
  EXPECT_EQ(g(11 + 3 + 7), 1.0);
  EXPECT_EQ(g.tail(16).sum(), 2.0);
  const auto q = quality_features(c, 4);
  ASSERT_EQ(static_cast<std::size_t>(q.size()), fixture::quality_inputs());
  EXPECT_EQ(q(11 + 7), 1.0);
  EXPECT_EQ(q(fixture::to_offset() + 4), 1.0);
  EXPECT_EQ(q.tail(26).sum(), 2.0);
  EXPECT_THROW(quality_features(c, 13), DataError);
  c.z_user.resize(3);
  EXPECT_THROW(gate_features(c), DataError);
}

TEST(TimingGate, ThresholdLimits) {
  auto gate = fixture::constant_gate(0.3);
  const auto c = fixture::context(1, 0);
  const double p = gate.probability(c);
  EXPECT_EQ(p, sigmoid(0.3));
  gate.theta = 0.0;
  EXPECT_TRUE(gate.approves(p));
  EXPECT_TRUE(gate.approves(0.0));
  gate.theta = std::nextafter(1.0, 2.0);
  EXPECT_FALSE(gate.approves(p));
  EXPECT_FALSE(gate.approves(1.0));
}

TEST(TimingGate, ApprovedSetShrinksWithTheta) {
  const auto ev = noisy_events(500, 7);
  std::vector<double> probs;
  for (double p : ev.pred) probs.push_back(sigmoid(10 * p));
  TimingGate g;
  std::size_t prev = probs.size() + 1;
  std::set<std::size_t> prev_set;
  for (int k = 0; k <= 100; ++k) {
    g.theta = k / 100.0;
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (g.approves(probs[i])) s.insert(i);
    EXPECT_LE(s.size(), prev);
    if (k) EXPECT_TRUE(std::includes(prev_set.begin(), prev_set.end(), s.begin(), s.end()));
    prev = s.size();
    prev_set = s;
  }
}

TEST(TimingGate, PositiveClassWeightScalesItsGradient) {
  Mlp net(6, 5, 2);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 1);
  const Eigen::RowVectorXd y = Eigen::RowVectorXd::Ones(1);
  auto g1 = net.zeros_like(), g15 = net.zeros_like();
  net.loss(x, y, MlpLoss::WeightedBce, 1.0, &g1);
  net.loss(x, y, MlpLoss::WeightedBce, 1.5, &g15);
  auto d1 = g1.zeros_like(), d15 = g15.zeros_like();
  const auto r1 = g1.param_refs(d1), r15 = g15.param_refs(d15);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    const Eigen::MatrixXd want = 1.5 * *r1[i].value;
    EXPECT_LE((*r15[i].value - want).cwiseAbs().maxCoeff(), 1e-15 * (1.0 + want.cwiseAbs().maxCoeff())) << r1[i].name;
  }
  EXPECT_EQ(bce_grad(0.2, 1.0, 1.5), 1.5 * bce_grad(0.2, 1.0, 1.0));
  EXPECT_EQ(bce_grad(0.2, 0.0, 1.5), bce_grad(0.2, 0.0, 1.0));
}

TEST(TimingGate, LearnsAPlantedSignal) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto make = [&](std::size_t n, Eigen::MatrixXd& x, Eigen::RowVectorXd& y) {
    x.resize(6, static_cast<Eigen::Index>(n));
    y.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (Eigen::Index i = 0; i < 6; ++i) x(i, j) = nd(rng);
      y(j) = x(0, j) * x(1, j) + 0.3 * nd(rng) > 0 ? 1.0 : 0.0;
    }
  };
  Eigen::MatrixXd xt, xv;
  Eigen::RowVectorXd yt, yv;
  make(3000, xt, yt);
  make(600, xv, yv);
  auto cfg = small_config();
  cfg.pos_weight = 1.5;
  MlpTrainReport rep;
  const auto gate = train_timing_gate(xt, yt, xv, yv, cfg, &rep);
  const auto out = gate.net.forward(xv);
  std::vector<double> s(out.data(), out.data() + out.size());
  std::vector<int> l;
  for (Eigen::Index j = 0; j < yv.size(); ++j) l.push_back(static_cast<int>(yv(j)));
  EXPECT_GT(pair_auc(s, l), 0.7);
  EXPECT_LT(rep.val_loss[rep.best_epoch], rep.val_loss[0] + 1e-12);
  for (Eigen::Index j = 0; j < 20; ++j) EXPECT_NEAR(out(j), gate.net.forward_one(xv.col(j)), 1e-12);
  EXPECT_THROW(train_timing_gate(xt, Eigen::RowVectorXd::Zero(xt.cols()), xv, yv, cfg), DataError);
}

TEST(Quality, ConstantTargetAndBeatingAlwaysZero) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(5, 400);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < 5; ++i) x(i, j) = nd(rng);
  const Eigen::RowVectorXd c = Eigen::RowVectorXd::Constant(400, 0.07);
  const auto q = train_quality(x, c, x, c, small_config());
  EXPECT_LT((q.net.forward(x).array() - 0.07).abs().mean(), 0.01);

  Eigen::RowVectorXd y(400);
  for (Eigen::Index j = 0; j < x.cols(); ++j) y(j) = 0.1 * std::tanh(x(0, j)) + 0.02 * nd(rng);
  std::ostringstream log;
  const auto q2 = train_quality(x, y, x, y, small_config(), nullptr, &log);
  EXPECT_LT((q2.net.forward(x) - y).array().abs().mean(), y.array().abs().mean());
  EXPECT_EQ(log.str().find("fewer than 100"), std::string::npos);
  std::ostringstream warn;
  train_quality(x.leftCols(50), y.head(50), x, y, small_config(), nullptr, &warn);
  EXPECT_NE(warn.str().find("fewer than 100"), std::string::npos);
}

TEST(ThetaSearch, MatchesExhaustiveScan) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> probs, y;
  std::vector<char> sw;
  for (int i = 0; i < 2000; ++i) {
    const double p = std::round(u(rng) * 200) / 200;
    probs.push_back(p);
    sw.push_back(u(rng) < 0.4);
    y.push_back(0.2 * (p - 0.5) + 0.1 * (u(rng) - 0.5));
  }
  const ThetaSearch search;
  const auto got = tune_theta(probs, y, sw, search);

  std::set<double> thresholds(probs.begin(), probs.end());
  std::optional<double> best;
  double best_theta = 0;
  for (double t : thresholds) {
    double n = 0, ac = 0, as = 0, rc = 0, rs = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const bool a = probs[i] >= t;
      n += a;
      if (!sw[i]) continue;
      if (a) ac += 1, as += y[i];
      else rc += 1, rs += y[i];
    }
    if (n / 2000.0 > search.max_approval || ac < 20 || rc == 0) continue;
    const double gap = as / ac - rs / rc;
    if (!best || gap > *best || (gap == *best && t > best_theta)) best = gap, best_theta = t;
  }
  ASSERT_TRUE(best);
  ASSERT_TRUE(got.gap);
  EXPECT_FALSE(got.fallback);
  EXPECT_EQ(got.theta, best_theta);
  EXPECT_NEAR(*got.gap, *best, 1e-12);
  EXPECT_LE(got.approval_rate, 0.15);

  const auto none = tune_theta({0.5, 0.5}, {0.1, -0.1}, {1, 1});
  EXPECT_TRUE(none.fallback);
  EXPECT_GT(none.theta, 0.5);
}

TEST(Heads, TableRendersUndefinedGapAsDashes) {
  std::ostringstream out;
  write_predictor_table(out, {{"Always-Zero", evaluate_predictor({0, 0}, {0.1, -0.1}, 10, 1)}});
  EXPECT_NE(out.str().find("---"), std::string::npos);
  EXPECT_NE(out.str().find("50.0"), std::string::npos);
  std::ostringstream flat;
  write_predictor_flat(flat, {{"TQP", evaluate_predictor({0.1, -0.1}, {0.1, -0.1}, 10, 1)}});
  EXPECT_NE(flat.str().find("TQP 2 0 1 1 1 1 0.20000000000000001"), std::string::npos);
}

TEST(Heads, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "deckshift_heads_test";
  std::filesystem::create_directories(dir);
  TimingGate g{Mlp(fixture::gate_inputs(), 8, 3), 0.4123};
  QualityModel q{Mlp(fixture::quality_inputs(), 8, 4)};
  save_heads((dir / "heads.tensors").string(), g, q);
  TimingGate g2;
  QualityModel q2;
  load_heads((dir / "heads.tensors").string(), g2, q2);
  EXPECT_EQ(g2.theta, g.theta);
  EXPECT_TRUE(g2.net == g.net);
  EXPECT_TRUE(q2.net == q.net);
  save_gate((dir / "gate.tensors").string(), g);
  EXPECT_TRUE(load_gate((dir / "gate.tensors").string()).net == g.net);
  EXPECT_THROW(load_quality((dir / "gate.tensors").string()), DataError);
  std::filesystem::remove_all(dir);
}
