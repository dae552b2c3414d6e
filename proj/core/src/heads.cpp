#include "deckshift/heads.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "deckshift/flatfile.hpp"

namespace deckshift {
namespace {

using Eigen::VectorXd;

Eigen::Index fill_common(const DecisionContext& c, VectorXd& x) {
  const auto d = c.z_cls.size();
  if (c.z_user.size() != d) throw DataError("z_cls and z_user differ in dimension");
  x.segment(0, d) = c.z_cls;
  x.segment(d, d) = c.z_user;
  for (std::size_t i = 0; i < kNumMastery; ++i) x(2 * d + static_cast<Eigen::Index>(i)) = c.mf[i];
  return 2 * d + static_cast<Eigen::Index>(kNumMastery);
}

void check_state(int s) {
  if (s < 0 || s >= kNumStates) throw DataError("state id out of range");
}

std::string fmt_pct(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(1) << v * 100.0;
  return o.str();
}

std::string fmt_opt_pp(const std::optional<double>& v) {
  if (!v) return "---";
  std::ostringstream o;
  o << std::showpos << std::fixed << std::setprecision(1) << *v * 100.0;
  return o.str();
}

}  // namespace

VectorXd gate_features(const DecisionContext& c) {
  check_state(c.state);
  if (c.subtype < 0 || c.subtype >= kNumSubtypes) throw DataError("subtype out of range");
  VectorXd x = VectorXd::Zero(2 * c.z_cls.size() + static_cast<Eigen::Index>(kNumMastery) + kNumSubtypes + kNumStates);
  const auto o = fill_common(c, x);
  x(o + c.subtype) = 1.0;
  x(o + kNumSubtypes + c.state) = 1.0;
  return x;
}

VectorXd quality_features(const DecisionContext& c, int to_state) {
  check_state(c.state);
  check_state(to_state);
  VectorXd x = VectorXd::Zero(2 * c.z_cls.size() + static_cast<Eigen::Index>(kNumMastery) + 2 * kNumStates);
  const auto o = fill_common(c, x);
  x(o + c.state) = 1.0;
  x(o + kNumStates + to_state) = 1.0;
  return x;
}

double TimingGate::probability(const DecisionContext& ctx) const {
  return sigmoid(net.forward_one(gate_features(ctx)));
}

double QualityModel::predict(const DecisionContext& ctx, int to_state) const {
  return net.forward_one(quality_features(ctx, to_state));
}

TimingGate train_timing_gate(const Eigen::MatrixXd& xt, const Eigen::RowVectorXd& yt,
                             const Eigen::MatrixXd& xv, const Eigen::RowVectorXd& yv,
                             MlpTrainConfig cfg, MlpTrainReport* report, std::ostream* log) {
  const double pos = yt.sum();
  if (pos == 0.0 || pos == static_cast<double>(yt.size()))
    throw DataError("timing gate training mix holds a single class");
  TimingGate g;
  g.net = Mlp(static_cast<std::size_t>(xt.rows()), cfg.hidden, cfg.seed);
  auto rep = train_mlp(g.net, xt, yt, xv, yv, MlpLoss::WeightedBce, cfg, log, "gate");
  if (report) *report = std::move(rep);
  return g;
}

QualityModel train_quality(const Eigen::MatrixXd& xt, const Eigen::RowVectorXd& yt,
                           const Eigen::MatrixXd& xv, const Eigen::RowVectorXd& yv,
                           const MlpTrainConfig& cfg, MlpTrainReport* report, std::ostream* log) {
  if (log && xt.cols() < 100) *log << "warning: quality head trained on fewer than 100 switch events\n";
  QualityModel q;
  q.net = Mlp(static_cast<std::size_t>(xt.rows()), cfg.hidden, cfg.seed);
  auto rep = train_mlp(q.net, xt, yt, xv, yv, MlpLoss::SquaredError, cfg, log, "quality");
  if (report) *report = std::move(rep);
  return q;
}

ThetaChoice tune_theta(const std::vector<double>& probs, const std::vector<double>& y,
                       const std::vector<char>& is_switch, const ThetaSearch& search) {
  const std::size_t n = probs.size();
  if (y.size() != n || is_switch.size() != n) throw DataError("theta search inputs differ in length");
  ThetaChoice best;
  best.fallback = true;
  if (n == 0) return best;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return probs[a] > probs[b]; });
  double sw_total = 0.0, sw_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (is_switch[i]) sw_total += 1.0, sw_sum += y[i];
  best.theta = std::nextafter(probs[idx.front()], std::numeric_limits<double>::infinity());
  double approved = 0.0, a_cnt = 0.0, a_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    const double theta = probs[idx[i]];
    while (i < n && probs[idx[i]] == theta) {
      const auto e = idx[i++];
      approved += 1.0;
      if (is_switch[e]) a_cnt += 1.0, a_sum += y[e];
    }
    const double rate = approved / static_cast<double>(n);
    if (rate > search.max_approval) break;
    const double r_cnt = sw_total - a_cnt;
    if (a_cnt < static_cast<double>(search.min_approved_switches) || a_cnt == 0.0 || r_cnt == 0.0) continue;
    const double gap = a_sum / a_cnt - (sw_sum - a_sum) / r_cnt;
    if (!best.gap || gap > *best.gap) {
      best.theta = theta;
      best.gap = gap;
      best.approval_rate = rate;
      best.fallback = false;
    }
  }
  return best;
}

PredictorReport evaluate_predictor(const std::vector<double>& pred, const std::vector<double>& y,
                                   std::size_t resamples, std::uint64_t seed) {
  if (pred.size() != y.size()) throw DataError("predictor evaluation inputs differ in length");
  PredictorReport r;
  r.events = y.size();
  if (y.empty()) return r;
  double abs_err = 0.0, correct = 0.0, tp = 0.0, fp = 0.0, fn = 0.0, confirmed = 0.0;
  MeanAccumulator pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) {
    abs_err += std::abs(pred[i] - y[i]);
    const bool p = pred[i] > 0.0, a = y[i] > 0.0;
    correct += p == a;
    tp += p && a;
    fp += p && !a;
    fn += !p && a;
    if (p) {
      pos.add(y[i]);
    } else {
      neg.add(y[i]);
      confirmed += !a;
    }
  }
  const double n = static_cast<double>(y.size());
  r.mae = abs_err / n;
  r.direction_accuracy = correct / n;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.predicted_beneficial = pos.n;
  r.predicted_harmful = neg.n;
  if (pos.n && neg.n) {
    r.gap = *pos.mean() - *neg.mean();
    r.gap_ci = bootstrap_gap_ci(pred, y, resamples, seed);
  }
  if (neg.n) r.negative_confirmation = confirmed / static_cast<double>(neg.n);
  return r;
}

void write_predictor_table(std::ostream& out, const std::vector<std::pair<std::string, PredictorReport>>& rows) {
  out << std::left << std::setw(16) << "Model" << std::right << std::setw(9) << "MAE" << std::setw(11)
      << "Dir.Acc%" << std::setw(9) << "Prec%" << std::setw(9) << "Rec%" << std::setw(9) << "F1%"
      << std::setw(11) << "Gap(pp)" << std::setw(20) << "95% CI(pp)" << '\n';
  for (const auto& [name, r] : rows) {
    std::ostringstream mae;
    mae << std::fixed << std::setprecision(4) << r.mae;
    std::string ci = "---";
    if (r.gap && r.gap_ci.valid_resamples) ci = "[" + fmt_opt_pp(r.gap_ci.lo) + ", " + fmt_opt_pp(r.gap_ci.hi) + "]";
    out << std::left << std::setw(16) << name << std::right << std::setw(9) << mae.str() << std::setw(11)
        << fmt_pct(r.direction_accuracy) << std::setw(9) << fmt_pct(r.precision) << std::setw(9)
        << fmt_pct(r.recall) << std::setw(9) << fmt_pct(r.f1) << std::setw(11) << fmt_opt_pp(r.gap)
        << std::setw(20) << ci << '\n';
  }
}

void write_predictor_flat(std::ostream& out, const std::vector<std::pair<std::string, PredictorReport>>& rows) {
  write_flat_header(out, "deckshift-predictors", 1);
  out << "# model events mae dir_acc precision recall f1 gap gap_lo gap_hi beneficial harmful neg_confirm\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("---"); };
  for (const auto& [name, r] : rows) {
    out << name << ' ' << r.events << ' ' << format_double(r.mae) << ' ' << format_double(r.direction_accuracy)
        << ' ' << format_double(r.precision) << ' ' << format_double(r.recall) << ' ' << format_double(r.f1)
        << ' ' << opt(r.gap) << ' ' << (r.gap ? format_double(r.gap_ci.lo) : "---") << ' '
        << (r.gap ? format_double(r.gap_ci.hi) : "---") << ' ' << r.predicted_beneficial << ' '
        << r.predicted_harmful << ' ' << opt(r.negative_confirmation) << '\n';
  }
}

void save_heads(const std::string& path, const TimingGate& gate, const QualityModel& quality) {
  TensorFile f;
  f.meta["kind"] = "heads";
  f.meta["theta"] = format_double(gate.theta);
  gate.net.to_tensors(f, "gate");
  quality.net.to_tensors(f, "quality");
  save_tensors(path, f);
}

void load_heads(const std::string& path, TimingGate& gate, QualityModel& quality) {
  const auto f = load_tensors(path);
  const auto kind = f.meta.find("kind");
  const auto theta = f.meta.find("theta");
  if (kind == f.meta.end() || kind->second != "heads" || theta == f.meta.end())
    throw DataError(path + " does not hold decision heads");
  gate.theta = parse_double(theta->second, 0);
  gate.net = Mlp::from_tensors(f, "gate");
  quality.net = Mlp::from_tensors(f, "quality");
}

void save_gate(const std::string& path, const TimingGate& gate) {
  TensorFile f;
  f.meta["kind"] = "gate";
  f.meta["theta"] = format_double(gate.theta);
  gate.net.to_tensors(f, "gate");
  save_tensors(path, f);
}

TimingGate load_gate(const std::string& path) {
  const auto f = load_tensors(path);
  const auto kind = f.meta.find("kind");
  const auto theta = f.meta.find("theta");
  if (kind == f.meta.end() || kind->second != "gate" || theta == f.meta.end())
    throw DataError(path + " does not hold a timing gate");
  TimingGate g;
  g.theta = parse_double(theta->second, 0);
  g.net = Mlp::from_tensors(f, "gate");
  return g;
}

void save_quality(const std::string& path, const QualityModel& quality) {
  TensorFile f;
  f.meta["kind"] = "quality";
  quality.net.to_tensors(f, "quality");
  save_tensors(path, f);
}

QualityModel load_quality(const std::string& path) {
  const auto f = load_tensors(path);
  const auto kind = f.meta.find("kind");
  if (kind == f.meta.end() || kind->second != "quality") throw DataError(path + " does not hold a quality model");
  return {Mlp::from_tensors(f, "quality")};
}

}  // namespace deckshift
