#include "deckshift/policyeval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "deckshift/flatfile.hpp"
#include "deckshift/metrics.hpp"
#include "deckshift/subtype.hpp"

namespace deckshift {
namespace {

constexpr std::size_t kMinCfMatches = 3;

int argmax_state(const std::array<double, kNumStates>& v) {
  int best = 0;
  for (int s = 1; s < kNumStates; ++s)
    if (v[static_cast<std::size_t>(s)] > v[static_cast<std::size_t>(best)]) best = s;
  return best;
}

// Stage-1 supported destination with the highest adoptability score.
int top_adoptable(const EvalItem& it, const Recommender& rec) {
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  const auto& ctx = *it.ctx;
  for (int t = 0; t < kNumStates; ++t) {
    if (t == ctx.state || rec.counts().count(ctx.subtype, ctx.state, t) < rec.config().min_support) continue;
    const double s = rec.scorer().score(ctx, t);
    if (s > best_score) best = t, best_score = s;
  }
  return best;
}

}  // namespace

PolicyMetrics evaluate_policy(const std::vector<PolicyDecision>& decisions, const std::vector<EvalItem>& items,
                              const QualityFn& quality) {
  if (decisions.size() != items.size()) throw DataError("one decision per evaluated event is required");
  PolicyMetrics m;
  m.evaluated = items.size();
  std::vector<char> approved, is_switch;
  std::vector<double> y;
  MeanAccumulator rec, prec;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& e = *items[i].event;
    const auto& d = decisions[i];
    m.approved += d.approve;
    approved.push_back(d.approve);
    is_switch.push_back(e.is_switch());
    y.push_back(e.y_tq);
    if (d.approve && e.is_switch()) {
      rec.add(quality(items[i], d.target >= 0 ? d.target : e.to_state));
      prec.add(e.y_tq > 0.0 ? 1.0 : 0.0);
    }
  }
  m.switch_rate = items.empty() ? 0.0 : static_cast<double>(m.approved) / static_cast<double>(items.size());
  const auto g = switch_gap(approved, y, is_switch);
  m.switch_gap = g.gap;
  m.approved_switches = g.approved.n;
  m.rejected_switches = g.rejected.n;
  m.approved_switch_sum = g.approved.sum;
  m.rejected_switch_sum = g.rejected.sum;
  m.rec_tqp = rec.mean();
  m.prec_at_1 = prec.mean();
  return m;
}

std::vector<std::array<double, kNumStates>> als_complete(const std::vector<std::array<double, kNumStates>>& obs,
                                                         const CfConfig& cfg) {
  const auto p = static_cast<Eigen::Index>(obs.size());
  const auto r = static_cast<Eigen::Index>(cfg.rank);
  const Eigen::Index s = kNumStates;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nd(0.0, 0.1);
  Eigen::MatrixXd u(p, r), v(s, r);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index k = 0; k < r; ++k) u(i, k) = nd(rng);
  for (Eigen::Index j = 0; j < s; ++j)
    for (Eigen::Index k = 0; k < r; ++k) v(j, k) = nd(rng);
  const Eigen::MatrixXd reg = cfg.reg * Eigen::MatrixXd::Identity(r, r);
  auto observed = [&](Eigen::Index i, Eigen::Index j) {
    return !std::isnan(obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  };
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (Eigen::Index i = 0; i < p; ++i) {
      Eigen::MatrixXd a = reg;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(r);
      for (Eigen::Index j = 0; j < s; ++j)
        if (observed(i, j)) {
          a.noalias() += v.row(j).transpose() * v.row(j);
          b += v.row(j).transpose() * obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
      u.row(i) = a.ldlt().solve(b).transpose();
    }
    for (Eigen::Index j = 0; j < s; ++j) {
      Eigen::MatrixXd a = reg;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(r);
      for (Eigen::Index i = 0; i < p; ++i)
        if (observed(i, j)) {
          a.noalias() += u.row(i).transpose() * u.row(i);
          b += u.row(i).transpose() * obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
      v.row(j) = a.ldlt().solve(b).transpose();
    }
  }
  std::vector<std::array<double, kNumStates>> out(obs.size());
  const Eigen::MatrixXd full = u * v.transpose();
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < s; ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = full(i, j);
  return out;
}

BaselineAux build_baseline_aux(const std::vector<PlayerHistory>& histories,
                               const std::vector<std::vector<int>>& states, const SplitAssignment& splits,
                               const std::vector<TransitionEvent>& events, const CfConfig& cf) {
  BaselineAux aux;
  aux.seed = cf.seed;
  std::array<double, kNumStates> wins{}, games{};
  std::vector<std::array<double, kNumStates>> obs(histories.size());
  for (std::size_t p = 0; p < histories.size(); ++p) {
    std::array<double, kNumStates> pw{}, pg{};
    for (std::size_t t = 0; t < splits.players[p].train_end; ++t) {
      const auto s = static_cast<std::size_t>(states[p][t]);
      const double w = histories[p].matches[t].win() ? 1.0 : 0.0;
      wins[s] += w, games[s] += 1.0;
      pw[s] += w, pg[s] += 1.0;
    }
    for (std::size_t s = 0; s < kNumStates; ++s)
      obs[p][s] = pg[s] >= kMinCfMatches ? pw[s] / pg[s] : std::numeric_limits<double>::quiet_NaN();
  }
  for (std::size_t s = 0; s < kNumStates; ++s) aux.state_winrate[s] = games[s] > 0 ? wins[s] / games[s] : 0.0;
  aux.cf_prediction = als_complete(obs, cf);
  aux.player_transitions.assign(histories.size(), std::vector<std::size_t>(kNumStates * kNumStates, 0));
  for (const auto& e : events)
    if (e.split == Split::Train && e.cross_state())
      ++aux.player_transitions.at(e.player)[static_cast<std::size_t>(e.from_state * kNumStates + e.to_state)];
  return aux;
}

std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::AlwaysStay: return "Always-Stay";
    case Baseline::AlwaysSwitch: return "Always-Switch";
    case Baseline::WrThreshold: return "WR-Threshold";
    case Baseline::PopulationOracle: return "Population-Oracle";
    case Baseline::CollaborativeFiltering: return "Collab-Filtering";
    case Baseline::LastK: return "Last-K";
  }
  return "?";
}

const std::vector<Baseline>& all_baselines() {
  static const std::vector<Baseline> b{Baseline::AlwaysStay,       Baseline::AlwaysSwitch,
                                       Baseline::WrThreshold,      Baseline::PopulationOracle,
                                       Baseline::CollaborativeFiltering, Baseline::LastK};
  return b;
}

std::vector<PolicyDecision> run_baseline(Baseline b, const std::vector<EvalItem>& items, const BaselineAux& aux) {
  std::vector<PolicyDecision> out(items.size());
  const int pop_best = argmax_state(aux.state_winrate);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& e = *items[i].event;
    auto& d = out[i];
    switch (b) {
      case Baseline::AlwaysStay: break;
      case Baseline::AlwaysSwitch: d.approve = true; break;
      case Baseline::WrThreshold:
        if (e.wr_current < aux.wr_threshold) {
          std::mt19937_64 rng(derive_seed(aux.seed, static_cast<std::uint64_t>(i)));
          std::uniform_int_distribution<int> pick(0, kNumStates - 2);
          const int t = pick(rng);
          d.approve = true;
          d.target = t >= e.from_state ? t + 1 : t;
        }
        break;
      case Baseline::PopulationOracle:
        if (aux.state_winrate[static_cast<std::size_t>(e.from_state)] <
            aux.state_winrate[static_cast<std::size_t>(pop_best)] - aux.oracle_tau) {
          d.approve = true;
          d.target = pop_best;
        }
        break;
      case Baseline::CollaborativeFiltering: {
        if (e.player >= aux.cf_prediction.size()) throw DataError("collaborative filtering lacks this player");
        const auto& pred = aux.cf_prediction[e.player];
        const int best = argmax_state(pred);
        if (best != e.from_state &&
            pred[static_cast<std::size_t>(best)] - pred[static_cast<std::size_t>(e.from_state)] > 0.0) {
          d.approve = true;
          d.target = best;
        }
        break;
      }
      case Baseline::LastK: {
        if (e.player >= aux.player_transitions.size()) throw DataError("Last-K lacks this player");
        const auto& row = aux.player_transitions[e.player];
        std::size_t best = 0;
        for (int t = 0; t < kNumStates; ++t) {
          const auto c = row[static_cast<std::size_t>(e.from_state * kNumStates + t)];
          if (c > best) best = c, d.target = t;
        }
        d.approve = true;
        break;
      }
    }
  }
  return out;
}

AblationRows run_ablation(const std::vector<EvalItem>& items, const Recommender& rec) {
  AblationRows rows;
  for (const auto& it : items) {
    PolicyDecision a;
    a.approve = true;
    a.target = top_adoptable(it, rec);
    rows.a.push_back(a);
    PolicyDecision b = a;
    b.approve = persona_gate(static_cast<Subtype>(it.ctx->subtype)) == GateDecision::Forward;
    rows.b.push_back(b);
    PolicyDecision c = b;
    if (c.approve) c.approve = rec.gate().approves(rec.gate().probability(*it.ctx));
    rows.c.push_back(c);
    const auto r = rec.recommend(*it.ctx);
    rows.d.push_back({r.switch_, r.switch_ ? r.target_state : -1});
  }
  return rows;
}

std::vector<EvalItem> forwarded_items(const std::vector<EvalItem>& items) {
  std::vector<EvalItem> out;
  for (const auto& it : items)
    if (persona_gate(static_cast<Subtype>(it.event->subtype)) == GateDecision::Forward) out.push_back(it);
  return out;
}

std::string format_pp(const std::optional<double>& v, bool signed_value) {
  if (!v) return "---";
  std::ostringstream o;
  if (signed_value) o << std::showpos;
  o << std::fixed << std::setprecision(1) << *v * 100.0;
  return o.str();
}

void write_policy_table(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << std::left << std::setw(24) << "Policy" << std::right << std::setw(8) << "Sw%" << std::setw(12)
      << "SwitchGap" << std::setw(10) << "Rec_TQP" << std::setw(9) << "Prec@1" << std::setw(10) << "N" << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << std::left << std::setw(24) << r.name << std::right << std::setw(8)
        << format_pp(m.switch_rate, false) << std::setw(12) << format_pp(m.switch_gap) << std::setw(10)
        << format_pp(m.rec_tqp) << std::setw(9) << format_pp(m.prec_at_1, false) << std::setw(10)
        << m.evaluated << '\n';
  }
}

void write_policy_flat(std::ostream& out, const std::vector<ReportRow>& rows) {
  write_flat_header(out, "deckshift-policies", 1);
  out << "# policy evaluated approved switch_rate switch_gap approved_switches rejected_switches rec_tqp prec_at_1\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("---"); };
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.name << ' ' << m.evaluated << ' ' << m.approved << ' ' << format_double(m.switch_rate) << ' '
        << opt(m.switch_gap) << ' ' << m.approved_switches << ' ' << m.rejected_switches << ' '
        << opt(m.rec_tqp) << ' ' << opt(m.prec_at_1) << '\n';
  }
}

}  // namespace deckshift
