#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "deckshift/policyeval.hpp"
#include "fixtures.hpp"

using namespace deckshift;

namespace {

TransitionEvent ev(bool sw, double y, int from = 0, int to = 1, int subtype = 1) {
  TransitionEvent e;
  e.action = sw ? Action::Switch : Action::Stay;
  e.y_tq = y;
  e.from_state = from;
  e.to_state = sw ? to : from;
  e.subtype = subtype;
  return e;
}

struct Logged {
  std::vector<TransitionEvent> events;
  std::vector<DecisionContext> ctx;

  std::vector<EvalItem> items() const {
    std::vector<EvalItem> out;
    for (std::size_t i = 0; i < events.size(); ++i) out.push_back({&events[i], &ctx[i]});
    return out;
  }
};

Logged logged(std::vector<TransitionEvent> events) {
  Logged l;
  l.events = std::move(events);
  for (const auto& e : l.events) l.ctx.push_back(fixture::context(e.subtype, e.from_state));
  return l;
}

QualityFn zero_quality() {
  return [](const EvalItem&, int) { return 0.0; };
}

std::vector<PolicyDecision> approve_if(const std::vector<char>& mask) {
  std::vector<PolicyDecision> d;
  for (char m : mask) d.push_back({m != 0, -1});
  return d;
}

}  // namespace

TEST(SwitchGap, HandArithmetic) {
  const auto l = logged({ev(true, 0.1), ev(true, 0.2), ev(true, -0.1), ev(true, 0.0), ev(false, 0.5)});
  const auto m = evaluate_policy(approve_if({1, 1, 0, 0, 1}), l.items(), zero_quality());
  ASSERT_TRUE(m.switch_gap);
  EXPECT_NEAR(*m.switch_gap, 0.20, 1e-15);
  EXPECT_EQ(m.approved, 3u);
  EXPECT_EQ(m.switch_rate, 0.6);
  EXPECT_EQ(m.approved_switches, 2u);
  EXPECT_EQ(m.rejected_switches, 2u);
  EXPECT_EQ(*m.prec_at_1, 1.0);
  EXPECT_EQ(*m.rec_tqp, 0.0);
}

TEST(SwitchGap, UniformApprovalIsUndefined) {
  const auto l = logged({ev(true, 0.1), ev(true, -0.2), ev(false, 0.0)});
  const auto all = evaluate_policy(approve_if({1, 1, 0}), l.items(), zero_quality());
  EXPECT_FALSE(all.switch_gap);
  const auto none = evaluate_policy(approve_if({0, 0, 0}), l.items(), zero_quality());
  EXPECT_FALSE(none.switch_gap);
  EXPECT_FALSE(none.rec_tqp);
  EXPECT_FALSE(none.prec_at_1);
  EXPECT_EQ(none.switch_rate, 0.0);
}

TEST(SwitchGap, ClairvoyantPolicyAndStayInvariance) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> ticks(-6, 6);
  std::vector<TransitionEvent> es;
  for (int i = 0; i < 800; ++i) es.push_back(ev(i % 3 != 0, ticks(rng) / 10.0));
  auto l = logged(es);
  std::vector<char> mask;
  for (const auto& e : l.events) mask.push_back(e.y_tq > 0);
  const auto m = evaluate_policy(approve_if(mask), l.items(), zero_quality());
  double ps = 0, pn = 0, ns = 0, nn = 0;
  for (const auto& e : l.events) {
    if (!e.is_switch()) continue;
    if (e.y_tq > 0) ps += e.y_tq, pn += 1;
    else ns += e.y_tq, nn += 1;
  }
  EXPECT_EQ(*m.switch_gap, ps / pn - ns / nn);
  EXPECT_EQ(*m.prec_at_1, 1.0);

  for (int i = 0; i < 300; ++i) es.push_back(ev(false, ticks(rng) / 10.0));
  auto more = logged(es);
  mask.resize(es.size());
  for (std::size_t i = 800; i < es.size(); ++i) mask[i] = static_cast<char>(i % 2);
  const auto m2 = evaluate_policy(approve_if(mask), more.items(), zero_quality());
  EXPECT_EQ(*m2.switch_gap, *m.switch_gap);
  EXPECT_EQ(*m2.prec_at_1, *m.prec_at_1);
  EXPECT_NE(m2.switch_rate, m.switch_rate);
}

TEST(Metrics, RecTqpUsesTheNamedTarget) {
  const auto l = logged({ev(true, 0.1, 0, 3), ev(true, -0.1, 0, 4), ev(false, 0.0)});
  std::vector<PolicyDecision> d{{true, 5}, {true, -1}, {true, 6}};
  const QualityFn q = [](const EvalItem&, int to) { return to / 100.0; };
  const auto m = evaluate_policy(d, l.items(), q);
  EXPECT_NEAR(*m.rec_tqp, (0.05 + 0.04) / 2, 1e-15);
  EXPECT_EQ(*m.prec_at_1, 0.5);
  EXPECT_THROW(evaluate_policy({}, l.items(), q), DataError);
}

TEST(Baselines, FixedPolicies) {
  const auto l = logged({ev(true, 0.1), ev(true, -0.1), ev(false, 0.0)});
  BaselineAux aux;
  aux.cf_prediction.assign(1, {});
  aux.player_transitions.assign(1, std::vector<std::size_t>(kNumStates * kNumStates, 0));
  const auto stay = evaluate_policy(run_baseline(Baseline::AlwaysStay, l.items(), aux), l.items(), zero_quality());
  EXPECT_EQ(stay.approved, 0u);
  EXPECT_EQ(stay.switch_rate, 0.0);
  EXPECT_FALSE(stay.switch_gap || stay.rec_tqp || stay.prec_at_1);
  const auto sw = evaluate_policy(run_baseline(Baseline::AlwaysSwitch, l.items(), aux), l.items(), zero_quality());
  EXPECT_EQ(sw.switch_rate, 1.0);
  EXPECT_FALSE(sw.switch_gap);
  const auto lastk = evaluate_policy(run_baseline(Baseline::LastK, l.items(), aux), l.items(), zero_quality());
  EXPECT_EQ(lastk.switch_rate, 1.0);
  EXPECT_FALSE(lastk.switch_gap);
  std::ostringstream out;
  write_policy_table(out, {{"Always-Switch", sw}, {"Last-K", lastk}});
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) EXPECT_NE(line.find(" ---"), std::string::npos) << line;
}

TEST(Baselines, WrThresholdBoundary) {
  auto a = ev(true, 0.1, 4, 2), b = a;
  a.wr_current = 0.44;
  b.wr_current = 0.45;
  const auto l = logged({a, b, a});
  BaselineAux aux;
  const auto d = run_baseline(Baseline::WrThreshold, l.items(), aux);
  EXPECT_TRUE(d[0].approve);
  EXPECT_FALSE(d[1].approve);
  EXPECT_NE(d[0].target, 4);
  EXPECT_GE(d[0].target, 0);
  EXPECT_LT(d[0].target, kNumStates);
  const auto again = run_baseline(Baseline::WrThreshold, l.items(), aux);
  EXPECT_EQ(again[0].target, d[0].target);
  EXPECT_EQ(again[2].target, d[2].target);

  std::vector<TransitionEvent> many(2000, a);
  const auto ml = logged(many);
  std::array<int, kNumStates> hits{};
  for (const auto& x : run_baseline(Baseline::WrThreshold, ml.items(), aux)) hits[static_cast<std::size_t>(x.target)]++;
  EXPECT_EQ(hits[4], 0);
  for (int t = 0; t < kNumStates; ++t)
    if (t != 4) EXPECT_GT(hits[static_cast<std::size_t>(t)], 100);
}

TEST(Baselines, LastKTakesTheModalTarget) {
  BaselineAux aux;
  aux.player_transitions.assign(2, std::vector<std::size_t>(kNumStates * kNumStates, 0));
  aux.player_transitions[1][3 * kNumStates + 2] = 3;
  aux.player_transitions[1][3 * kNumStates + 5] = 1;
  aux.player_transitions[1][4 * kNumStates + 9] = 8;
  auto e = ev(true, 0.0, 3, 7);
  e.player = 1;
  const auto l = logged({e});
  const auto d = run_baseline(Baseline::LastK, l.items(), aux);
  EXPECT_TRUE(d[0].approve);
  EXPECT_EQ(d[0].target, 2);
}

TEST(Baselines, PopulationOracleMargin) {
  BaselineAux aux;
  aux.state_winrate.fill(0.5);
  aux.state_winrate[6] = 0.56;
  aux.state_winrate[1] = 0.545;
  const auto l = logged({ev(false, 0, 0), ev(false, 0, 1), ev(false, 0, 6)});
  const auto d = run_baseline(Baseline::PopulationOracle, l.items(), aux);
  EXPECT_TRUE(d[0].approve);
  EXPECT_EQ(d[0].target, 6);
  EXPECT_FALSE(d[1].approve);
  EXPECT_FALSE(d[2].approve);
}

TEST(Baselines, AlsRecoversALowRankMatrix) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t players = 120;
  Eigen::MatrixXd a(players, 2), b(kNumStates, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = nd(rng);
  const Eigen::MatrixXd full = 0.05 * a * b.transpose();
  std::vector<std::array<double, kNumStates>> obs(players);
  std::vector<std::pair<std::size_t, int>> hidden;
  for (std::size_t p = 0; p < players; ++p)
    for (int s = 0; s < kNumStates; ++s) {
      const bool keep = u(rng) < 0.6;
      obs[p][static_cast<std::size_t>(s)] =
          keep ? 0.5 + full(static_cast<Eigen::Index>(p), s) : std::numeric_limits<double>::quiet_NaN();
      if (!keep) hidden.push_back({p, s});
    }
  CfConfig cfg;
  cfg.rank = 3;
  cfg.iterations = 50;
  cfg.reg = 0.01;
  const auto rec = als_complete(obs, cfg);
  double err = 0, base = 0;
  for (auto [p, s] : hidden) {
    const double truth = 0.5 + full(static_cast<Eigen::Index>(p), s);
    err += std::abs(rec[p][static_cast<std::size_t>(s)] - truth);
    base += std::abs(0.5 - truth);
  }
  EXPECT_LT(err, 0.3 * base);
  const auto rec2 = als_complete(obs, cfg);
  EXPECT_EQ(rec2[7], rec[7]);
}

TEST(Baselines, AuxFromTheTrainingSplit) {
  auto f = fixture::event_fixture(40, 9);
  const auto aux = build_baseline_aux(f.pop.histories, f.states, f.splits, f.events, {});
  std::array<double, kNumStates> w{}, g{};
  for (std::size_t p = 0; p < f.pop.histories.size(); ++p)
    for (std::size_t t = 0; t < f.splits.players[p].train_end; ++t) {
      const auto s = static_cast<std::size_t>(f.states[p][t]);
      g[s] += 1;
      w[s] += f.pop.histories[p].matches[t].win();
    }
  for (std::size_t s = 0; s < kNumStates; ++s) EXPECT_EQ(aux.state_winrate[s], g[s] ? w[s] / g[s] : 0.0);
  std::size_t total = 0, cross = 0;
  for (const auto& row : aux.player_transitions)
    for (auto c : row) total += c;
  for (const auto& e : f.events) cross += e.split == Split::Train && e.cross_state();
  EXPECT_EQ(total, cross);
  EXPECT_EQ(aux.cf_prediction.size(), f.pop.histories.size());

  std::vector<DecisionContext> ctx;
  for (const auto& e : f.events) ctx.push_back(fixture::context(e.subtype, e.from_state));
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < f.events.size(); ++i) items.push_back({&f.events[i], &ctx[i]});
  const auto cf = run_baseline(Baseline::CollaborativeFiltering, items, aux);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!cf[i].approve) continue;
    const auto& row = aux.cf_prediction[f.events[i].player];
    EXPECT_NE(cf[i].target, f.events[i].from_state);
    EXPECT_GT(row[static_cast<std::size_t>(cf[i].target)], row[static_cast<std::size_t>(f.events[i].from_state)]);
  }
}

class Ablation : public ::testing::Test {
 protected:
  void SetUp() override {
    f_ = fixture::event_fixture(80, 10);
    counts_ = TransitionCounts::build(f_.events);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 0.05);
    std::vector<double> qv;
    for (int t = 0; t < kNumStates; ++t) qv.push_back(nd(rng));
    quality_ = fixture::lookup_quality(qv);
    std::vector<double> gv(kNumStates);
    for (int s = 0; s < kNumStates; ++s) gv[static_cast<std::size_t>(s)] = s % 2 ? 2.0 : 0.0;
    gate_ = {fixture::lookup_mlp(fixture::gate_inputs(), fixture::gate_inputs() - kNumStates, gv), 0.6};
    for (const auto& e : f_.events) ctx_.push_back(fixture::context(e.subtype, e.from_state));
    for (std::size_t i = 0; i < f_.events.size(); ++i) items_.push_back({&f_.events[i], &ctx_[i]});
  }

  fixture::EventFixture f_;
  TransitionCounts counts_;
  QualityModel quality_;
  TimingGate gate_;
  std::vector<DecisionContext> ctx_;
  std::vector<EvalItem> items_;
};

TEST_F(Ablation, RowsNestAndForwardedPopulationMatches) {
  const Recommender rec(gate_, quality_, counts_, std::make_shared<FrequencyScorer>(counts_), {});
  const auto fwd = forwarded_items(items_);
  ASSERT_GT(fwd.size(), 50u);
  for (const auto& it : fwd) EXPECT_NE(it.event->subtype, 0);
  const auto rows = run_ablation(fwd, rec);
  const auto q = [&](const EvalItem& it, int to) { return quality_.predict(*it.ctx, to); };
  const auto ma = evaluate_policy(rows.a, fwd, q), mb = evaluate_policy(rows.b, fwd, q);
  const auto mc = evaluate_policy(rows.c, fwd, q), md = evaluate_policy(rows.d, fwd, q);
  EXPECT_EQ(ma.approved, mb.approved);
  EXPECT_EQ(ma.switch_gap, mb.switch_gap);
  EXPECT_EQ(ma.rec_tqp, mb.rec_tqp);
  EXPECT_LE(md.switch_rate, mc.switch_rate);
  EXPECT_LT(mc.switch_rate, mb.switch_rate);
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    if (rows.d[i].approve) EXPECT_TRUE(rows.c[i].approve);
    if (rows.c[i].approve) EXPECT_TRUE(rows.b[i].approve);
    if (rows.d[i].approve) EXPECT_NE(rows.d[i].target, fwd[i].ctx->state);
  }

  const auto all_rows = run_ablation(items_, rec);
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].ctx->subtype == 0) {
      EXPECT_FALSE(all_rows.b[i].approve);
      EXPECT_FALSE(all_rows.d[i].approve);
    }
}

TEST_F(Ablation, SubtypeBreakdownIsAdditive) {
  const Recommender rec(gate_, quality_, counts_, std::make_shared<FrequencyScorer>(counts_), {});
  const auto fwd = forwarded_items(items_);
  const auto rows = run_ablation(fwd, rec);
  const auto q = [&](const EvalItem& it, int to) { return quality_.predict(*it.ctx, to); };
  const auto pooled = evaluate_policy(rows.a, fwd, q);
  std::size_t approved = 0, as = 0, rs = 0;
  double asum = 0, rsum = 0;
  for (int u : {1, 2}) {
    std::vector<EvalItem> part;
    std::vector<PolicyDecision> dec;
    for (std::size_t i = 0; i < fwd.size(); ++i)
      if (fwd[i].event->subtype == u) part.push_back(fwd[i]), dec.push_back(rows.a[i]);
    const auto m = evaluate_policy(dec, part, q);
    approved += m.approved;
    as += m.approved_switches;
    rs += m.rejected_switches;
    asum += m.approved_switch_sum;
    rsum += m.rejected_switch_sum;
  }
  EXPECT_EQ(approved, pooled.approved);
  EXPECT_EQ(as, pooled.approved_switches);
  EXPECT_EQ(rs, pooled.rejected_switches);
  EXPECT_NEAR(asum, pooled.approved_switch_sum, 1e-12);
  EXPECT_NEAR(rsum, pooled.rejected_switch_sum, 1e-12);
}

TEST(Report, PercentagePointFormatting) {
  EXPECT_EQ(format_pp(std::nullopt), "---");
  EXPECT_EQ(format_pp(0.0824), "+8.2");
  EXPECT_EQ(format_pp(-0.0576), "-5.8");
  EXPECT_EQ(format_pp(0.06, false), "6.0");
  PolicyMetrics m;
  m.evaluated = 4;
  std::ostringstream flat;
  write_policy_flat(flat, {{"Always-Stay", m}});
  EXPECT_NE(flat.str().find("Always-Stay 4 0 0 --- 0 0 --- ---"), std::string::npos);
  EXPECT_EQ(all_baselines().size(), 6u);
  EXPECT_EQ(to_string(Baseline::LastK), "Last-K");
}
