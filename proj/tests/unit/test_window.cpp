#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>
#include <set>

#include "deckshift/window.hpp"
#include "fixtures.hpp"

using namespace deckshift;

namespace {

double lstsq_slope(const std::vector<double>& y) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(y.size()), 2);
  Eigen::VectorXd b(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    a(static_cast<Eigen::Index>(i), 0) = 1.0;
    a(static_cast<Eigen::Index>(i), 1) = static_cast<double>(i + 1);
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  return a.colPivHouseholderQr().solve(b)(1);
}

std::vector<StepInput> steps_from(const std::vector<int>& outcomes, const std::vector<int>& deck_ids) {
  std::vector<StepInput> s;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    StepInput x;
    x.outcome = outcomes[i];
    x.crown_diff = outcomes[i] ? 1 : -2;
    const auto d = static_cast<CardIndex>(deck_ids[i]);
    x.deck = {d, static_cast<CardIndex>(d + 10), 20, 21, 22, 23, 24, 25};
    x.avg_elixir = 3.0 + 0.1 * static_cast<double>(i);
    s.push_back(x);
  }
  return s;
}

}  // namespace

TEST(Mastery, TiltCountsRecentLosses) {
  const auto s = steps_from({1, 1, 1, 1, 1, 1, 1, 0, 0, 1}, std::vector<int>(10, 0));
  EXPECT_EQ(mastery_features(s)[3], 2.0);
}

TEST(Mastery, SingleDeckWindow) {
  const auto mf = mastery_features(steps_from({1, 0, 1, 0, 1, 0, 1, 0, 1, 0}, std::vector<int>(10, 0)));
  EXPECT_EQ(mf[1], 0.0);
  EXPECT_EQ(mf[6], 1.0);
}

TEST(Mastery, AlternatingOutcomesHaveZeroTrend) {
  // OLS on 1..10 for W,L,... is -1/33, L,W,... is +1/33: symmetric, not zero.
  // The flat pattern W,L,L,W,W,L,L,W,... balanced around the centre is zero.
  const auto mf = mastery_features(steps_from({1, 0, 0, 1, 1, 0, 0, 1, 1, 0}, std::vector<int>(10, 0)));
  EXPECT_NEAR(mf[4], lstsq_slope({1, 0, 0, 1, 1, 0, 0, 1, 1, 0}), 1e-12);
  const auto alt = mastery_features(steps_from({1, 0, 1, 0, 1, 0, 1, 0, 1, 0}, std::vector<int>(10, 0)));
  EXPECT_NEAR(alt[4], -1.0 / 33.0, 1e-15);
}

TEST(Mastery, MatchesIndependentOracleOnRandomWindows) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> out(10), decks(10);
    for (int i = 0; i < 10; ++i) {
      out[i] = static_cast<int>(rng() % 2);
      decks[i] = i == 0 ? 0 : (rng() % 3 == 0 ? static_cast<int>(rng() % 4) : decks[i - 1]);
    }
    const auto s = steps_from(out, decks);
    const auto mf = mastery_features(s);
    double wins = 0, sw = 0, el = 0;
    std::vector<double> y, cd;
    std::map<int, double> use;
    for (int i = 0; i < 10; ++i) {
      wins += out[i];
      el += s[i].avg_elixir;
      y.push_back(out[i]);
      cd.push_back(s[i].crown_diff);
      use[decks[i]] += 0.1;
      if (i > 0 && decks[i] != decks[i - 1]) sw += 1;
    }
    double hhi = 0;
    for (auto& [d, p] : use) hhi += p * p;
    EXPECT_EQ(mf[0], wins / 10.0);
    EXPECT_EQ(mf[1], sw / 9.0);
    EXPECT_NEAR(mf[2], el / 10.0, 1e-15);
    EXPECT_EQ(mf[3], (1 - out[7]) + (1 - out[8]) + (1 - out[9]));
    EXPECT_NEAR(mf[4], lstsq_slope(y), 1e-12);
    EXPECT_NEAR(mf[5], lstsq_slope(cd), 1e-12);
    EXPECT_NEAR(mf[6], hhi, 1e-12);
    EXPECT_GE(mf[6], 0.1 - 1e-15);
    EXPECT_LE(mf[6], 1.0);
  }
}

TEST(Window, TargetsFollowTheTransitionTypeRules) {
  const auto pop = fixture::small_population(20, 6);
  const auto seqs = fixture::true_sequences(pop);
  std::array<int, 3> seen{};
  for (const auto& seq : seqs) {
    for (std::size_t s = 0; s + kWindowLength < seq.steps.size(); ++s) {
      const auto w = make_window(seq, s);
      ASSERT_TRUE(w.has_target);
      EXPECT_EQ(w.steps.size(), kWindowLength);
      const auto& cur = seq.steps[s + 9];
      const auto& nx = seq.steps[s + 10];
      const bool dc = nx.deck != cur.deck;
      EXPECT_EQ(w.target.next_dc, dc);
      const int want = !dc ? 0 : (nx.state != cur.state ? 2 : 1);
      EXPECT_EQ(w.target.next_type, want);
      EXPECT_EQ(w.target.next_cd, nx.crown_diff / 3.0);
      EXPECT_EQ(w.target.subtype, seq.subtype);
      seen[want]++;
    }
    const auto last = make_window(seq, seq.steps.size() - kWindowLength);
    EXPECT_FALSE(last.has_target);
    EXPECT_THROW(make_window(seq, seq.steps.size() - kWindowLength + 1), DataError);
  }
  for (int c : seen) EXPECT_GT(c, 0);
}

TEST(Sequence, StepInputsFromMatches) {
  const auto pop = fixture::small_population(1, 2);
  const auto& m = pop.histories[0].matches;
  std::vector<int> states(m.size(), 99);
  states[1] = 4;
  const auto seq = make_sequence("x", m, states, 1);
  EXPECT_EQ(seq.steps[0].state, kUnknownState);
  EXPECT_EQ(seq.steps[1].state, 4);
  EXPECT_EQ(seq.steps[0].log_dt, 0.0);
  EXPECT_EQ(seq.steps[1].log_dt, std::log1p(static_cast<double>(m[1].timestamp - m[0].timestamp)));
  EXPECT_EQ(seq.steps[1].crown_bucket(), m[1].crown_diff + 3);
  EXPECT_THROW(make_sequence("x", m, std::vector<int>(3, 0), 0), DataError);
}
