#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "deckshift/transition.hpp"
#include "fixtures.hpp"

using namespace deckshift;

namespace {

PlayerHistory scripted(const std::string& outcomes, std::size_t switch_at = 0) {
  PlayerHistory h{"p", {}};
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    MatchRecord m;
    m.outcome = outcomes[i] == 'W' ? Outcome::Win : Outcome::Loss;
    m.crown_diff = m.win() ? 1 : -1;
    m.deck = {0, 1, 2, 3, 4, 5, 6, static_cast<CardIndex>(switch_at && i >= switch_at ? 9 : 7)};
    m.seq_index = i;
    h.matches.push_back(m);
  }
  return h;
}

TransitionEvent stay(int s, int u, int b, double y) {
  TransitionEvent e;
  e.from_state = e.to_state = s;
  e.subtype = u;
  e.bucket = b;
  e.y_tq = y;
  return e;
}

}  // namespace

TEST(Buckets, HalfOpenBoundaries) {
  EXPECT_EQ(wr_bucket(0.0), 0);
  EXPECT_EQ(wr_bucket(0.29), 0);
  EXPECT_EQ(wr_bucket(0.3), 1);
  EXPECT_EQ(wr_bucket(0.45), 2);
  EXPECT_EQ(wr_bucket(0.52), 2);
  EXPECT_EQ(wr_bucket(0.55), 3);
  EXPECT_EQ(wr_bucket(0.7), 4);
  EXPECT_EQ(wr_bucket(1.0), 4);
}

TEST(Events, SymmetricWindowGivesZero) {
  const auto h = scripted("WWWWWWLLLL" "WWWWWWLLLL");
  const std::vector<int> states(20, 3);
  const auto e = make_event(h, states, 0, 20, {});
  ASSERT_TRUE(e);
  EXPECT_EQ(e->y_tq, 0.0);
  EXPECT_EQ(e->action, Action::Stay);
  EXPECT_EQ(e->to_state, e->from_state);
}

TEST(Events, FortyToSixtyIsPlusTwenty) {
  const auto h = scripted("WWWWLLLLLL" "WWWWWWLLLL", 10);
  std::vector<int> states(20, 3);
  for (int i = 10; i < 20; ++i) states[i] = 8;
  const auto e = make_event(h, states, 0, 20, {});
  ASSERT_TRUE(e);
  EXPECT_EQ(e->wr_current, 0.4);
  EXPECT_EQ(e->wr_next, 0.6);
  EXPECT_EQ(e->y_tq, 0.6 - 0.4);
  EXPECT_NEAR(e->y_tq, 0.2, 1e-15);
  EXPECT_EQ(e->action, Action::Switch);
  EXPECT_EQ(e->from_state, 3);
  EXPECT_EQ(e->to_state, 8);
  EXPECT_EQ(e->bucket, 1);
}

TEST(Events, ShortTailsAreDropped) {
  const auto h = scripted("WWWWWWWWWW" "LLLL" "WWWWWW");
  const std::vector<int> states(20, 0);
  EXPECT_FALSE(make_event(h, states, 0, 14, {}));
  const auto e = make_event(h, states, 0, 15, {});
  ASSERT_TRUE(e);
  EXPECT_EQ(e->next_count, 5u);
  EXPECT_EQ(e->wins_next, 1u);
}

TEST(Events, TargetMatchesBruteForceOnFixture) {
  const auto f = fixture::event_fixture();
  ASSERT_GE(f.events.size(), 500u);
  for (std::size_t i = 0; i < 500; ++i) {
    const auto& e = f.events[i];
    const auto& m = f.pop.histories[e.player].matches;
    const auto& b = f.splits.players[e.player];
    EXPECT_EQ(b.split_of(e.start), e.split);
    EXPECT_EQ(b.split_of(e.boundary), e.split);
    double wc = 0, wn = 0, n = 0;
    for (std::size_t t = e.boundary - 10; t < e.boundary; ++t) wc += m[t].win() ? 1 : 0;
    for (std::size_t t = e.boundary; t < std::min(e.boundary + 10, b.end(e.split)); ++t) {
      wn += m[t].win() ? 1 : 0;
      n += 1;
    }
    ASSERT_GE(n, 5);
    EXPECT_EQ(e.y_tq, wn / n - wc / 10.0);
    EXPECT_EQ(e.is_switch(), m[e.boundary].deck != m[e.boundary - 1].deck);
    EXPECT_EQ(e.from_state, f.states[e.player][e.boundary - 1]);
    EXPECT_EQ(e.to_state, e.is_switch() ? f.states[e.player][e.boundary] : e.from_state);
    EXPECT_EQ(e.bucket, wr_bucket(wc / 10.0));
    EXPECT_GE(e.y_tq, -1.0);
    EXPECT_LE(e.y_tq, 1.0);
  }
}

TEST(Baseline, EqualsNaiveGroupByMean) {
  auto f = fixture::event_fixture();
  const auto table = StayBaselineTable::build(f.events);
  std::map<std::tuple<int, int, int>, std::vector<double>> cells;
  std::map<std::pair<int, int>, std::vector<double>> su;
  std::vector<double> all;
  for (const auto& e : f.events) {
    if (e.split != Split::Train || e.action != Action::Stay) continue;
    cells[{e.from_state, e.subtype, e.bucket}].push_back(e.y_tq);
    su[{e.from_state, e.subtype}].push_back(e.y_tq);
    all.push_back(e.y_tq);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  for (int s = 0; s < kNumStates; ++s)
    for (int u = 0; u < kNumSubtypes; ++u)
      for (int b = 0; b < kNumWrBuckets; ++b) {
        const auto it = cells.find({s, u, b});
        const std::size_t n = it == cells.end() ? 0 : it->second.size();
        EXPECT_EQ(table.cell(s, u, b).support, n);
        double want;
        if (n >= 5) {
          want = mean(it->second);
          EXPECT_EQ(table.level(s, u, b), 0);
        } else if (su.count({s, u}) && su[{s, u}].size() >= 5) {
          want = mean(su[{s, u}]);
          EXPECT_EQ(table.level(s, u, b), 1);
        } else {
          want = mean(all);
          EXPECT_EQ(table.level(s, u, b), 2);
        }
        EXPECT_EQ(table.value(s, u, b), want);
      }
  attach_net_effects(f.events, table);
  for (const auto& e : f.events) {
    EXPECT_EQ(e.delta_net, e.y_tq - table.value(e.from_state, e.subtype, e.bucket));
    EXPECT_EQ(e.delta_net, net_effect(e, table));
  }
}

TEST(Baseline, SmallCellsFallBack) {
  std::vector<TransitionEvent> ev;
  ev.push_back(stay(2, 1, 3, 0.1));
  ev.push_back(stay(2, 1, 3, -0.1));
  for (int i = 0; i < 4; ++i) ev.push_back(stay(2, 1, 0, 0.3));
  for (int i = 0; i < 5; ++i) ev.push_back(stay(5, 0, 1, -0.2));
  const auto t = StayBaselineTable::build(ev);
  EXPECT_EQ(t.cell(2, 1, 3).mean(), 0.0);
  EXPECT_EQ(t.level(2, 1, 3), 1);
  EXPECT_NEAR(t.value(2, 1, 3), 1.2 / 6.0, 1e-15);
  EXPECT_EQ(t.level(5, 0, 1), 0);
  EXPECT_EQ(t.level(9, 2, 2), 2);
  EXPECT_EQ(t.value(9, 2, 2), t.global().mean());
}

TEST(Baseline, ValTestAndSwitchEventsAreIgnored) {
  std::vector<TransitionEvent> ev(6, stay(1, 1, 1, 0.05));
  ev[5].split = Split::Val;
  ev[5].y_tq = 9;
  auto sw = stay(1, 1, 1, 0.9);
  sw.action = Action::Switch;
  ev.push_back(sw);
  const auto t = StayBaselineTable::build(ev);
  EXPECT_EQ(t.cell(1, 1, 1).support, 5u);
  EXPECT_EQ(t.value(1, 1, 1), 0.05 * 5 / 5);
  EXPECT_THROW(StayBaselineTable::build({sw}), DataError);
}

TEST(NetEffect, UnderperformingSwitch) {
  std::vector<TransitionEvent> ev(5, stay(0, 1, 2, 0.08));
  const auto t = StayBaselineTable::build(ev);
  auto e = stay(0, 1, 2, 0.05);
  e.action = Action::Switch;
  EXPECT_NEAR(net_effect(e, t), -0.03, 1e-15);
  EXPECT_EQ(net_effect(ev[0], t), 0.0);
}

TEST(Labels, RuleIsIdenticalAcrossSplits) {
  auto f = fixture::event_fixture(80, 12);
  attach_net_effects(f.events, StayBaselineTable::build(f.events));
  const auto set = build_timing_labels(f.events, 5);
  std::size_t val = 0, test = 0, train_sw = 0, train_stay = 0, train_sw_total = 0;
  for (const auto& e : f.events) {
    val += e.split == Split::Val;
    test += e.split == Split::Test;
    train_sw_total += e.split == Split::Train && e.is_switch();
  }
  EXPECT_EQ(set.val.size(), val);
  EXPECT_EQ(set.test.size(), test);
  for (const auto* part : {&set.train, &set.val, &set.test})
    for (const auto& l : *part) {
      const auto& e = f.events[l.event];
      EXPECT_EQ(l.label, e.is_switch() && e.delta_net > 0.0 ? 1 : 0);
      if (part == &set.train) (e.is_switch() ? train_sw : train_stay)++;
    }
  EXPECT_EQ(train_sw, train_sw_total);
  EXPECT_EQ(train_stay, train_sw_total);
  EXPECT_FALSE(set.stay_shortfall);

  const auto again = build_timing_labels(f.events, 5);
  const auto other = build_timing_labels(f.events, 6);
  ASSERT_EQ(again.train.size(), set.train.size());
  for (std::size_t i = 0; i < set.train.size(); ++i) EXPECT_EQ(again.train[i].event, set.train[i].event);
  std::set<std::size_t> a, b;
  for (const auto& l : set.train) a.insert(l.event);
  for (const auto& l : other.train) b.insert(l.event);
  EXPECT_NE(a, b);
  for (const auto& l : other.train) EXPECT_EQ(l.label, timing_label(f.events[l.event]));
}

TEST(Labels, UndersamplingToSwitchCount) {
  std::vector<TransitionEvent> ev;
  for (int i = 0; i < 1000; ++i) ev.push_back(stay(0, 1, 2, 0));
  for (int i = 0; i < 100; ++i) {
    auto e = stay(0, 1, 2, 0);
    e.action = Action::Switch;
    e.delta_net = i % 2 ? 0.1 : 0.0;
    ev.push_back(e);
  }
  for (int i = 0; i < 1000; ++i) {
    auto e = stay(0, 1, 2, 0);
    e.split = Split::Val;
    ev.push_back(e);
  }
  const auto set = build_timing_labels(ev, 1);
  EXPECT_EQ(set.train.size(), 200u);
  EXPECT_EQ(set.val.size(), 1000u);
  std::size_t pos = 0;
  for (const auto& l : set.train) pos += l.label;
  EXPECT_EQ(pos, 50u);
  ev.resize(1000 + 100);
  ev.erase(ev.begin(), ev.begin() + 950);
  const auto short_set = build_timing_labels(ev, 1);
  EXPECT_TRUE(short_set.stay_shortfall);
  EXPECT_EQ(short_set.train.size(), 150u);
}

TEST(Events, FlatFileRoundTrip) {
  auto f = fixture::event_fixture(20, 3);
  const auto table = StayBaselineTable::build(f.events);
  attach_net_effects(f.events, table);
  std::stringstream io;
  write_events(io, f.events);
  const auto back = read_events(io);
  ASSERT_EQ(back.size(), f.events.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].player_id, f.events[i].player_id);
    EXPECT_EQ(back[i].y_tq, f.events[i].y_tq);
    EXPECT_EQ(back[i].delta_net, f.events[i].delta_net);
    EXPECT_EQ(back[i].action, f.events[i].action);
    EXPECT_EQ(back[i].split, f.events[i].split);
  }
  std::stringstream tio;
  table.write(tio);
  EXPECT_TRUE(StayBaselineTable::read(tio) == table);
}
