#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "deckshift/matchlog.hpp"
#include "fixtures.hpp"

using namespace deckshift;

namespace {

CardCatalog nine_cards() {
  CardCatalog c;
  for (int i = 0; i < 9; ++i) c.add({"c" + std::to_string(i), 1 + i % 9, FuncType::Support});
  return c;
}

std::string record(const std::string& pid, long ts, const std::string& outcome, int cd,
                   const std::string& mode = "pvp", const std::string& deck =
                       R"(["c0","c1","c2","c3","c4","c5","c6","c7"])") {
  return R"({"player_id":")" + pid + R"(","timestamp":)" + std::to_string(ts) + R"(,"deck":)" + deck +
         R"(,"outcome":")" + outcome + R"(","crown_diff":)" + std::to_string(cd) + R"(,"mode":")" + mode + "\"}";
}

std::size_t parse_error_line(const std::string& text) {
  const auto cat = nine_cards();
  std::istringstream in(text);
  try {
    parse_matchlog(in, cat);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Catalog, RejectsBadCards) {
  CardCatalog c;
  c.add({"a", 3, FuncType::Spell});
  EXPECT_THROW(c.add({"a", 3, FuncType::Spell}), DataError);
  EXPECT_THROW(c.add({"b", 0, FuncType::Spell}), DataError);
  EXPECT_THROW(c.add({"b", 10, FuncType::Spell}), DataError);
}

TEST(Catalog, DecksAreSetsOfEight) {
  const auto c = nine_cards();
  const std::vector<std::string> a{"c7", "c1", "c2", "c3", "c4", "c5", "c6", "c0"};
  const std::vector<std::string> b{"c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7"};
  EXPECT_EQ(c.make_deck(a), c.make_deck(b));
  EXPECT_THROW(c.make_deck(std::vector<std::string>(a.begin(), a.begin() + 7)), DataError);
  auto dup = b;
  dup[7] = "c0";
  EXPECT_THROW(c.make_deck(dup), DataError);
  auto unknown = b;
  unknown[0] = "zz";
  EXPECT_THROW(c.make_deck(unknown), DataError);
  EXPECT_DOUBLE_EQ(c.average_elixir(c.make_deck(b)), (1 + 2 + 3 + 4 + 5 + 6 + 7 + 8) / 8.0);
}

TEST(MatchLog, ParseErrorsCarryTheLine) {
  const auto ok = record("p", 1, "win", 2);
  EXPECT_EQ(parse_error_line(ok + "\n\n" + record("p", 2, "win", -1) + "\n"), 3u);
  EXPECT_EQ(parse_error_line(ok + "\n" + record("p", 2, "win", 0) + "\n"), 2u);
  EXPECT_EQ(parse_error_line(ok + "\n" + record("p", 2, "loss", -4) + "\n"), 2u);
  EXPECT_EQ(parse_error_line(record("p", 2, "draw", 1) + "\n"), 1u);
  EXPECT_EQ(parse_error_line(ok + "\n{not json\n"), 2u);
  EXPECT_EQ(parse_error_line(record("p", 1, "win", 1, "pvp", R"(["c0","c1","c2","c3","c4","c5","c6"])")), 1u);
  EXPECT_EQ(parse_error_line(R"({"player_id":"p","timestamp":1})"), 1u);
  EXPECT_EQ(parse_error_line(ok + "\n"), 0u);
}

TEST(MatchLog, OtherModesAreSkippedAndCounted) {
  const auto cat = nine_cards();
  std::istringstream in(record("p", 1, "win", 1) + "\n" + record("p", 2, "loss", -1, "2v2") + "\n" +
                        record("p", 3, "loss", -2, "path_of_legend") + "\n");
  IngestStats stats;
  const auto h = parse_matchlog(in, cat, &stats);
  EXPECT_EQ(stats.records, 2u);
  EXPECT_EQ(stats.skipped_other_modes, 1u);
  ASSERT_EQ(h.size(), 1u);
  EXPECT_EQ(h[0].matches[1].mode, Mode::PathOfLegend);
}

TEST(MatchLog, GroupsAndOrdersByTimestamp) {
  const auto cat = nine_cards();
  std::istringstream in(record("b", 5, "win", 1) + "\n" + record("a", 9, "loss", -1) + "\n" +
                        record("b", 2, "loss", -3) + "\n");
  const auto h = parse_matchlog(in, cat);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].player_id, "a");
  EXPECT_EQ(h[1].matches[0].timestamp, 2);
  EXPECT_EQ(h[1].matches[1].seq_index, 1u);
}

TEST(MatchLog, SaveLoadIsIdentity) {
  const auto pop = fixture::small_population(25, 4);
  std::stringstream cat_io, log_io;
  write_catalog(cat_io, pop.catalog);
  const auto cat = parse_catalog(cat_io);
  EXPECT_TRUE(cat == pop.catalog);
  write_matchlog(log_io, pop.histories, cat);
  const auto back = parse_matchlog(log_io, cat);
  EXPECT_EQ(back, pop.histories);
}

TEST(Filters, RetainedPlayersSatisfyTheRulesAndFilteringIsIdempotent) {
  const auto pop = fixture::small_population(80, 9, 5, 40);
  FilterReport rep;
  const auto once = apply_filters(pop.histories, {}, &rep);
  EXPECT_EQ(rep.input_players, 80u);
  EXPECT_EQ(rep.retained + rep.removed_min_matches + rep.removed_post_loss + rep.removed_post_win, 80u);
  EXPECT_GT(rep.removed_min_matches, 0u);
  for (const auto& h : once) {
    std::size_t post_loss = 0, post_win = 0;
    for (std::size_t t = 1; t < h.matches.size(); ++t) (h.matches[t - 1].win() ? post_win : post_loss)++;
    EXPECT_GE(h.size(), 20u);
    EXPECT_GE(post_loss, 5u);
    EXPECT_GE(post_win, 5u);
  }
  EXPECT_EQ(apply_filters(once), once);
}

TEST(Filters, FirstFailingRuleIsCharged) {
  PlayerHistory h{"p", {}};
  for (int i = 0; i < 25; ++i) {
    MatchRecord m;
    m.outcome = Outcome::Win;
    m.crown_diff = 1;
    h.matches.push_back(m);
  }
  FilterReport rep;
  EXPECT_TRUE(apply_filters({h}, {}, &rep).empty());
  EXPECT_EQ(rep.removed_post_loss, 1u);
  EXPECT_EQ(rep.removed_post_win, 0u);
}

TEST(Splits, ChronologicalEightyTenTen) {
  const auto b = split_bounds(200);
  EXPECT_EQ(b.train_end, 160u);
  EXPECT_EQ(b.val_end, 180u);
  EXPECT_EQ(b.split_of(159), Split::Train);
  EXPECT_EQ(b.split_of(160), Split::Val);
  EXPECT_EQ(b.split_of(180), Split::Test);
  const auto c = split_bounds(25);
  EXPECT_EQ(c.train_end, 20u);
  EXPECT_EQ(c.val_end, 22u);
}

TEST(Windows, CountIsLengthMinusK) {
  EXPECT_EQ(window_starts(0, 20, 10).size(), 10u);
  EXPECT_EQ(window_starts(0, 10, 10).size(), 0u);
  EXPECT_EQ(window_starts(5, 16, 10), (std::vector<std::size_t>{5}));
}

TEST(Windows, NeverCrossSegmentsAndAreContiguous) {
  const auto pop = fixture::small_population(30, 2, 40, 90);
  const auto splits = make_splits(pop.histories);
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const auto ws = extract_windows(pop.histories, splits, s, 10);
    std::map<std::size_t, std::vector<std::size_t>> per_player;
    for (const auto& w : ws) {
      const auto& b = splits.players[w.player];
      EXPECT_GE(w.start, b.begin(s));
      EXPECT_LT(w.start + 10, b.end(s));
      per_player[w.player].push_back(w.start);
    }
    for (auto& [p, starts] : per_player) {
      EXPECT_TRUE(std::is_sorted(starts.begin(), starts.end()));
      EXPECT_EQ(starts.back() - starts.front() + 1, starts.size());
      EXPECT_EQ(starts.front(), splits.players[p].begin(s));
    }
  }
}
