#pragma once

// Match-log data model: card catalog, per-player chronological histories,
// ingestion filters, chronological splits and window extraction.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deckshift/common.hpp"

namespace deckshift {

enum class FuncType { WinCondition, Spell, Building, Support };

std::string_view to_string(FuncType t);
std::optional<FuncType> parse_func_type(std::string_view s);

struct Card {
  std::string card_id;
  int elixir_cost = 1;  // 1..9
  FuncType func_type = FuncType::Support;
};

using CardIndex = std::uint16_t;

// A deck is a set of eight catalog indices, kept sorted ascending so that
// equality of decks is equality of sets.
using Deck = std::array<CardIndex, kDeckSize>;

class CardCatalog {
 public:
  // Throws DataError on duplicate ids or out-of-range costs.
  CardIndex add(Card card);

  std::optional<CardIndex> find(std::string_view card_id) const;
  const Card& at(CardIndex idx) const { return cards_.at(idx); }
  std::size_t size() const { return cards_.size(); }
  const std::vector<Card>& cards() const { return cards_; }

  // Builds a deck from card ids; throws DataError naming the problem when
  // the ids are unknown, duplicated, or not exactly eight.
  Deck make_deck(std::span<const std::string> card_ids) const;
  double average_elixir(const Deck& deck) const;

  bool operator==(const CardCatalog& o) const;

 private:
  std::vector<Card> cards_;
  std::unordered_map<std::string, CardIndex> index_;
};

Deck sorted_deck(Deck deck);

enum class Outcome : std::uint8_t { Loss = 0, Win = 1 };
enum class Mode : std::uint8_t { Pvp, PathOfLegend };

std::string_view to_string(Outcome o);
std::string_view to_string(Mode m);

struct MatchRecord {
  std::string player_id;
  std::size_t seq_index = 0;
  std::int64_t timestamp = 0;
  Deck deck{};
  double avg_elixir = 0.0;
  Outcome outcome = Outcome::Loss;
  int crown_diff = -1;  // [-3,3], never 0, sign agrees with outcome
  Mode mode = Mode::Pvp;

  bool win() const { return outcome == Outcome::Win; }
  bool operator==(const MatchRecord&) const = default;
};

struct PlayerHistory {
  std::string player_id;
  std::vector<MatchRecord> matches;

  std::size_t size() const { return matches.size(); }
  // dc_t: deck at t differs from deck at t-1; false for t == 0.
  bool deck_changed(std::size_t t) const {
    return t > 0 && matches[t].deck != matches[t - 1].deck;
  }
  bool operator==(const PlayerHistory&) const = default;
};

// Counts of matches whose immediately preceding match was a loss / a win.
struct PostOutcomeCounts {
  std::size_t post_loss = 0;
  std::size_t post_win = 0;
};
PostOutcomeCounts post_outcome_counts(const PlayerHistory& h);

struct IngestStats {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t skipped_other_modes = 0;
};

// Parses a line-delimited JSON match log. Records are grouped by player
// (players ordered by id), stably sorted by timestamp and given seq_index.
// Malformed lines raise ParseError with the line number; matches in modes
// other than pvp / path_of_legend are skipped and counted.
std::vector<PlayerHistory> parse_matchlog(std::istream& in, const CardCatalog& catalog,
                                          IngestStats* stats = nullptr);
std::vector<PlayerHistory> load_matchlog(const std::string& path,
                                         const CardCatalog& catalog,
                                         IngestStats* stats = nullptr);
void write_matchlog(std::ostream& out, const std::vector<PlayerHistory>& histories,
                    const CardCatalog& catalog);
void save_matchlog(const std::string& path, const std::vector<PlayerHistory>& histories,
                   const CardCatalog& catalog);

CardCatalog parse_catalog(std::istream& in);
CardCatalog load_catalog(const std::string& path);
void write_catalog(std::ostream& out, const CardCatalog& catalog);
void save_catalog(const std::string& path, const CardCatalog& catalog);

struct FilterConfig {
  std::size_t min_matches = 20;
  std::size_t min_post_loss = 5;
  std::size_t min_post_win = 5;
};

// Each removed player is attributed to the first rule it fails.
struct FilterReport {
  std::size_t input_players = 0;
  std::size_t removed_min_matches = 0;
  std::size_t removed_post_loss = 0;
  std::size_t removed_post_win = 0;
  std::size_t retained = 0;
};

std::vector<PlayerHistory> apply_filters(const std::vector<PlayerHistory>& histories,
                                         const FilterConfig& config = {},
                                         FilterReport* report = nullptr);
void write_filter_report(std::ostream& out, const FilterReport& report);

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };
std::string_view to_string(Split s);

// Chronological per-player segment boundaries: train = [0, train_end),
// val = [train_end, val_end), test = [val_end, size).
struct SegmentBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t size = 0;

  std::size_t begin(Split s) const;
  std::size_t end(Split s) const;
  Split split_of(std::size_t match_index) const;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitAssignment {
  std::vector<SegmentBounds> players;  // parallel to the histories
};

SegmentBounds split_bounds(std::size_t n, const SplitRatios& ratios = {});
SplitAssignment make_splits(const std::vector<PlayerHistory>& histories,
                            const SplitRatios& ratios = {});

// Start indices of stride-1 windows of length k inside [seg_begin, seg_end)
// that still have a target match inside the segment: count = len - k.
std::vector<std::size_t> window_starts(std::size_t seg_begin, std::size_t seg_end,
                                       std::size_t k);

struct WindowRef {
  std::size_t player = 0;  // index into the histories
  std::size_t start = 0;   // first match of the window
};

std::vector<WindowRef> extract_windows(const PlayerHistory& history, std::size_t player,
                                       std::size_t seg_begin, std::size_t seg_end,
                                       std::size_t k = 10);
std::vector<WindowRef> extract_windows(const std::vector<PlayerHistory>& histories,
                                       const SplitAssignment& splits, Split split,
                                       std::size_t k = 10);

}  // namespace deckshift
