#include "deckshift/matchlog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "json.hpp"

namespace deckshift {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const json& require(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(line, std::string("missing field '") + field + "'");
  return *it;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return in;
}

}  // namespace

std::string_view to_string(FuncType t) {
  switch (t) {
    case FuncType::WinCondition: return "win_condition";
    case FuncType::Spell: return "spell";
    case FuncType::Building: return "building";
    case FuncType::Support: return "support";
  }
  return "support";
}

std::optional<FuncType> parse_func_type(std::string_view s) {
  if (s == "win_condition") return FuncType::WinCondition;
  if (s == "spell") return FuncType::Spell;
  if (s == "building") return FuncType::Building;
  if (s == "support") return FuncType::Support;
  return std::nullopt;
}

std::string_view to_string(Outcome o) { return o == Outcome::Win ? "win" : "loss"; }

std::string_view to_string(Mode m) {
  return m == Mode::Pvp ? "pvp" : "path_of_legend";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

CardIndex CardCatalog::add(Card card) {
  if (card.elixir_cost < 1 || card.elixir_cost > 9)
    throw DataError("card '" + card.card_id + "' has elixir cost outside [1,9]");
  if (card.card_id.empty()) throw DataError("card id must be non-empty");
  if (index_.count(card.card_id)) throw DataError("duplicate card id '" + card.card_id + "'");
  const auto idx = static_cast<CardIndex>(cards_.size());
  index_.emplace(card.card_id, idx);
  cards_.push_back(std::move(card));
  return idx;
}

std::optional<CardIndex> CardCatalog::find(std::string_view card_id) const {
  auto it = index_.find(std::string(card_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Deck CardCatalog::make_deck(std::span<const std::string> card_ids) const {
  if (card_ids.size() != kDeckSize)
    throw DataError("deck must have exactly 8 cards, got " + std::to_string(card_ids.size()));
  Deck deck{};
  for (std::size_t i = 0; i < kDeckSize; ++i) {
    auto idx = find(card_ids[i]);
    if (!idx) throw DataError("unknown card id '" + card_ids[i] + "'");
    deck[i] = *idx;
  }
  deck = sorted_deck(deck);
  if (std::adjacent_find(deck.begin(), deck.end()) != deck.end())
    throw DataError("deck contains duplicate cards");
  return deck;
}

double CardCatalog::average_elixir(const Deck& deck) const {
  int total = 0;
  for (auto c : deck) total += at(c).elixir_cost;
  return static_cast<double>(total) / static_cast<double>(kDeckSize);
}

bool CardCatalog::operator==(const CardCatalog& o) const {
  if (cards_.size() != o.cards_.size()) return false;
  for (std::size_t i = 0; i < cards_.size(); ++i) {
    const auto& a = cards_[i];
    const auto& b = o.cards_[i];
    if (a.card_id != b.card_id || a.elixir_cost != b.elixir_cost || a.func_type != b.func_type)
      return false;
  }
  return true;
}

Deck sorted_deck(Deck deck) {
  std::sort(deck.begin(), deck.end());
  return deck;
}

PostOutcomeCounts post_outcome_counts(const PlayerHistory& h) {
  PostOutcomeCounts c;
  for (std::size_t t = 1; t < h.matches.size(); ++t) {
    if (h.matches[t - 1].win())
      ++c.post_win;
    else
      ++c.post_loss;
  }
  return c;
}

std::vector<PlayerHistory> parse_matchlog(std::istream& in, const CardCatalog& catalog,
                                          IngestStats* stats) {
  IngestStats local;
  std::map<std::string, std::vector<MatchRecord>> grouped;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++local.lines;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(lineno, "record must be a JSON object");
    try {
      const auto& mode_v = require(obj, "mode", lineno);
      if (!mode_v.is_string()) throw ParseError(lineno, "'mode' must be a string");
      const auto mode_s = mode_v.get<std::string>();
      Mode mode;
      if (mode_s == "pvp") {
        mode = Mode::Pvp;
      } else if (mode_s == "path_of_legend") {
        mode = Mode::PathOfLegend;
      } else {
        ++local.skipped_other_modes;
        continue;
      }

      MatchRecord m;
      m.mode = mode;
      const auto& pid = require(obj, "player_id", lineno);
      if (!pid.is_string() || pid.get<std::string>().empty())
        throw ParseError(lineno, "'player_id' must be a non-empty string");
      m.player_id = pid.get<std::string>();

      const auto& ts = require(obj, "timestamp", lineno);
      if (!ts.is_number_integer()) throw ParseError(lineno, "'timestamp' must be an integer");
      m.timestamp = ts.get<std::int64_t>();

      const auto& deck_v = require(obj, "deck", lineno);
      if (!deck_v.is_array()) throw ParseError(lineno, "'deck' must be an array");
      std::vector<std::string> ids;
      for (const auto& c : deck_v) {
        if (!c.is_string()) throw ParseError(lineno, "'deck' entries must be strings");
        ids.push_back(c.get<std::string>());
      }
      try {
        m.deck = catalog.make_deck(ids);
      } catch (const DataError& e) {
        throw ParseError(lineno, std::string("deck: ") + e.what());
      }
      m.avg_elixir = catalog.average_elixir(m.deck);

      const auto& out_v = require(obj, "outcome", lineno);
      const auto out_s = out_v.is_string() ? out_v.get<std::string>() : std::string();
      if (out_s == "win")
        m.outcome = Outcome::Win;
      else if (out_s == "loss")
        m.outcome = Outcome::Loss;
      else
        throw ParseError(lineno, "'outcome' must be \"win\" or \"loss\"");

      const auto& cd = require(obj, "crown_diff", lineno);
      if (!cd.is_number_integer()) throw ParseError(lineno, "'crown_diff' must be an integer");
      m.crown_diff = cd.get<int>();
      if (m.crown_diff < -3 || m.crown_diff > 3)
        throw ParseError(lineno, "'crown_diff' outside [-3,3]");
      if (m.crown_diff == 0) throw ParseError(lineno, "'crown_diff' of 0 (tie) is not allowed");
      if (m.win() != (m.crown_diff > 0))
        throw ParseError(lineno, "'crown_diff' sign disagrees with outcome");

      grouped[m.player_id].push_back(std::move(m));
      ++local.records;
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }

  std::vector<PlayerHistory> out;
  out.reserve(grouped.size());
  for (auto& [pid, matches] : grouped) {
    std::stable_sort(matches.begin(), matches.end(),
                     [](const MatchRecord& a, const MatchRecord& b) {
                       return a.timestamp < b.timestamp;
                     });
    for (std::size_t i = 0; i < matches.size(); ++i) matches[i].seq_index = i;
    out.push_back({pid, std::move(matches)});
  }
  if (stats) *stats = local;
  return out;
}

std::vector<PlayerHistory> load_matchlog(const std::string& path,
                                         const CardCatalog& catalog, IngestStats* stats) {
  auto in = open_in(path);
  return parse_matchlog(in, catalog, stats);
}

void write_matchlog(std::ostream& out, const std::vector<PlayerHistory>& histories,
                    const CardCatalog& catalog) {
  for (const auto& h : histories) {
    for (const auto& m : h.matches) {
      ordered_json obj;
      obj["player_id"] = m.player_id;
      obj["timestamp"] = m.timestamp;
      auto deck = ordered_json::array();
      for (auto c : m.deck) deck.push_back(catalog.at(c).card_id);
      obj["deck"] = std::move(deck);
      obj["outcome"] = std::string(to_string(m.outcome));
      obj["crown_diff"] = m.crown_diff;
      obj["mode"] = std::string(to_string(m.mode));
      out << obj.dump() << '\n';
    }
  }
}

void save_matchlog(const std::string& path, const std::vector<PlayerHistory>& histories,
                   const CardCatalog& catalog) {
  auto out = open_out(path);
  write_matchlog(out, histories, catalog);
}

CardCatalog parse_catalog(std::istream& in) {
  CardCatalog catalog;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      Card card;
      card.card_id = require(obj, "card_id", lineno).get<std::string>();
      card.elixir_cost = require(obj, "elixir_cost", lineno).get<int>();
      auto ft = parse_func_type(require(obj, "func_type", lineno).get<std::string>());
      if (!ft) throw ParseError(lineno, "unknown func_type");
      card.func_type = *ft;
      catalog.add(std::move(card));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const DataError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return catalog;
}

CardCatalog load_catalog(const std::string& path) {
  auto in = open_in(path);
  return parse_catalog(in);
}

void write_catalog(std::ostream& out, const CardCatalog& catalog) {
  for (const auto& c : catalog.cards()) {
    ordered_json obj;
    obj["card_id"] = c.card_id;
    obj["elixir_cost"] = c.elixir_cost;
    obj["func_type"] = std::string(to_string(c.func_type));
    out << obj.dump() << '\n';
  }
}

void save_catalog(const std::string& path, const CardCatalog& catalog) {
  auto out = open_out(path);
  write_catalog(out, catalog);
}

std::vector<PlayerHistory> apply_filters(const std::vector<PlayerHistory>& histories,
                                         const FilterConfig& config, FilterReport* report) {
  FilterReport r;
  r.input_players = histories.size();
  std::vector<PlayerHistory> kept;
  for (const auto& h : histories) {
    if (h.size() < config.min_matches) {
      ++r.removed_min_matches;
      continue;
    }
    const auto counts = post_outcome_counts(h);
    if (counts.post_loss < config.min_post_loss) {
      ++r.removed_post_loss;
      continue;
    }
    if (counts.post_win < config.min_post_win) {
      ++r.removed_post_win;
      continue;
    }
    kept.push_back(h);
  }
  r.retained = kept.size();
  if (report) *report = r;
  return kept;
}

void write_filter_report(std::ostream& out, const FilterReport& r) {
  out << "input_players\t" << r.input_players << '\n'
      << "removed_min_matches\t" << r.removed_min_matches << '\n'
      << "removed_post_loss\t" << r.removed_post_loss << '\n'
      << "removed_post_win\t" << r.removed_post_win << '\n'
      << "retained\t" << r.retained << '\n';
}

std::size_t SegmentBounds::begin(Split s) const {
  switch (s) {
    case Split::Train: return 0;
    case Split::Val: return train_end;
    case Split::Test: return val_end;
  }
  return 0;
}

std::size_t SegmentBounds::end(Split s) const {
  switch (s) {
    case Split::Train: return train_end;
    case Split::Val: return val_end;
    case Split::Test: return size;
  }
  return size;
}

Split SegmentBounds::split_of(std::size_t i) const {
  if (i < train_end) return Split::Train;
  if (i < val_end) return Split::Val;
  return Split::Test;
}

SegmentBounds split_bounds(std::size_t n, const SplitRatios& ratios) {
  // The epsilon guards against 0.8 * n landing a hair below an integer.
  const auto fl = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  SegmentBounds b;
  b.size = n;
  b.train_end = std::min(n, fl(ratios.train));
  b.val_end = std::min(n, b.train_end + fl(ratios.val));
  return b;
}

SplitAssignment make_splits(const std::vector<PlayerHistory>& histories,
                            const SplitRatios& ratios) {
  SplitAssignment a;
  a.players.reserve(histories.size());
  for (const auto& h : histories) a.players.push_back(split_bounds(h.size(), ratios));
  return a;
}

std::vector<std::size_t> window_starts(std::size_t seg_begin, std::size_t seg_end,
                                       std::size_t k) {
  std::vector<std::size_t> out;
  if (seg_end <= seg_begin || seg_end - seg_begin < k + 1) return out;
  for (std::size_t s = seg_begin; s + k < seg_end; ++s) out.push_back(s);
  return out;
}

std::vector<WindowRef> extract_windows(const PlayerHistory& history, std::size_t player,
                                       std::size_t seg_begin, std::size_t seg_end,
                                       std::size_t k) {
  std::vector<WindowRef> out;
  for (auto s : window_starts(seg_begin, std::min(seg_end, history.size()), k))
    out.push_back({player, s});
  return out;
}

std::vector<WindowRef> extract_windows(const std::vector<PlayerHistory>& histories,
                                       const SplitAssignment& splits, Split split,
                                       std::size_t k) {
  std::vector<WindowRef> out;
  for (std::size_t p = 0; p < histories.size(); ++p) {
    const auto& b = splits.players.at(p);
    auto w = extract_windows(histories[p], p, b.begin(split), b.end(split), k);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

}  // namespace deckshift
