#include "deckshift/transition.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "deckshift/flatfile.hpp"

namespace deckshift {
namespace {

constexpr int kEventsVersion = 1;
constexpr int kBaselineVersion = 1;

std::size_t cell_index(int s, int u, int b) {
  if (s < 0 || s >= kNumStates || u < 0 || u >= kNumSubtypes || b < 0 || b >= kNumWrBuckets)
    throw DataError("baseline cell out of range");
  return static_cast<std::size_t>((s * kNumSubtypes + u) * kNumWrBuckets + b);
}

std::size_t su_index(int s, int u) {
  return static_cast<std::size_t>(s * kNumSubtypes + u);
}

Split parse_split(const std::string& s, std::size_t line) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParseError(line, "unknown split '" + s + "'");
}

}  // namespace

int wr_bucket(double wr) {
  if (wr < 0.3) return 0;
  if (wr < 0.45) return 1;
  if (wr < 0.55) return 2;
  if (wr < 0.7) return 3;
  return 4;
}

std::string_view to_string(Action a) { return a == Action::Stay ? "stay" : "switch"; }

std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::GoodSwitch: return "good_switch";
    case LabelSource::BadSwitch: return "bad_switch";
    case LabelSource::StayNegative: return "stay_negative";
  }
  return "?";
}

std::optional<TransitionEvent> make_event(const PlayerHistory& h, const std::vector<int>& states,
                                          std::size_t start, std::size_t seg_end,
                                          const TransitionConfig& cfg) {
  const std::size_t boundary = start + cfg.k;
  if (boundary >= seg_end || seg_end > h.size()) return std::nullopt;
  const std::size_t next_end = std::min(seg_end, boundary + cfg.horizon);
  if (next_end - boundary < cfg.min_next) return std::nullopt;
  TransitionEvent e;
  e.player_id = h.player_id;
  e.start = start;
  e.boundary = boundary;
  for (std::size_t t = start; t < boundary; ++t) e.wins_current += h.matches[t].win();
  for (std::size_t t = boundary; t < next_end; ++t) e.wins_next += h.matches[t].win();
  e.next_count = next_end - boundary;
  e.wr_current = static_cast<double>(e.wins_current) / static_cast<double>(cfg.k);
  e.wr_next = static_cast<double>(e.wins_next) / static_cast<double>(e.next_count);
  e.y_tq = e.wr_next - e.wr_current;
  e.bucket = wr_bucket(e.wr_current);
  e.action = h.deck_changed(boundary) ? Action::Switch : Action::Stay;
  e.from_state = states.at(boundary - 1);
  e.to_state = e.is_switch() ? states.at(boundary) : e.from_state;
  return e;
}

std::vector<TransitionEvent> extract_events(const std::vector<PlayerHistory>& histories,
                                            const std::vector<std::vector<int>>& states,
                                            const std::vector<int>& subtypes,
                                            const SplitAssignment& splits,
                                            const TransitionConfig& cfg,
                                            ExtractionReport* report) {
  if (states.size() != histories.size() || subtypes.size() != histories.size() ||
      splits.players.size() != histories.size())
    throw DataError("event extraction inputs are not parallel to the histories");
  std::vector<TransitionEvent> out;
  ExtractionReport rep;
  for (std::size_t p = 0; p < histories.size(); ++p) {
    const auto& bounds = splits.players[p];
    for (Split sp : {Split::Train, Split::Val, Split::Test}) {
      const auto si = static_cast<std::size_t>(sp);
      const auto seg_end = bounds.end(sp);
      for (auto start : window_starts(bounds.begin(sp), seg_end, cfg.k)) {
        auto e = make_event(histories[p], states[p], start, seg_end, cfg);
        if (!e) {
          ++rep.dropped_short_tail[si];
          continue;
        }
        e->player = p;
        e->split = sp;
        e->subtype = subtypes[p];
        ++rep.events[si];
        rep.switches[si] += e->is_switch();
        out.push_back(std::move(*e));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const TransitionEvent& a, const TransitionEvent& b) {
    return a.player != b.player ? a.player < b.player : a.boundary < b.boundary;
  });
  if (report) *report = rep;
  return out;
}

StayBaselineTable StayBaselineTable::build(const std::vector<TransitionEvent>& events) {
  StayBaselineTable t;
  for (const auto& e : events) {
    if (e.split != Split::Train || e.is_switch()) continue;
    auto& c = t.cells_[cell_index(e.from_state, e.subtype, e.bucket)];
    c.sum += e.y_tq;
    ++c.support;
    auto& su = t.su_[su_index(e.from_state, e.subtype)];
    su.sum += e.y_tq;
    ++su.support;
    t.global_.sum += e.y_tq;
    ++t.global_.support;
  }
  if (t.global_.support == 0) throw DataError("no training stay events to build a baseline from");
  return t;
}

const StayBaselineTable::Cell& StayBaselineTable::cell(int s, int u, int b) const {
  return cells_[cell_index(s, u, b)];
}

const StayBaselineTable::Cell& StayBaselineTable::state_subtype(int s, int u) const {
  return su_[su_index(s, u)];
}

int StayBaselineTable::level(int s, int u, int b) const {
  if (cell(s, u, b).support >= kMinSupport) return 0;
  if (state_subtype(s, u).support >= kMinSupport) return 1;
  return 2;
}

double StayBaselineTable::value(int s, int u, int b) const {
  switch (level(s, u, b)) {
    case 0: return cell(s, u, b).mean();
    case 1: return state_subtype(s, u).mean();
    default: return global_.mean();
  }
}

bool StayBaselineTable::operator==(const StayBaselineTable& o) const {
  auto same = [](const Cell& a, const Cell& b) { return a.sum == b.sum && a.support == b.support; };
  if (!same(global_, o.global_)) return false;
  for (std::size_t i = 0; i < cells_.size(); ++i)
    if (!same(cells_[i], o.cells_[i])) return false;
  for (std::size_t i = 0; i < su_.size(); ++i)
    if (!same(su_[i], o.su_[i])) return false;
  return true;
}

void StayBaselineTable::write(std::ostream& out) const {
  write_flat_header(out, "deckshift-baseline", kBaselineVersion);
  out << "# cell state subtype bucket support sum value level\n";
  out << "global " << global_.support << ' ' << format_double(global_.sum) << ' '
      << format_double(global_.mean()) << '\n';
  for (int s = 0; s < kNumStates; ++s)
    for (int u = 0; u < kNumSubtypes; ++u) {
      const auto& su = state_subtype(s, u);
      out << "state_subtype " << s << ' ' << u << ' ' << su.support << ' ' << format_double(su.sum) << '\n';
      for (int b = 0; b < kNumWrBuckets; ++b) {
        const auto& c = cell(s, u, b);
        out << "cell " << s << ' ' << u << ' ' << b << ' ' << c.support << ' ' << format_double(c.sum)
            << ' ' << format_double(value(s, u, b)) << ' ' << level(s, u, b) << '\n';
      }
    }
}

StayBaselineTable StayBaselineTable::read(std::istream& in) {
  StayBaselineTable t;
  bool have_global = false;
  for (const auto& rec : read_flat(in, "deckshift-baseline", kBaselineVersion)) {
    const auto& key = rec.key();
    if (key == "global") {
      t.global_.support = static_cast<std::size_t>(rec.integer(0));
      t.global_.sum = rec.number(1);
      have_global = true;
    } else if (key == "state_subtype") {
      auto& c = t.su_.at(su_index(static_cast<int>(rec.integer(0)), static_cast<int>(rec.integer(1))));
      c.support = static_cast<std::size_t>(rec.integer(2));
      c.sum = rec.number(3);
    } else if (key == "cell") {
      auto& c = t.cells_[cell_index(static_cast<int>(rec.integer(0)), static_cast<int>(rec.integer(1)),
                                    static_cast<int>(rec.integer(2)))];
      c.support = static_cast<std::size_t>(rec.integer(3));
      c.sum = rec.number(4);
    } else {
      throw ParseError(rec.line, "unknown record '" + key + "'");
    }
  }
  if (!have_global || t.global_.support == 0) throw DataError("baseline table has no global mean");
  return t;
}

double net_effect(const TransitionEvent& e, const StayBaselineTable& table) {
  return e.y_tq - table.value(e.from_state, e.subtype, e.bucket);
}

void attach_net_effects(std::vector<TransitionEvent>& events, const StayBaselineTable& table) {
  for (auto& e : events) {
    e.stay_baseline = table.value(e.from_state, e.subtype, e.bucket);
    e.baseline_level = table.level(e.from_state, e.subtype, e.bucket);
    e.delta_net = e.y_tq - e.stay_baseline;
  }
}

int timing_label(const TransitionEvent& e) { return e.is_switch() && e.delta_net > 0.0 ? 1 : 0; }

namespace {

TimingLabel label_for(const std::vector<TransitionEvent>& events, std::size_t i) {
  const auto& e = events[i];
  TimingLabel l;
  l.event = i;
  l.label = timing_label(e);
  l.source = !e.is_switch() ? LabelSource::StayNegative
             : l.label   ? LabelSource::GoodSwitch
                         : LabelSource::BadSwitch;
  return l;
}

}  // namespace

TimingLabelSet build_timing_labels(const std::vector<TransitionEvent>& events, std::uint64_t seed) {
  TimingLabelSet set;
  std::vector<std::size_t> stays;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    switch (e.split) {
      case Split::Train:
        if (e.is_switch())
          set.train.push_back(label_for(events, i));
        else
          stays.push_back(i);
        break;
      case Split::Val: set.val.push_back(label_for(events, i)); break;
      case Split::Test: set.test.push_back(label_for(events, i)); break;
    }
  }
  const std::size_t want = set.train.size();
  if (stays.size() < want) {
    set.stay_shortfall = true;
  } else {
    std::mt19937_64 rng(seed);
    std::shuffle(stays.begin(), stays.end(), rng);
    stays.resize(want);
    std::sort(stays.begin(), stays.end());
  }
  for (auto i : stays) set.train.push_back(label_for(events, i));
  std::sort(set.train.begin(), set.train.end(),
            [](const TimingLabel& a, const TimingLabel& b) { return a.event < b.event; });
  return set;
}

void write_events(std::ostream& out, const std::vector<TransitionEvent>& events) {
  write_flat_header(out, "deckshift-events", kEventsVersion);
  out << "# player index start boundary split action from to subtype wins_current wins_next "
         "next_count wr_current wr_next y_tq bucket stay_baseline delta_net baseline_level\n";
  for (const auto& e : events) {
    out << e.player_id << ' ' << e.player << ' ' << e.start << ' ' << e.boundary << ' '
        << to_string(e.split) << ' ' << to_string(e.action) << ' ' << e.from_state << ' '
        << e.to_state << ' ' << e.subtype << ' ' << e.wins_current << ' ' << e.wins_next << ' '
        << e.next_count << ' ' << format_double(e.wr_current) << ' ' << format_double(e.wr_next)
        << ' ' << format_double(e.y_tq) << ' ' << e.bucket << ' ' << format_double(e.stay_baseline)
        << ' ' << format_double(e.delta_net) << ' ' << e.baseline_level << '\n';
  }
}

std::vector<TransitionEvent> read_events(std::istream& in) {
  std::vector<TransitionEvent> out;
  for (const auto& rec : read_flat(in, "deckshift-events", kEventsVersion)) {
    if (rec.arity() != 18) throw ParseError(rec.line, "expected 19 fields");
    TransitionEvent e;
    e.player_id = rec.key();
    e.player = static_cast<std::size_t>(rec.integer(0));
    e.start = static_cast<std::size_t>(rec.integer(1));
    e.boundary = static_cast<std::size_t>(rec.integer(2));
    e.split = parse_split(rec.tokens[4], rec.line);
    const auto& a = rec.tokens[5];
    if (a != "stay" && a != "switch") throw ParseError(rec.line, "unknown action '" + a + "'");
    e.action = a == "stay" ? Action::Stay : Action::Switch;
    e.from_state = static_cast<int>(rec.integer(5));
    e.to_state = static_cast<int>(rec.integer(6));
    e.subtype = static_cast<int>(rec.integer(7));
    e.wins_current = static_cast<std::size_t>(rec.integer(8));
    e.wins_next = static_cast<std::size_t>(rec.integer(9));
    e.next_count = static_cast<std::size_t>(rec.integer(10));
    e.wr_current = rec.number(11);
    e.wr_next = rec.number(12);
    e.y_tq = rec.number(13);
    e.bucket = static_cast<int>(rec.integer(14));
    e.stay_baseline = rec.number(15);
    e.delta_net = rec.number(16);
    e.baseline_level = static_cast<int>(rec.integer(17));
    out.push_back(std::move(e));
  }
  return out;
}

void save_events(const std::string& path, const std::vector<TransitionEvent>& events) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_events(out, events);
}

std::vector<TransitionEvent> load_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_events(in);
}

void write_labels(std::ostream& out, const TimingLabelSet& labels) {
  write_flat_header(out, "deckshift-timing-labels", 1);
  out << "# split event label source\n";
  const std::pair<const char*, const std::vector<TimingLabel>*> parts[] = {
      {"train", &labels.train}, {"val", &labels.val}, {"test", &labels.test}};
  for (const auto& [name, list] : parts)
    for (const auto& l : *list) out << name << ' ' << l.event << ' ' << l.label << ' ' << to_string(l.source) << '\n';
}

}  // namespace deckshift
