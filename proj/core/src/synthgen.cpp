#include "deckshift/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "deckshift/flatfile.hpp"
#include "json.hpp"

namespace deckshift {
namespace {

constexpr int kVariants = 3;
constexpr int kMaxCost = 9;
constexpr std::int64_t kEpochStart = 1'700'000'000;

constexpr FuncType WC = FuncType::WinCondition;
constexpr FuncType SP = FuncType::Spell;
constexpr FuncType BD = FuncType::Building;
constexpr FuncType SU = FuncType::Support;

CardIndex card_index(FuncType f, int cost, int variant) {
  return static_cast<CardIndex>((static_cast<int>(f) * kMaxCost + (cost - 1)) * kVariants +
                                variant);
}

std::array<ArchetypeTemplate, kNumStates> make_templates() {
  using G = StateGroup;
  return {{
      {0, "All-In Beatdown", G::Beatdown, {WC, WC, SP, SP, SU, SU, SU, SU}, {7, 8, 3, 4, 5, 5, 6, 4}},
      {1, "Unit-Heavy Control", G::Control, {WC, SP, SP, SU, SU, SU, SU, SU}, {5, 3, 4, 4, 5, 4, 3, 5}},
      {2, "Standard Control", G::Control, {WC, SP, SP, SP, BD, SU, SU, SU}, {5, 2, 4, 6, 5, 3, 3, 4}},
      {3, "Bridge Spam", G::Control, {WC, WC, SP, SP, SU, SU, SU, SU}, {4, 5, 2, 4, 4, 3, 3, 5}},
      {4, "Classic Cycle", G::Cycle, {WC, SP, SP, BD, SU, SU, SU, SU}, {4, 2, 3, 3, 1, 2, 2, 3}},
      {5, "Classic Beatdown", G::Beatdown, {WC, WC, SP, SP, BD, SU, SU, SU}, {7, 5, 2, 4, 3, 4, 5, 4}},
      {6, "Defensive Heavy", G::Beatdown, {WC, SP, SP, BD, BD, SU, SU, SU}, {6, 3, 4, 5, 6, 5, 4, 3}},
      {7, "Hyper Cycle", G::Cycle, {WC, SP, SP, SU, SU, SU, SU, SU}, {3, 1, 2, 1, 2, 2, 3, 1}},
      {8, "Three Musketeers", G::Specialist, {WC, SP, SP, BD, SU, SU, SU, SU}, {9, 2, 4, 3, 5, 4, 2, 5}},
      {9, "Siege / Heavy Control", G::Beatdown, {WC, SP, SP, SP, BD, BD, SU, SU}, {6, 2, 4, 3, 4, 5, 3, 4}},
      {10, "Defensive Heavy Variant", G::Beatdown, {WC, SP, BD, BD, SU, SU, SU, SU}, {7, 4, 5, 6, 4, 5, 3, 5}},
      {11, "Off-Meta Cycle", G::Cycle, {WC, SP, BD, SU, SU, SU, SU, SU}, {3, 2, 3, 2, 3, 1, 4, 2}},
      {12, "Spell Cycle / Troll", G::Specialist, {WC, SP, SP, SP, SP, SU, SU, SU}, {3, 2, 4, 3, 2, 2, 3, 3}},
  }};
}

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

bool in_use(const std::array<CardIndex, kDeckSize>& slots, std::size_t upto, CardIndex c) {
  for (std::size_t i = 0; i < upto; ++i)
    if (slots[i] == c) return true;
  return false;
}

// Picks an unused variant of (func, cost); falls back to neighbouring costs.
CardIndex pick_card(FuncType f, int cost, const std::array<CardIndex, kDeckSize>& slots,
                    std::size_t filled, std::mt19937_64& rng) {
  for (int radius = 0; radius < kMaxCost; ++radius) {
    for (int sign : {0, -1, 1}) {
      if (radius == 0 && sign != 0) continue;
      if (radius > 0 && sign == 0) continue;
      const int c = cost + sign * radius;
      if (c < 1 || c > kMaxCost) continue;
      std::vector<CardIndex> free;
      for (int v = 0; v < kVariants; ++v) {
        const auto idx = card_index(f, c, v);
        if (!in_use(slots, filled, idx)) free.push_back(idx);
      }
      if (!free.empty())
        return free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
  }
  throw ConfigError("catalog exhausted while building a deck");
}

std::array<CardIndex, kDeckSize> instantiate_slots(const ArchetypeTemplate& t, double noise,
                                                   std::mt19937_64& rng) {
  std::array<CardIndex, kDeckSize> slots{};
  for (std::size_t i = 0; i < kDeckSize; ++i) {
    int cost = t.costs[i];
    if (uniform01(rng) < noise) {
      cost += uniform01(rng) < 0.5 ? -1 : 1;
      cost = std::clamp(cost, 1, kMaxCost);
    }
    slots[i] = pick_card(t.funcs[i], cost, slots, i, rng);
  }
  return slots;
}

// Replaces one slot with a different card of the same function and a cost
// within one of the template's nominal cost.
void adjust_within_state(std::array<CardIndex, kDeckSize>& slots, const ArchetypeTemplate& t,
                         std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 32; ++attempt) {
    const auto j = std::uniform_int_distribution<std::size_t>(0, kDeckSize - 1)(rng);
    std::vector<CardIndex> options;
    for (int c = t.costs[j] - 1; c <= t.costs[j] + 1; ++c) {
      if (c < 1 || c > kMaxCost) continue;
      for (int v = 0; v < kVariants; ++v) {
        const auto idx = card_index(t.funcs[j], c, v);
        if (!in_use(slots, kDeckSize, idx)) options.push_back(idx);
      }
    }
    if (options.empty()) continue;
    slots[j] = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    return;
  }
  throw ConfigError("no within-state adjustment available");
}

Deck to_deck(const std::array<CardIndex, kDeckSize>& slots) { return sorted_deck(slots); }

void check_prob(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(what + " must lie in [0,1]");
}

}  // namespace

std::string_view to_string(StateGroup g) {
  switch (g) {
    case StateGroup::Cycle: return "Cycle";
    case StateGroup::Control: return "Control";
    case StateGroup::Beatdown: return "Beatdown";
    case StateGroup::Specialist: return "Specialist";
  }
  return "Control";
}

const std::array<ArchetypeTemplate, kNumStates>& archetype_templates() {
  static const auto templates = make_templates();
  return templates;
}

void GeneratorConfig::validate() const {
  if (n_players == 0) throw ConfigError("n_players must be positive");
  if (min_matches == 0 || min_matches > max_matches)
    throw ConfigError("matches_per_player range is empty");
  double mix = 0.0;
  for (double p : subtype_mix) {
    check_prob(p, "subtype_mix entry");
    mix += p;
  }
  if (std::abs(mix - 1.0) > 1e-9) throw ConfigError("subtype_mix must sum to 1");
  for (std::size_t u = 0; u < behavior.size(); ++u) {
    const auto tag = "subtype" + std::to_string(u);
    check_prob(behavior[u].p_switch_after_loss, tag + ".p_switch_after_loss");
    check_prob(behavior[u].p_switch_after_win, tag + ".p_switch_after_win");
    check_prob(behavior[u].within_state_adjust_prob, tag + ".within_state_adjust_prob");
  }
  check_prob(mastery_retain_cross, "mastery_retain_cross");
  check_prob(mastery_retain_within, "mastery_retain_within");
  check_prob(deck_noise, "deck_noise");
  check_prob(path_of_legend_share, "path_of_legend_share");
  if (mastery_gain < 0 || mastery_cap < 0) throw ConfigError("mastery params must be >= 0");
  if (affinity_sd < 0 || state_base_spread < 0) throw ConfigError("spreads must be >= 0");
  if (repertoire_size < 1 || repertoire_size > static_cast<std::size_t>(kNumStates))
    throw ConfigError("repertoire_size must name between 1 and 13 deck templates");
}

GeneratorConfig GeneratorConfig::from_key_values(const KeyValueConfig& kv) {
  GeneratorConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.n_players = static_cast<std::size_t>(kv.get_int("n_players", static_cast<long long>(c.n_players)));
  c.min_matches = static_cast<std::size_t>(kv.get_int("min_matches", static_cast<long long>(c.min_matches)));
  c.max_matches = static_cast<std::size_t>(kv.get_int("max_matches", static_cast<long long>(c.max_matches)));
  const auto mix = kv.get_doubles("subtype_mix", {c.subtype_mix.begin(), c.subtype_mix.end()});
  if (mix.size() != 3) throw ConfigError("subtype_mix needs three values");
  std::copy(mix.begin(), mix.end(), c.subtype_mix.begin());
  for (std::size_t u = 0; u < 3; ++u) {
    const auto tag = "subtype" + std::to_string(u) + ".";
    auto& b = c.behavior[u];
    b.p_switch_after_loss = kv.get_double(tag + "p_switch_after_loss", b.p_switch_after_loss);
    b.p_switch_after_win = kv.get_double(tag + "p_switch_after_win", b.p_switch_after_win);
    b.within_state_adjust_prob =
        kv.get_double(tag + "within_state_adjust_prob", b.within_state_adjust_prob);
  }
  const auto tiers = kv.get_doubles("tier_base", {c.tier_base.begin(), c.tier_base.end()});
  if (tiers.size() != 3) throw ConfigError("tier_base needs three values");
  std::copy(tiers.begin(), tiers.end(), c.tier_base.begin());
  c.state_base_spread = kv.get_double("state_base_spread", c.state_base_spread);
  c.affinity_sd = kv.get_double("affinity_sd", c.affinity_sd);
  c.mastery_gain = kv.get_double("mastery_gain", c.mastery_gain);
  c.mastery_cap = kv.get_double("mastery_cap", c.mastery_cap);
  c.mastery_retain_cross = kv.get_double("mastery_retain_cross", c.mastery_retain_cross);
  c.mastery_retain_within = kv.get_double("mastery_retain_within", c.mastery_retain_within);
  const auto pen = kv.get_doubles("state_meta_penalty",
                                  {c.state_meta_penalty.begin(), c.state_meta_penalty.end()});
  if (pen.size() != static_cast<std::size_t>(kNumStates))
    throw ConfigError("state_meta_penalty needs 13 values");
  std::copy(pen.begin(), pen.end(), c.state_meta_penalty.begin());
  c.opponent_meta = kv.get_double("opponent_meta", c.opponent_meta);
  c.deck_noise = kv.get_double("deck_noise", c.deck_noise);
  c.repertoire_size = static_cast<std::size_t>(
      kv.get_int("repertoire_size", static_cast<long long>(c.repertoire_size)));
  c.path_of_legend_share = kv.get_double("path_of_legend_share", c.path_of_legend_share);
  c.validate();
  return c;
}

GeneratorConfig GeneratorConfig::load(const std::string& path) {
  return from_key_values(KeyValueConfig::load(path));
}

CardCatalog generate_cards(const GeneratorConfig& /*config*/) {
  static constexpr std::array<const char*, 4> kPrefix{"wincon", "spell", "building", "troop"};
  CardCatalog catalog;
  for (int f = 0; f < 4; ++f)
    for (int cost = 1; cost <= kMaxCost; ++cost)
      for (int v = 0; v < kVariants; ++v) {
        char id[32];
        std::snprintf(id, sizeof(id), "%s-%d%c", kPrefix[f], cost, 'a' + v);
        catalog.add({id, cost, static_cast<FuncType>(f)});
      }
  return catalog;
}

Deck instantiate_template(const ArchetypeTemplate& t, double noise, std::mt19937_64& rng) {
  return to_deck(instantiate_slots(t, noise, rng));
}

bool GroundTruth::operator==(const GroundTruth& o) const {
  if (players.size() != o.players.size() || matches.size() != o.matches.size()) return false;
  for (std::size_t i = 0; i < players.size(); ++i) {
    const auto& a = players[i];
    const auto& b = o.players[i];
    if (a.player_id != b.player_id || a.subtype != b.subtype || a.skill_tier != b.skill_tier)
      return false;
  }
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (matches[i].size() != o.matches[i].size()) return false;
    for (std::size_t j = 0; j < matches[i].size(); ++j)
      if (matches[i][j].archetype != o.matches[i][j].archetype ||
          matches[i][j].win_prob != o.matches[i][j].win_prob)
        return false;
  }
  return true;
}

Population generate_population(const GeneratorConfig& config) {
  config.validate();
  const auto& templates = archetype_templates();

  Population pop;
  pop.catalog = generate_cards(config);

  std::array<double, kNumStates> state_offset{};
  {
    std::mt19937_64 rng(derive_seed(config.seed, std::string_view("state-offsets")));
    for (auto& o : state_offset)
      o = std::uniform_real_distribution<double>(-config.state_base_spread,
                                                 config.state_base_spread)(rng);
  }

  pop.histories.reserve(config.n_players);
  for (std::size_t i = 0; i < config.n_players; ++i) {
    char pid_buf[16];
    std::snprintf(pid_buf, sizeof(pid_buf), "p%05zu", i);
    const std::string pid = pid_buf;
    std::mt19937_64 rng(derive_seed(config.seed, std::string_view(pid)));

    const double u_draw = uniform01(rng);
    int subtype = kNumSubtypes - 1;
    double acc = 0.0;
    for (int u = 0; u < kNumSubtypes; ++u) {
      acc += config.subtype_mix[u];
      if (u_draw < acc) {
        subtype = u;
        break;
      }
    }
    const int tier = std::uniform_int_distribution<int>(0, 2)(rng);
    std::array<double, kNumStates> affinity{};
    std::normal_distribution<double> aff(0.0, 1.0);
    for (auto& a : affinity) a = config.affinity_sd * aff(rng);
    const auto n = std::uniform_int_distribution<std::size_t>(config.min_matches,
                                                              config.max_matches)(rng);

    // Repertoire: a primary state plus neighbours, favouring the same group.
    std::vector<int> repertoire{std::uniform_int_distribution<int>(0, kNumStates - 1)(rng)};
    while (repertoire.size() < config.repertoire_size) {
      std::vector<double> w(kNumStates, 0.0);
      for (int s = 0; s < kNumStates; ++s) {
        if (std::find(repertoire.begin(), repertoire.end(), s) != repertoire.end()) continue;
        w[s] = templates[s].group == templates[repertoire[0]].group ? 3.0 : 1.0;
      }
      repertoire.push_back(std::discrete_distribution<int>(w.begin(), w.end())(rng));
    }

    const auto& beh = config.behavior[subtype];
    int state = repertoire[0];
    auto slots = instantiate_slots(templates[state], config.deck_noise, rng);
    double mastery = std::uniform_real_distribution<double>(0.0, config.mastery_cap)(rng);
    std::int64_t ts = kEpochStart + std::uniform_int_distribution<std::int64_t>(0, 30 * 86400)(rng);

    PlayerHistory h;
    h.player_id = pid;
    h.matches.reserve(n);
    std::vector<MatchTruth> truth;
    truth.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double p = std::clamp(config.tier_base[tier] + state_offset[state] +
                                      affinity[state] + mastery - config.opponent_meta +
                                      config.state_meta_penalty[state],
                                  0.05, 0.95);
      const bool win = uniform01(rng) < p;
      const double cr = uniform01(rng);
      const int crowns = cr < 0.55 ? 1 : (cr < 0.85 ? 2 : 3);

      MatchRecord m;
      m.player_id = pid;
      m.seq_index = t;
      m.timestamp = ts;
      m.deck = to_deck(slots);
      m.avg_elixir = pop.catalog.average_elixir(m.deck);
      m.outcome = win ? Outcome::Win : Outcome::Loss;
      m.crown_diff = win ? crowns : -crowns;
      m.mode = uniform01(rng) < config.path_of_legend_share ? Mode::PathOfLegend : Mode::Pvp;
      h.matches.push_back(m);
      truth.push_back({state, p});

      // Gap to the next match: mostly within a session, sometimes a break.
      const bool brk = uniform01(rng) < 0.15;
      const double gap = brk ? std::exponential_distribution<double>(1.0 / 28800.0)(rng)
                             : 180.0 + std::exponential_distribution<double>(1.0 / 240.0)(rng);
      ts += std::max<std::int64_t>(60, static_cast<std::int64_t>(gap));

      const double p_switch = win ? beh.p_switch_after_win : beh.p_switch_after_loss;
      if (uniform01(rng) < p_switch) {
        const bool within = repertoire.size() == 1 || uniform01(rng) < beh.within_state_adjust_prob;
        if (within) {
          adjust_within_state(slots, templates[state], rng);
          mastery *= config.mastery_retain_within;
        } else {
          std::vector<int> options;
          for (int s : repertoire)
            if (s != state) options.push_back(s);
          state = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
          slots = instantiate_slots(templates[state], config.deck_noise, rng);
          mastery *= config.mastery_retain_cross;
        }
      } else {
        mastery = std::min(mastery + config.mastery_gain, config.mastery_cap);
      }
    }
    pop.truth.players.push_back({pid, subtype, tier});
    pop.truth.matches.push_back(std::move(truth));
    pop.histories.push_back(std::move(h));
  }
  return pop;
}

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  using ordered_json = nlohmann::ordered_json;
  for (std::size_t i = 0; i < truth.players.size(); ++i) {
    const auto& p = truth.players[i];
    ordered_json obj;
    obj["kind"] = "player";
    obj["player_id"] = p.player_id;
    obj["subtype"] = p.subtype;
    obj["skill_tier"] = p.skill_tier;
    out << obj.dump() << '\n';
    for (std::size_t t = 0; t < truth.matches[i].size(); ++t) {
      ordered_json m;
      m["kind"] = "match";
      m["player_id"] = p.player_id;
      m["seq_index"] = t;
      m["archetype"] = truth.matches[i][t].archetype;
      m["win_prob"] = truth.matches[i][t].win_prob;
      out << m.dump() << '\n';
    }
  }
}

void save_ground_truth(const std::string& path, const GroundTruth& truth) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_ground_truth(out, truth);
}

}  // namespace deckshift
