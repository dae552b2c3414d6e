#include "deckshift/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "deckshift/flatfile.hpp"
#include "deckshift/subtype.hpp"

namespace deckshift {
namespace {

std::size_t count_index(int u, int s, int t) {
  if (u < 0 || u >= kNumSubtypes || s < 0 || s >= kNumStates || t < 0 || t >= kNumStates)
    throw DataError("transition count index out of range");
  return static_cast<std::size_t>((u * kNumStates + s) * kNumStates + t);
}

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  if (a.quality != b.quality) return a.quality > b.quality;
  return a.to_state < b.to_state;
}

}  // namespace

TransitionCounts TransitionCounts::build(const std::vector<TransitionEvent>& events) {
  TransitionCounts c;
  for (const auto& e : events)
    if (e.split == Split::Train && e.cross_state()) c.add(e.subtype, e.from_state, e.to_state);
  return c;
}

std::size_t TransitionCounts::count(int u, int s, int t) const { return counts_[count_index(u, s, t)]; }

std::size_t TransitionCounts::total(int u, int s) const {
  std::size_t n = 0;
  for (int t = 0; t < kNumStates; ++t) n += count(u, s, t);
  return n;
}

void TransitionCounts::add(int u, int s, int t, std::size_t n) { counts_[count_index(u, s, t)] += n; }

void TransitionCounts::write(std::ostream& out) const {
  write_flat_header(out, "deckshift-transition-counts", 1);
  out << "# subtype from to count (cross-state training switches, nonzero only)\n";
  for (int u = 0; u < kNumSubtypes; ++u)
    for (int s = 0; s < kNumStates; ++s)
      for (int t = 0; t < kNumStates; ++t)
        if (const auto c = count(u, s, t)) out << "count " << u << ' ' << s << ' ' << t << ' ' << c << '\n';
}

TransitionCounts TransitionCounts::read(std::istream& in) {
  TransitionCounts c;
  for (const auto& rec : read_flat(in, "deckshift-transition-counts", 1)) {
    if (rec.key() != "count" || rec.arity() != 4) throw ParseError(rec.line, "expected 'count u from to n'");
    const auto n = rec.integer(3);
    if (n < 0) throw ParseError(rec.line, "negative count");
    c.add(static_cast<int>(rec.integer(0)), static_cast<int>(rec.integer(1)), static_cast<int>(rec.integer(2)),
          static_cast<std::size_t>(n));
  }
  return c;
}

double FrequencyScorer::score(const DecisionContext& ctx, int to) const {
  return (static_cast<double>(counts_->count(ctx.subtype, ctx.state, to)) + 1.0) /
         (static_cast<double>(counts_->total(ctx.subtype, ctx.state)) + kNumStates);
}

void FusionConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fusion alpha must lie in [0,1]");
  if (!(scale > 0.0)) throw ConfigError("fusion tanh scale must be positive");
  for (double a : grid)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha grid values must lie in [0,1]");
}

void FusionConfig::write(std::ostream& out) const {
  write_flat_header(out, "deckshift-fusion", 1);
  out << "alpha " << format_double(alpha) << '\n';
  out << "scale " << format_double(scale) << '\n';
  out << "min_support " << min_support << '\n';
  out << "grid";
  for (double a : grid) out << ' ' << format_double(a);
  out << '\n';
}

FusionConfig FusionConfig::read(std::istream& in) {
  FusionConfig c;
  for (const auto& rec : read_flat(in, "deckshift-fusion", 1)) {
    const auto& key = rec.key();
    if (key == "alpha") {
      c.alpha = rec.number(0);
    } else if (key == "scale") {
      c.scale = rec.number(0);
    } else if (key == "min_support") {
      c.min_support = static_cast<std::size_t>(rec.integer(0));
    } else if (key == "grid") {
      c.grid.clear();
      for (std::size_t i = 0; i < rec.arity(); ++i) c.grid.push_back(rec.number(i));
    } else {
      throw ParseError(rec.line, "unknown record '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::vector<Candidate> build_candidates(const DecisionContext& ctx, const TransitionCounts& counts,
                                        const AdoptabilityScorer& scorer, const QualityModel& quality,
                                        std::size_t min_support) {
  std::vector<Candidate> out;
  for (int t = 0; t < kNumStates; ++t) {
    if (t == ctx.state) continue;
    const auto support = counts.count(ctx.subtype, ctx.state, t);
    if (support < min_support) continue;
    Candidate c;
    c.to_state = t;
    c.support = support;
    c.quality = quality.predict(ctx, t);
    if (!(c.quality > 0.0)) continue;
    c.adoptability = scorer.score(ctx, t);
    if (!std::isfinite(c.adoptability)) throw DataError("adoptability scorer returned a non-finite score");
    out.push_back(c);
  }
  return out;
}

void fuse_scores(std::vector<Candidate>& cands, double alpha, double scale) {
  if (cands.empty()) return;
  double lo = cands.front().adoptability, hi = lo;
  for (const auto& c : cands) lo = std::min(lo, c.adoptability), hi = std::max(hi, c.adoptability);
  for (auto& c : cands) {
    c.adoptability_norm = hi > lo ? (c.adoptability - lo) / (hi - lo) : 1.0;
    c.fused = alpha * c.adoptability_norm + (1.0 - alpha) * std::tanh(c.quality / scale);
  }
  std::sort(cands.begin(), cands.end(), ranks_before);
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::PersonaGate: return "persona_gate";
    case Provenance::TimingGate: return "timing_gate";
    case Provenance::NoCandidates: return "no_candidates";
    case Provenance::Fusion: return "fusion";
  }
  return "?";
}

std::string explain(Provenance p) {
  switch (p) {
    case Provenance::PersonaGate:
      return "held by PersonaGate: your consistency profile outperforms switching";
    case Provenance::TimingGate:
      return "held by TimingGate: switching now is not expected to beat staying";
    case Provenance::NoCandidates:
      return "held by ScoreFusion: no well-supported strategy is predicted to raise your win rate";
    case Provenance::Fusion:
      return "switch recommended: top fused score among supported candidates";
  }
  return "";
}

bool Recommendation::operator==(const Recommendation& o) const {
  if (switch_ != o.switch_ || target_state != o.target_state || from_state != o.from_state ||
      subtype != o.subtype || gate_prob != o.gate_prob || provenance != o.provenance ||
      candidates.size() != o.candidates.size())
    return false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto &a = candidates[i], &b = o.candidates[i];
    if (a.to_state != b.to_state || a.support != b.support || a.adoptability != b.adoptability ||
        a.adoptability_norm != b.adoptability_norm || a.quality != b.quality || a.fused != b.fused)
      return false;
  }
  return true;
}

Recommender::Recommender(const TimingGate& gate, const QualityModel& quality, const TransitionCounts& counts,
                         std::shared_ptr<const AdoptabilityScorer> scorer, FusionConfig config)
    : gate_(&gate), quality_(&quality), counts_(&counts), scorer_(std::move(scorer)), config_(std::move(config)) {
  if (!scorer_) throw ConfigError("recommender needs an adoptability scorer");
  config_.validate();
}

void Recommender::set_alpha(double alpha) {
  config_.alpha = alpha;
  config_.validate();
}

Recommendation Recommender::recommend(const DecisionContext& ctx) const { return recommend(ctx, config_.alpha); }

Recommendation Recommender::recommend(const DecisionContext& ctx, double alpha) const {
  Recommendation r;
  r.from_state = ctx.state;
  r.subtype = ctx.subtype;
  if (persona_gate(static_cast<Subtype>(ctx.subtype)) == GateDecision::Stay) {
    r.provenance = Provenance::PersonaGate;
    return r;
  }
  const double p = gate_->probability(ctx);
  r.gate_prob = p;
  if (!gate_->approves(p)) {
    r.provenance = Provenance::TimingGate;
    return r;
  }
  r.candidates = build_candidates(ctx, *counts_, *scorer_, *quality_, config_.min_support);
  if (r.candidates.empty()) {
    r.provenance = Provenance::NoCandidates;
    return r;
  }
  fuse_scores(r.candidates, alpha, config_.scale);
  r.switch_ = true;
  r.target_state = r.candidates.front().to_state;
  r.provenance = Provenance::Fusion;
  return r;
}

AlphaChoice tune_alpha(const Recommender& rec, const std::vector<AlphaSample>& samples,
                       const std::vector<double>& grid) {
  AlphaChoice out;
  if (grid.empty()) throw ConfigError("alpha grid is empty");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> y;
  std::vector<char> is_switch;
  for (const auto& s : samples) {
    y.push_back(s.y);
    is_switch.push_back(s.is_switch);
  }
  std::optional<double> best;
  for (double a : sorted) {
    std::vector<char> approved;
    approved.reserve(samples.size());
    for (const auto& s : samples) {
      const auto r = rec.recommend(s.ctx, a);
      approved.push_back(r.switch_ && s.is_switch && r.target_state == s.to_state);
    }
    const auto g = switch_gap(approved, y, is_switch).gap;
    out.gaps.push_back(g);
    if (g && (!best || *g > *best)) {
      best = g;
      out.alpha = a;
    }
  }
  if (!best) {
    out.alpha = 0.5;
    out.fallback = true;
  }
  return out;
}

}  // namespace deckshift
