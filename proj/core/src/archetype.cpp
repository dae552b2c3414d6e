#include "deckshift/archetype.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "deckshift/clustering_metrics.hpp"
#include "deckshift/flatfile.hpp"
#include "deckshift/kmeans.hpp"

namespace deckshift {
namespace {

constexpr int kModelVersion = 1;

StateGroup group_for(const Eigen::RowVectorXd& raw) {
  const double avg = raw(0), spell = raw(3), cheap = raw(6);
  if (spell >= 0.45) return StateGroup::Specialist;
  if (avg < 3.0 || cheap >= 0.35) return StateGroup::Cycle;
  if (avg >= 4.3) return StateGroup::Beatdown;
  return StateGroup::Control;
}

void label_states(ArchetypeModel& m) {
  m.states.clear();
  std::array<int, 4> seen{};
  for (Eigen::Index j = 0; j < m.centroids.rows(); ++j) {
    StateInfo s;
    s.state_id = static_cast<int>(j);
    s.group = group_for(m.centroids_raw.row(j));
    s.name = std::string(to_string(s.group)) + "-" +
             std::to_string(++seen[static_cast<std::size_t>(s.group)]);
    m.states.push_back(std::move(s));
  }
}

}  // namespace

FeatureVector DeckFeatures::values() const {
  return {avg_elixir,  elixir_std,     ratio_win_condition, ratio_spell,
          ratio_building, ratio_support, ratio_cheap};
}

const std::array<const char*, kNumDeckFeatures>& DeckFeatures::names() {
  static const std::array<const char*, kNumDeckFeatures> n{
      "avg_elixir",  "elixir_std",    "ratio_win_condition", "ratio_spell",
      "ratio_building", "ratio_support", "ratio_cheap"};
  return n;
}

DeckFeatures deck_features(const Deck& deck, const CardCatalog& catalog) {
  DeckFeatures f;
  std::array<int, 4> funcs{};
  double sum = 0.0, cheap = 0.0;
  for (auto c : deck) {
    if (c >= catalog.size()) throw DataError("card index outside the catalog");
    const auto& card = catalog.at(c);
    sum += card.elixir_cost;
    cheap += card.elixir_cost <= 2 ? 1.0 : 0.0;
    ++funcs[static_cast<std::size_t>(card.func_type)];
  }
  const double n = static_cast<double>(kDeckSize);
  f.avg_elixir = sum / n;
  double var = 0.0;
  for (auto c : deck) {
    const double d = catalog.at(c).elixir_cost - f.avg_elixir;
    var += d * d;
  }
  f.elixir_std = std::sqrt(var / n);
  f.ratio_win_condition = funcs[0] / n;
  f.ratio_spell = funcs[1] / n;
  f.ratio_building = funcs[2] / n;
  f.ratio_support = funcs[3] / n;
  f.ratio_cheap = cheap / n;
  return f;
}

DeckFeatures deck_features(std::span<const std::string> card_ids, const CardCatalog& catalog) {
  return deck_features(catalog.make_deck(card_ids), catalog);
}

QuantileMap QuantileMap::fit(const std::vector<FeatureVector>& reference) {
  if (reference.empty()) throw DataError("quantile map needs a non-empty reference");
  QuantileMap q;
  const double n = static_cast<double>(reference.size());
  for (std::size_t f = 0; f < kNumDeckFeatures; ++f) {
    std::vector<double> col;
    col.reserve(reference.size());
    for (const auto& r : reference) col.push_back(r[f]);
    std::sort(col.begin(), col.end());
    auto& t = q.tables[f];
    std::size_t i = 0;
    while (i < col.size()) {
      std::size_t j = i;
      while (j < col.size() && col[j] == col[i]) ++j;
      t.values.push_back(col[i]);
      t.positions.push_back((static_cast<double>(i) + static_cast<double>(j)) / (2.0 * n));
      i = j;
    }
    if (t.values.size() == 1) {
      t.positions[0] = 0.5;
    } else {
      const double lo = t.positions.front(), hi = t.positions.back();
      for (auto& p : t.positions) p = (p - lo) / (hi - lo);
    }
  }
  return q;
}

double QuantileMap::map(std::size_t feature, double x) const {
  const auto& t = tables.at(feature);
  if (t.values.empty()) return 0.5;
  if (x < t.values.front()) return 0.0;
  if (x > t.values.back()) return 1.0;
  const auto it = std::lower_bound(t.values.begin(), t.values.end(), x);
  const auto j = static_cast<std::size_t>(it - t.values.begin());
  if (t.values[j] == x) return t.positions[j];
  const double x0 = t.values[j - 1], x1 = t.values[j];
  const double w = (x - x0) / (x1 - x0);
  return t.positions[j - 1] + w * (t.positions[j] - t.positions[j - 1]);
}

FeatureVector QuantileMap::transform(const FeatureVector& raw) const {
  FeatureVector out{};
  for (std::size_t f = 0; f < kNumDeckFeatures; ++f) out[f] = map(f, raw[f]);
  return out;
}

Eigen::RowVectorXd ArchetypeModel::embed(const DeckFeatures& f) const {
  const auto q = quantiles.transform(f.values());
  Eigen::RowVectorXd x(static_cast<Eigen::Index>(kNumDeckFeatures));
  for (std::size_t i = 0; i < kNumDeckFeatures; ++i)
    x(static_cast<Eigen::Index>(i)) = q[i] * weights[i];
  return x;
}

int ArchetypeModel::assign(const DeckFeatures& f) const {
  return nearest_centroid(centroids, embed(f));
}

int ArchetypeModel::assign(const Deck& deck, const CardCatalog& catalog) const {
  return assign(deck_features(deck, catalog));
}

std::vector<int> ArchetypeModel::assign_batch(const std::vector<DeckFeatures>& corpus) const {
  std::vector<int> out;
  out.reserve(corpus.size());
  for (const auto& f : corpus) out.push_back(assign(f));
  return out;
}

ArchetypeModel fit_archetypes(const std::vector<DeckFeatures>& corpus,
                              const ArchetypeFitOptions& options) {
  for (double w : options.weights)
    if (!(w > 0.0)) throw ConfigError("archetype feature weights must be positive");
  std::vector<FeatureVector> raw;
  raw.reserve(corpus.size());
  for (const auto& f : corpus) raw.push_back(f.values());

  ArchetypeModel model;
  model.weights = options.weights;
  model.quantiles = QuantileMap::fit(raw);

  Eigen::MatrixXd points(static_cast<Eigen::Index>(corpus.size()),
                         static_cast<Eigen::Index>(kNumDeckFeatures));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    points.row(static_cast<Eigen::Index>(i)) = model.embed(corpus[i]);

  KMeansOptions km;
  km.k = options.k;
  km.restarts = options.restarts;
  km.max_iter = options.max_iter;
  km.tol = options.tol;
  km.seed = options.seed;
  auto result = kmeans(points, km);

  // Raw-space member means drive the canonical ordering and group labels.
  const auto k = static_cast<Eigen::Index>(options.k);
  Eigen::MatrixXd raw_means = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(kNumDeckFeatures));
  std::vector<double> counts(options.k, 0.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto l = result.labels[i];
    for (std::size_t f = 0; f < kNumDeckFeatures; ++f)
      raw_means(l, static_cast<Eigen::Index>(f)) += raw[i][f];
    counts[static_cast<std::size_t>(l)] += 1.0;
  }
  for (Eigen::Index j = 0; j < k; ++j)
    if (counts[static_cast<std::size_t>(j)] > 0) raw_means.row(j) /= counts[static_cast<std::size_t>(j)];

  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index f = 0; f < raw_means.cols(); ++f)
      if (raw_means(a, f) != raw_means(b, f)) return raw_means(a, f) < raw_means(b, f);
    for (Eigen::Index f = 0; f < result.centroids.cols(); ++f)
      if (result.centroids(a, f) != result.centroids(b, f))
        return result.centroids(a, f) < result.centroids(b, f);
    return a < b;
  });
  std::vector<int> rank(static_cast<std::size_t>(k));
  model.centroids.resize(k, result.centroids.cols());
  model.centroids_raw.resize(k, raw_means.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    model.centroids.row(j) = result.centroids.row(order[static_cast<std::size_t>(j)]);
    model.centroids_raw.row(j) = raw_means.row(order[static_cast<std::size_t>(j)]);
    rank[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = static_cast<int>(j);
  }
  model.fit_labels.reserve(corpus.size());
  for (int l : result.labels) model.fit_labels.push_back(rank[static_cast<std::size_t>(l)]);
  model.inertia = result.inertia;
  label_states(model);

  if (options.k >= 2) {
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(derive_seed(options.seed, std::string_view("silhouette")));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), options.silhouette_sample));
    std::sort(idx.begin(), idx.end());
    Eigen::MatrixXd sample(static_cast<Eigen::Index>(idx.size()), points.cols());
    std::vector<int> labels;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      sample.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(idx[i]));
      labels.push_back(model.fit_labels[idx[i]]);
    }
    try {
      model.silhouette = silhouette_score(sample, labels);
    } catch (const DataError&) {
      model.silhouette = 0.0;
    }
  }
  return model;
}

StabilityReport clustering_stability(const std::vector<ArchetypeModel>& runs,
                                     const std::vector<DeckFeatures>& corpus) {
  if (runs.size() < 2) throw DataError("stability needs at least two runs");
  std::vector<std::vector<int>> labels;
  for (const auto& r : runs) labels.push_back(r.assign_batch(corpus));
  StabilityReport rep;
  rep.runs = runs.size();
  double pairs = 0.0;
  for (std::size_t a = 0; a < runs.size(); ++a)
    for (std::size_t b = a + 1; b < runs.size(); ++b) {
      rep.ari += adjusted_rand_index(labels[a], labels[b]);
      rep.nmi += normalized_mutual_info(labels[a], labels[b]);
      pairs += 1.0;
    }
  rep.ari /= pairs;
  rep.nmi /= pairs;
  Eigen::MatrixXd points(static_cast<Eigen::Index>(corpus.size()),
                         static_cast<Eigen::Index>(kNumDeckFeatures));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    points.row(static_cast<Eigen::Index>(i)) = runs.front().embed(corpus[i]);
  rep.silhouette = silhouette_score(points, labels.front());
  return rep;
}

void write_archetype_model(std::ostream& out, const ArchetypeModel& m) {
  write_flat_header(out, "deckshift-archetype", kModelVersion);
  out << "# card func taxonomy and feature weights are stand-ins, not game data\n";
  out << "features";
  for (auto n : DeckFeatures::names()) out << ' ' << n;
  out << "\nweights";
  for (double w : m.weights) out << ' ' << format_double(w);
  out << "\nk " << m.k() << '\n';
  for (std::size_t f = 0; f < kNumDeckFeatures; ++f) {
    const auto& t = m.quantiles.tables[f];
    out << "quantile " << f;
    for (double v : t.values) out << ' ' << format_double(v);
    out << "\npositions " << f;
    for (double p : t.positions) out << ' ' << format_double(p);
    out << '\n';
  }
  for (Eigen::Index j = 0; j < m.centroids.rows(); ++j) {
    out << "centroid " << j;
    for (Eigen::Index f = 0; f < m.centroids.cols(); ++f) out << ' ' << format_double(m.centroids(j, f));
    out << "\ncentroid_raw " << j;
    for (Eigen::Index f = 0; f < m.centroids_raw.cols(); ++f)
      out << ' ' << format_double(m.centroids_raw(j, f));
    out << '\n';
  }
  for (const auto& s : m.states)
    out << "state " << s.state_id << ' ' << to_string(s.group) << ' ' << s.name << '\n';
  out << "silhouette " << format_double(m.silhouette) << '\n';
  out << "inertia " << format_double(m.inertia) << '\n';
}

ArchetypeModel read_archetype_model(std::istream& in) {
  ArchetypeModel m;
  std::size_t k = 0;
  for (const auto& rec : read_flat(in, "deckshift-archetype", kModelVersion)) {
    const auto& key = rec.key();
    if (key == "features") {
      if (rec.arity() != kNumDeckFeatures) throw ParseError(rec.line, "feature list mismatch");
      for (std::size_t f = 0; f < kNumDeckFeatures; ++f)
        if (rec.tokens[f + 1] != DeckFeatures::names()[f])
          throw ParseError(rec.line, "unexpected feature order");
    } else if (key == "weights") {
      if (rec.arity() != kNumDeckFeatures) throw ParseError(rec.line, "need 7 weights");
      for (std::size_t f = 0; f < kNumDeckFeatures; ++f) m.weights[f] = rec.number(f);
    } else if (key == "k") {
      k = static_cast<std::size_t>(rec.integer(0));
      m.centroids = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), kNumDeckFeatures);
      m.centroids_raw = m.centroids;
    } else if (key == "quantile" || key == "positions") {
      const auto f = static_cast<std::size_t>(rec.integer(0));
      if (f >= kNumDeckFeatures) throw ParseError(rec.line, "feature index out of range");
      auto& dst = key == "quantile" ? m.quantiles.tables[f].values : m.quantiles.tables[f].positions;
      for (std::size_t i = 1; i < rec.arity(); ++i) dst.push_back(rec.number(i));
    } else if (key == "centroid" || key == "centroid_raw") {
      const auto j = rec.integer(0);
      if (j < 0 || static_cast<std::size_t>(j) >= k || rec.arity() != kNumDeckFeatures + 1)
        throw ParseError(rec.line, "bad centroid record");
      auto& dst = key == "centroid" ? m.centroids : m.centroids_raw;
      for (std::size_t f = 0; f < kNumDeckFeatures; ++f)
        dst(j, static_cast<Eigen::Index>(f)) = rec.number(f + 1);
    } else if (key == "state") {
      StateInfo s;
      s.state_id = static_cast<int>(rec.integer(0));
      const auto& g = rec.tokens.at(2);
      s.group = g == "Cycle" ? StateGroup::Cycle
                : g == "Beatdown" ? StateGroup::Beatdown
                : g == "Specialist" ? StateGroup::Specialist
                                    : StateGroup::Control;
      s.name = rec.tokens.at(3);
      m.states.push_back(std::move(s));
    } else if (key == "silhouette") {
      m.silhouette = rec.number(0);
    } else if (key == "inertia") {
      m.inertia = rec.number(0);
    } else {
      throw ParseError(rec.line, "unknown record '" + key + "'");
    }
  }
  for (const auto& t : m.quantiles.tables)
    if (t.values.size() != t.positions.size())
      throw DataError("archetype model quantile tables are inconsistent");
  if (k == 0 || m.states.size() != k) throw DataError("archetype model is incomplete");
  return m;
}

void save_archetype_model(const std::string& path, const ArchetypeModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_archetype_model(out, model);
}

ArchetypeModel load_archetype_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_archetype_model(in);
}

}  // namespace deckshift
