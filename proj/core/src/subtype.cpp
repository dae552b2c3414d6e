#include "deckshift/subtype.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "deckshift/clustering_metrics.hpp"
#include "deckshift/flatfile.hpp"
#include "deckshift/kmeans.hpp"

namespace deckshift {
namespace {

constexpr int kModelVersion = 1;
constexpr int kTableVersion = 1;

Subtype subtype_from_int(long long v) {
  if (v < 0 || v > 2) throw DataError("subtype label out of range");
  return static_cast<Subtype>(v);
}

}  // namespace

std::string_view to_string(Subtype s) {
  switch (s) {
    case Subtype::Loyalist: return "loyalist";
    case Subtype::LossReactive: return "loss_reactive";
    case Subtype::Flex: return "flex";
  }
  return "?";
}

std::string_view to_string(GateDecision d) { return d == GateDecision::Stay ? "stay" : "forward"; }

GateDecision persona_gate(Subtype s) {
  return s == Subtype::Loyalist ? GateDecision::Stay : GateDecision::Forward;
}

SubtypeFeatures BehaviorProfile::features() const {
  return {overall_switch_rate, loss_reactivity, avg_change_magnitude, top_deck_occupancy};
}

double jaccard_distance(const Deck& a, const Deck& b) {
  // Decks are sorted and hold distinct cards.
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common, ++i, ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const double uni = static_cast<double>(a.size() + b.size() - common);
  return 1.0 - static_cast<double>(common) / uni;
}

BehaviorProfile behavior_profile(std::span<const MatchRecord> m) {
  BehaviorProfile p;
  p.matches = m.size();
  if (m.empty()) return p;
  std::size_t changes = 0, loss_changes = 0, win_changes = 0;
  double magnitude = 0.0;
  for (std::size_t t = 1; t < m.size(); ++t) {
    const bool dc = m[t].deck != m[t - 1].deck;
    if (m[t - 1].win()) {
      ++p.post_win_obs;
      win_changes += dc;
    } else {
      ++p.post_loss_obs;
      loss_changes += dc;
    }
    if (dc) {
      ++changes;
      magnitude += jaccard_distance(m[t].deck, m[t - 1].deck);
    }
  }
  auto rate = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  p.overall_switch_rate = rate(changes, m.size() - 1);
  p.post_loss_switch_rate = rate(loss_changes, p.post_loss_obs);
  p.post_win_switch_rate = rate(win_changes, p.post_win_obs);
  p.loss_reactivity = p.post_loss_switch_rate - p.post_win_switch_rate;
  p.avg_change_magnitude = changes == 0 ? 0.0 : magnitude / static_cast<double>(changes);

  std::map<Deck, std::size_t> usage;
  for (const auto& r : m) ++usage[r.deck];
  std::size_t top = 0;
  const double n = static_cast<double>(m.size());
  for (const auto& [deck, c] : usage) {
    top = std::max(top, c);
    const double q = static_cast<double>(c) / n;
    p.deck_entropy -= q * std::log(q);
  }
  p.top_deck_occupancy = static_cast<double>(top) / n;
  return p;
}

BehaviorProfile behavior_profile(const PlayerHistory& h) { return behavior_profile(std::span(h.matches)); }

Eigen::RowVectorXd SubtypeModel::standardize(const SubtypeFeatures& f) const {
  Eigen::RowVectorXd x(static_cast<Eigen::Index>(kNumSubtypeFeatures));
  for (std::size_t i = 0; i < kNumSubtypeFeatures; ++i)
    x(static_cast<Eigen::Index>(i)) = (f[i] - mean[i]) / stddev[i];
  return x;
}

Subtype SubtypeModel::assign(const BehaviorProfile& p) const {
  return static_cast<Subtype>(nearest_centroid(centroids, standardize(p.features())));
}

std::vector<Subtype> SubtypeModel::assign_batch(const std::vector<BehaviorProfile>& profiles) const {
  std::vector<Subtype> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) out.push_back(assign(p));
  return out;
}

SubtypeModel fit_subtypes(const std::vector<BehaviorProfile>& profiles,
                          const SubtypeFitOptions& options) {
  const auto n = profiles.size();
  const auto d = static_cast<Eigen::Index>(kNumSubtypeFeatures);
  if (n < kNumSubtypes) throw DataError("subtype fit needs at least three players");
  SubtypeModel model;
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = profiles[i].features();
    for (Eigen::Index j = 0; j < d; ++j) raw(static_cast<Eigen::Index>(i), j) = f[static_cast<std::size_t>(j)];
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mu = raw.col(j).mean();
    const double var = (raw.col(j).array() - mu).square().mean();
    model.mean[static_cast<std::size_t>(j)] = mu;
    model.stddev[static_cast<std::size_t>(j)] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  Eigen::MatrixXd z(raw.rows(), d);
  for (std::size_t i = 0; i < n; ++i)
    z.row(static_cast<Eigen::Index>(i)) = model.standardize(profiles[i].features());

  KMeansOptions km;
  km.k = kNumSubtypes;
  km.restarts = options.restarts;
  km.max_iter = options.max_iter;
  km.tol = options.tol;
  km.seed = options.seed;
  const auto result = kmeans(z, km);

  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(3, d);
  std::array<double, 3> counts{};
  for (std::size_t i = 0; i < n; ++i) {
    means.row(result.labels[i]) += raw.row(static_cast<Eigen::Index>(i));
    counts[static_cast<std::size_t>(result.labels[i])] += 1.0;
  }
  for (int c = 0; c < 3; ++c) means.row(c) /= counts[static_cast<std::size_t>(c)];

  // Lowest switch rate is the loyalist; of the rest the more loss-reactive one.
  std::array<int, 3> raw_for{};
  int loyal = 0;
  for (int c = 1; c < 3; ++c)
    if (means(c, 0) < means(loyal, 0)) loyal = c;
  std::array<int, 2> rest{};
  for (int c = 0, r = 0; c < 3; ++c)
    if (c != loyal) rest[static_cast<std::size_t>(r++)] = c;
  const bool first_reactive = means(rest[0], 1) >= means(rest[1], 1);
  raw_for[0] = loyal;
  raw_for[1] = first_reactive ? rest[0] : rest[1];
  raw_for[2] = first_reactive ? rest[1] : rest[0];

  model.centroids.resize(3, d);
  model.centroids_raw.resize(3, d);
  for (int c = 0; c < 3; ++c) {
    model.centroids.row(c) = result.centroids.row(raw_for[static_cast<std::size_t>(c)]);
    model.centroids_raw.row(c) = means.row(raw_for[static_cast<std::size_t>(c)]);
  }
  model.inertia = result.inertia;
  model.fit_labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    model.fit_labels.push_back(nearest_centroid(model.centroids, z.row(static_cast<Eigen::Index>(i))));
  try {
    model.silhouette = silhouette_score(z, model.fit_labels);
  } catch (const DataError&) {
    model.silhouette = 0.0;
  }
  return model;
}

void write_subtype_model(std::ostream& out, const SubtypeModel& m) {
  write_flat_header(out, "deckshift-subtype", kModelVersion);
  out << "features overall_switch_rate loss_reactivity avg_change_magnitude top_deck_occupancy\n";
  out << "mean";
  for (double v : m.mean) out << ' ' << format_double(v);
  out << "\nstddev";
  for (double v : m.stddev) out << ' ' << format_double(v);
  out << '\n';
  for (Eigen::Index c = 0; c < m.centroids.rows(); ++c) {
    out << "centroid " << c << ' ' << to_string(static_cast<Subtype>(c));
    for (Eigen::Index j = 0; j < m.centroids.cols(); ++j) out << ' ' << format_double(m.centroids(c, j));
    out << "\ncentroid_raw " << c << ' ' << to_string(static_cast<Subtype>(c));
    for (Eigen::Index j = 0; j < m.centroids_raw.cols(); ++j)
      out << ' ' << format_double(m.centroids_raw(c, j));
    out << '\n';
  }
  out << "silhouette " << format_double(m.silhouette) << '\n';
  out << "inertia " << format_double(m.inertia) << '\n';
}

SubtypeModel read_subtype_model(std::istream& in) {
  SubtypeModel m;
  m.centroids = Eigen::MatrixXd::Constant(3, kNumSubtypeFeatures, std::nan(""));
  m.centroids_raw = m.centroids;
  for (const auto& rec : read_flat(in, "deckshift-subtype", kModelVersion)) {
    const auto& key = rec.key();
    if (key == "features") {
      if (rec.arity() != kNumSubtypeFeatures) throw ParseError(rec.line, "feature list mismatch");
    } else if (key == "mean" || key == "stddev") {
      if (rec.arity() != kNumSubtypeFeatures) throw ParseError(rec.line, "need 4 values");
      auto& dst = key == "mean" ? m.mean : m.stddev;
      for (std::size_t j = 0; j < kNumSubtypeFeatures; ++j) dst[j] = rec.number(j);
    } else if (key == "centroid" || key == "centroid_raw") {
      const auto c = rec.integer(0);
      if (c < 0 || c > 2 || rec.arity() != kNumSubtypeFeatures + 2)
        throw ParseError(rec.line, "bad centroid record");
      auto& dst = key == "centroid" ? m.centroids : m.centroids_raw;
      for (std::size_t j = 0; j < kNumSubtypeFeatures; ++j)
        dst(c, static_cast<Eigen::Index>(j)) = rec.number(j + 2);
    } else if (key == "silhouette") {
      m.silhouette = rec.number(0);
    } else if (key == "inertia") {
      m.inertia = rec.number(0);
    } else {
      throw ParseError(rec.line, "unknown record '" + key + "'");
    }
  }
  if (m.centroids.hasNaN()) throw DataError("subtype model is missing centroids");
  return m;
}

void save_subtype_model(const std::string& path, const SubtypeModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_subtype_model(out, model);
}

SubtypeModel load_subtype_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_subtype_model(in);
}

void write_subtype_table(std::ostream& out, const std::vector<SubtypeRow>& rows) {
  write_flat_header(out, "deckshift-subtypes", kTableVersion);
  out << "# player label overall_switch_rate loss_reactivity avg_change_magnitude "
         "top_deck_occupancy post_loss_switch_rate post_win_switch_rate deck_entropy\n";
  for (const auto& r : rows) {
    const auto& p = r.profile;
    out << r.player_id << ' ' << static_cast<int>(r.label);
    for (double v : {p.overall_switch_rate, p.loss_reactivity, p.avg_change_magnitude,
                     p.top_deck_occupancy, p.post_loss_switch_rate, p.post_win_switch_rate,
                     p.deck_entropy})
      out << ' ' << format_double(v);
    out << '\n';
  }
}

std::vector<SubtypeRow> read_subtype_table(std::istream& in) {
  std::vector<SubtypeRow> rows;
  for (const auto& rec : read_flat(in, "deckshift-subtypes", kTableVersion)) {
    if (rec.arity() != 8) throw ParseError(rec.line, "expected 9 fields");
    SubtypeRow r;
    r.player_id = rec.key();
    r.label = subtype_from_int(rec.integer(0));
    auto& p = r.profile;
    p.overall_switch_rate = rec.number(1);
    p.loss_reactivity = rec.number(2);
    p.avg_change_magnitude = rec.number(3);
    p.top_deck_occupancy = rec.number(4);
    p.post_loss_switch_rate = rec.number(5);
    p.post_win_switch_rate = rec.number(6);
    p.deck_entropy = rec.number(7);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace deckshift
