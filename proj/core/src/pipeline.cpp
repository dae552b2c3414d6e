#include "deckshift/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "deckshift/flatfile.hpp"
#include "deckshift/metrics.hpp"

namespace deckshift {
namespace fs = std::filesystem;

namespace {

std::size_t get_size(const KeyValueConfig& kv, const std::string& key, std::size_t def) {
  const long long v = kv.get_int(key, static_cast<long long>(def));
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

void apply_mlp(const KeyValueConfig& kv, const std::string& tag, MlpTrainConfig& c) {
  c.hidden = get_size(kv, tag + ".hidden", c.hidden);
  c.batch = get_size(kv, tag + ".batch", c.batch);
  c.epochs = get_size(kv, tag + ".epochs", c.epochs);
  c.patience = get_size(kv, tag + ".patience", c.patience);
  c.pos_weight = kv.get_double(tag + ".pos_weight", c.pos_weight);
  c.optim.kind = parse_optimizer(kv.get_string(tag + ".optimizer", std::string(to_string(c.optim.kind))));
  c.optim.lr = kv.get_double(tag + ".lr", c.optim.lr);
  c.optim.clip_norm = kv.get_double(tag + ".clip_norm", c.optim.clip_norm);
  if (c.hidden == 0 || c.batch == 0) throw ConfigError(tag + " hidden and batch must be positive");
  if (!(c.optim.lr > 0.0)) throw ConfigError(tag + ".lr must be positive");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  auto out = open_out(p);
  out << text;
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& cols) {
  if (cols.empty()) return {};
  Eigen::MatrixXd x(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = cols[i];
  return x;
}

Eigen::RowVectorXd row(const std::vector<double>& v) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

const DecisionContext& ctx_of(const PipelineState& st, std::size_t event) {
  const auto& c = st.contexts.at(event);
  if (!c) throw Error("no decision context for event " + std::to_string(event));
  return *c;
}

bool forwarded(int subtype) { return persona_gate(static_cast<Subtype>(subtype)) == GateDecision::Forward; }

std::string ablation_name(char c) {
  switch (c) {
    case 'a': return "(a) Adoptability only";
    case 'b': return "(b) + PersonaGate";
    case 'c': return "(c) + TimingGate";
    default: return "(d) + TQP fusion";
  }
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

}  // namespace

PipelineConfig::PipelineConfig() {
  gate.pos_weight = 1.5;
  derive_seeds();
}

void PipelineConfig::derive_seeds() {
  generator.seed = derive_seed(seed, std::string_view("synth"));
  archetype.seed = derive_seed(seed, std::string_view("archetype"));
  subtype.seed = derive_seed(seed, std::string_view("subtype"));
  encoder.seed = derive_seed(seed, std::string_view("encoder"));
  gate.seed = derive_seed(seed, std::string_view("gate"));
  quality.seed = derive_seed(seed, std::string_view("quality"));
  cf.seed = derive_seed(seed, std::string_view("cf"));
}

PipelineConfig PipelineConfig::from_key_values(const KeyValueConfig& kv) {
  PipelineConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.derive_seeds();

  const auto synth = kv.with_prefix("synth.");
  const auto synth_seed = c.generator.seed;
  c.generator = GeneratorConfig::from_key_values(synth);
  if (!synth.has("seed")) c.generator.seed = synth_seed;

  c.filter.min_matches = get_size(kv, "filter.min_matches", c.filter.min_matches);
  c.filter.min_post_loss = get_size(kv, "filter.min_post_loss", c.filter.min_post_loss);
  c.filter.min_post_win = get_size(kv, "filter.min_post_win", c.filter.min_post_win);

  c.splits.train = kv.get_double("split.train", c.splits.train);
  c.splits.val = kv.get_double("split.val", c.splits.val);
  c.splits.test = kv.get_double("split.test", c.splits.test);

  c.archetype.k = get_size(kv, "archetype.k", c.archetype.k);
  c.archetype.restarts = get_size(kv, "archetype.restarts", c.archetype.restarts);
  c.archetype.max_iter = get_size(kv, "archetype.max_iter", c.archetype.max_iter);
  c.archetype.silhouette_sample = get_size(kv, "archetype.silhouette_sample", c.archetype.silhouette_sample);
  if (kv.has("archetype.weights")) {
    const auto w = kv.get_doubles("archetype.weights", {});
    if (w.size() != kNumDeckFeatures) throw ConfigError("archetype.weights needs 7 values");
    std::copy(w.begin(), w.end(), c.archetype.weights.begin());
  }
  c.archetype_max_decks = get_size(kv, "archetype.max_decks", c.archetype_max_decks);

  c.subtype.restarts = get_size(kv, "subtype.restarts", c.subtype.restarts);
  c.subtype.max_iter = get_size(kv, "subtype.max_iter", c.subtype.max_iter);
  c.min_history_for_subtype = get_size(kv, "subtype.min_history", c.min_history_for_subtype);

  c.encoder.apply(kv);
  c.transition.horizon = get_size(kv, "transition.horizon", c.transition.horizon);
  c.transition.min_next = get_size(kv, "transition.min_next", c.transition.min_next);
  c.transition.k = c.encoder.k;

  apply_mlp(kv, "gate", c.gate);
  apply_mlp(kv, "quality", c.quality);
  c.theta.max_approval = kv.get_double("theta.max_approval", c.theta.max_approval);
  c.theta.min_approved_switches = get_size(kv, "theta.min_approved_switches", c.theta.min_approved_switches);

  c.fusion.alpha = kv.get_double("fusion.alpha", c.fusion.alpha);
  c.fusion.scale = kv.get_double("fusion.scale", c.fusion.scale);
  c.fusion.min_support = get_size(kv, "fusion.min_support", c.fusion.min_support);
  c.fusion.grid = kv.get_doubles("fusion.grid", c.fusion.grid);
  c.fusion.validate();

  c.cf.rank = get_size(kv, "cf.rank", c.cf.rank);
  c.cf.iterations = get_size(kv, "cf.iterations", c.cf.iterations);
  c.cf.reg = kv.get_double("cf.reg", c.cf.reg);
  c.wr_threshold = kv.get_double("baseline.wr_threshold", c.wr_threshold);
  c.oracle_tau = kv.get_double("baseline.oracle_tau", c.oracle_tau);
  c.bootstrap_resamples = get_size(kv, "bootstrap.resamples", c.bootstrap_resamples);

  c.matches_path = kv.get_string("input.matches", "");
  c.catalog_path = kv.get_string("input.cards", "");
  if (c.matches_path.empty() != c.catalog_path.empty())
    throw ConfigError("input.matches and input.cards must be given together");
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) { return from_key_values(KeyValueConfig::load(path)); }

Recommender ModelBundle::recommender() const {
  return Recommender(gate, quality, counts, std::make_shared<FrequencyScorer>(counts), fusion);
}

void ModelBundle::save(const std::string& dir) const {
  const fs::path d(dir);
  fs::create_directories(d);
  save_catalog((d / files::kCatalog).string(), catalog);
  save_archetype_model((d / files::kArchetype).string(), archetype);
  save_subtype_model((d / files::kSubtype).string(), subtype);
  save_encoder((d / files::kEncoder).string(), encoder);
  save_heads((d / files::kHeads).string(), gate, quality);
  {
    auto out = open_out(d / files::kCounts);
    counts.write(out);
  }
  {
    auto out = open_out(d / files::kFusion);
    fusion.write(out);
  }
  auto out = open_out(d / files::kManifest);
  out << "# deckshift model bundle\n";
  out << "format = 1\n";
  out << "min_history_for_subtype = " << min_history_for_subtype << '\n';
  out << "window = " << encoder.config().k << '\n';
}

std::unique_ptr<ModelBundle> ModelBundle::load(const std::string& dir) {
  const fs::path d(dir);
  for (const char* f : {files::kManifest, files::kCatalog, files::kArchetype, files::kSubtype, files::kEncoder,
                        files::kHeads, files::kCounts, files::kFusion})
    if (!fs::exists(d / f)) throw ConfigError("model directory " + dir + " lacks " + f);
  auto m = std::make_unique<ModelBundle>();
  const auto manifest = KeyValueConfig::load((d / files::kManifest).string());
  if (manifest.get_int("format", 0) != 1) throw ConfigError("unsupported model bundle format");
  m->min_history_for_subtype = get_size(manifest, "min_history_for_subtype", m->min_history_for_subtype);
  m->catalog = load_catalog((d / files::kCatalog).string());
  m->archetype = load_archetype_model((d / files::kArchetype).string());
  m->subtype = load_subtype_model((d / files::kSubtype).string());
  m->encoder = load_encoder((d / files::kEncoder).string());
  load_heads((d / files::kHeads).string(), m->gate, m->quality);
  {
    std::ifstream in(d / files::kCounts);
    m->counts = TransitionCounts::read(in);
  }
  std::ifstream in(d / files::kFusion);
  m->fusion = FusionConfig::read(in);
  if (m->encoder.config().vocab != m->catalog.size())
    throw ConfigError("encoder vocabulary does not match the card catalog");
  return m;
}

int history_subtype(const ModelBundle& models, std::span<const MatchRecord> matches, bool* provisional) {
  const bool prov = matches.size() < models.min_history_for_subtype;
  if (provisional) *provisional = prov;
  if (prov) return kProvisionalSubtype;
  return static_cast<int>(models.subtype.assign(behavior_profile(matches)));
}

DecisionContext build_context(const ModelBundle& models, const std::string& player_id,
                              std::span<const MatchRecord> matches, int subtype) {
  const std::size_t k = models.encoder.config().k;
  if (matches.size() < k)
    throw DataError("a decision needs at least " + std::to_string(k) + " matches, got " +
                    std::to_string(matches.size()));
  std::vector<int> states;
  states.reserve(matches.size());
  for (const auto& m : matches) states.push_back(models.archetype.assign(m.deck, models.catalog));
  const auto seq = make_sequence(player_id, matches, states, subtype);
  const std::size_t start = matches.size() - k;
  const auto emb = encode_sequence(models.encoder, seq, start);
  DecisionContext ctx;
  ctx.player_id = player_id;
  ctx.subtype = subtype;
  ctx.state = states.back();
  ctx.z_cls = emb.z_cls.at(start);
  ctx.z_user = emb.z_user.at(start);
  ctx.mf = make_window(seq, start, k).mf;
  return ctx;
}

void stage_data(PipelineState& st, std::vector<PlayerHistory> raw) {
  st.histories = apply_filters(raw, st.config.filter, &st.filter);
  if (st.histories.empty()) throw DataError("no player survived the ingestion filters");
  st.splits = make_splits(st.histories, st.config.splits);
}

void stage_archetype(PipelineState& st) {
  const auto& catalog = st.models->catalog;
  std::set<Deck> distinct;
  for (std::size_t p = 0; p < st.histories.size(); ++p) {
    const auto& b = st.splits.players[p];
    for (std::size_t t = b.begin(Split::Train); t < b.end(Split::Train); ++t)
      distinct.insert(st.histories[p].matches[t].deck);
  }
  std::vector<Deck> decks(distinct.begin(), distinct.end());
  if (decks.size() > st.config.archetype_max_decks) {
    std::mt19937_64 rng(derive_seed(st.config.seed, std::string_view("archetype-decks")));
    std::shuffle(decks.begin(), decks.end(), rng);
    decks.resize(st.config.archetype_max_decks);
    std::sort(decks.begin(), decks.end());
  }
  std::vector<DeckFeatures> corpus;
  corpus.reserve(decks.size());
  for (const auto& d : decks) corpus.push_back(deck_features(d, catalog));
  st.models->archetype = fit_archetypes(corpus, st.config.archetype);
}

void stage_assign_states(PipelineState& st) {
  std::map<Deck, int> cache;
  st.states.assign(st.histories.size(), {});
  for (std::size_t p = 0; p < st.histories.size(); ++p) {
    auto& s = st.states[p];
    s.reserve(st.histories[p].size());
    for (const auto& m : st.histories[p].matches) {
      auto it = cache.find(m.deck);
      if (it == cache.end()) it = cache.emplace(m.deck, st.models->archetype.assign(m.deck, st.models->catalog)).first;
      s.push_back(it->second);
    }
  }
}

void stage_subtype(PipelineState& st, bool fit) {
  st.profiles.clear();
  for (std::size_t p = 0; p < st.histories.size(); ++p) {
    const auto& b = st.splits.players[p];
    std::span<const MatchRecord> all(st.histories[p].matches);
    st.profiles.push_back(behavior_profile(all.subspan(0, b.end(Split::Train))));
  }
  if (fit) st.models->subtype = fit_subtypes(st.profiles, st.config.subtype);
  st.models->min_history_for_subtype = st.config.min_history_for_subtype;
  st.subtypes.clear();
  for (auto s : st.models->subtype.assign_batch(st.profiles)) st.subtypes.push_back(static_cast<int>(s));
}

void stage_sequences(PipelineState& st) {
  st.sequences.clear();
  st.sequences.reserve(st.histories.size());
  for (std::size_t p = 0; p < st.histories.size(); ++p)
    st.sequences.push_back(
        make_sequence(st.histories[p].player_id, st.histories[p].matches, st.states[p], st.subtypes[p]));
}

void stage_encoder(PipelineState& st, std::ostream* log) {
  auto cfg = st.config.encoder;
  cfg.vocab = st.models->catalog.size();
  st.models->encoder = Encoder(init_encoder(cfg, cfg.seed));
  const auto train = extract_windows(st.histories, st.splits, Split::Train, cfg.k);
  const auto val = extract_windows(st.histories, st.splits, Split::Val, cfg.k);
  st.pretrain = pretrain(st.models->encoder, st.sequences, train, val, log);
}

void stage_events(PipelineState& st) {
  auto tcfg = st.config.transition;
  tcfg.k = st.config.encoder.k;
  st.events = extract_events(st.histories, st.states, st.subtypes, st.splits, tcfg, &st.extraction);
  st.baseline = StayBaselineTable::build(st.events);
  attach_net_effects(st.events, *st.baseline);
  st.labels = build_timing_labels(st.events, derive_seed(st.config.seed, std::string_view("labels")));
}

void stage_contexts(PipelineState& st) {
  std::vector<std::vector<std::size_t>> per_player(st.histories.size());
  for (const auto* set : {&st.labels.train, &st.labels.val, &st.labels.test})
    for (const auto& l : *set) per_player[st.events[l.event].player].push_back(l.event);
  st.contexts.assign(st.events.size(), std::nullopt);
  const auto& enc = st.models->encoder;
  const std::size_t k = enc.config().k;
  for (std::size_t p = 0; p < per_player.size(); ++p) {
    auto& ids = per_player[p];
    if (ids.empty()) continue;
    std::size_t max_start = 0;
    for (auto i : ids) max_start = std::max(max_start, st.events[i].start);
    const auto& seq = st.sequences[p];
    const auto emb = encode_sequence(enc, seq, max_start);
    for (auto i : ids) {
      const auto& e = st.events[i];
      DecisionContext c;
      c.player_id = e.player_id;
      c.subtype = e.subtype;
      c.state = e.from_state;
      c.z_cls = emb.z_cls.at(e.start);
      c.z_user = emb.z_user.at(e.start);
      c.mf = make_window(seq, e.start, k).mf;
      st.contexts[i] = std::move(c);
    }
  }
}

void stage_gate(PipelineState& st, std::ostream* log) {
  auto gate_set = [&](const std::vector<TimingLabel>& ls, Eigen::MatrixXd& x, Eigen::RowVectorXd& y) {
    std::vector<Eigen::VectorXd> cols;
    std::vector<double> ys;
    for (const auto& l : ls) {
      cols.push_back(gate_features(ctx_of(st, l.event)));
      ys.push_back(l.label);
    }
    x = stack(cols);
    y = row(ys);
  };
  Eigen::MatrixXd xt, xv;
  Eigen::RowVectorXd yt, yv;
  gate_set(st.labels.train, xt, yt);
  gate_set(st.labels.val, xv, yv);
  st.models->gate = train_timing_gate(xt, yt, xv, yv, st.config.gate, &st.gate_report, log);

  std::vector<double> probs, y;
  std::vector<char> sw;
  for (const auto& l : st.labels.val) {
    const auto& e = st.events[l.event];
    if (!forwarded(e.subtype)) continue;
    probs.push_back(st.models->gate.probability(ctx_of(st, l.event)));
    y.push_back(e.y_tq);
    sw.push_back(e.is_switch());
  }
  st.theta = tune_theta(probs, y, sw, st.config.theta);
  st.models->gate.theta = st.theta.theta;
  if (log)
    *log << "theta " << format_double(st.theta.theta) << (st.theta.fallback ? " (fallback)" : "") << '\n';

}

void stage_quality(PipelineState& st, std::ostream* log) {
  Eigen::MatrixXd xt, xv;
  Eigen::RowVectorXd yt, yv;
  auto quality_set = [&](const std::vector<TimingLabel>& ls, Eigen::MatrixXd& x, Eigen::RowVectorXd& yy) {
    std::vector<Eigen::VectorXd> cols;
    std::vector<double> ys;
    for (const auto& l : ls) {
      const auto& e = st.events[l.event];
      if (!e.is_switch()) continue;
      cols.push_back(quality_features(ctx_of(st, l.event), e.to_state));
      ys.push_back(e.y_tq);
    }
    x = stack(cols);
    yy = row(ys);
  };
  quality_set(st.labels.train, xt, yt);
  quality_set(st.labels.val, xv, yv);
  st.models->quality = train_quality(xt, yt, xv, yv, st.config.quality, &st.quality_report, log);
}

void stage_heads(PipelineState& st, std::ostream* log) {
  stage_gate(st, log);
  stage_quality(st, log);
}

void stage_fusion(PipelineState& st) {
  st.models->counts = TransitionCounts::build(st.events);
  st.models->fusion = st.config.fusion;
  const auto rec = st.models->recommender();
  std::vector<AlphaSample> samples;
  for (const auto& l : st.labels.val) {
    const auto& e = st.events[l.event];
    if (!forwarded(e.subtype)) continue;
    samples.push_back({ctx_of(st, l.event), e.is_switch(), e.to_state, e.y_tq});
  }
  st.alpha = tune_alpha(rec, samples, st.config.fusion.grid);
  st.models->fusion.alpha = st.alpha.alpha;
}

void stage_eval(PipelineState& st) {
  const auto& models = *st.models;
  const std::uint64_t eval_seed = derive_seed(st.config.seed, std::string_view("eval"));

  std::vector<double> pred, zero, y;
  for (const auto& l : st.labels.test) {
    const auto& e = st.events[l.event];
    if (!e.is_switch()) continue;
    pred.push_back(models.quality.predict(ctx_of(st, l.event), e.to_state));
    zero.push_back(0.0);
    y.push_back(e.y_tq);
  }
  st.tqp_report = evaluate_predictor(pred, y, st.config.bootstrap_resamples, eval_seed);
  st.zero_report = evaluate_predictor(zero, y, st.config.bootstrap_resamples, eval_seed);

  std::vector<EvalItem> all;
  for (const auto& l : st.labels.test) all.push_back({&st.events[l.event], &ctx_of(st, l.event)});
  const auto items = forwarded_items(all);
  const QualityFn q = [&](const EvalItem& it, int to) { return models.quality.predict(*it.ctx, to); };

  auto aux = build_baseline_aux(st.histories, st.states, st.splits, st.events, st.config.cf);
  aux.wr_threshold = st.config.wr_threshold;
  aux.oracle_tau = st.config.oracle_tau;
  aux.seed = derive_seed(st.config.seed, std::string_view("wr-threshold"));

  st.policy_rows.clear();
  for (auto b : all_baselines())
    st.policy_rows.push_back({std::string(to_string(b)), evaluate_policy(run_baseline(b, items, aux), items, q)});
  const auto rec = models.recommender();
  const auto abl = run_ablation(items, rec);
  st.policy_rows.push_back({ablation_name('a'), evaluate_policy(abl.a, items, q)});
  st.policy_rows.push_back({ablation_name('b'), evaluate_policy(abl.b, items, q)});
  st.policy_rows.push_back({ablation_name('c'), evaluate_policy(abl.c, items, q)});
  st.policy_rows.push_back({ablation_name('d'), evaluate_policy(abl.d, items, q)});

  st.subtype_rows.clear();
  for (int u : {static_cast<int>(Subtype::LossReactive), static_cast<int>(Subtype::Flex)}) {
    std::vector<EvalItem> sub;
    std::vector<PolicyDecision> dc, dd;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].event->subtype != u) continue;
      sub.push_back(items[i]);
      dc.push_back(abl.c[i]);
      dd.push_back(abl.d[i]);
    }
    const std::string tag(to_string(static_cast<Subtype>(u)));
    st.subtype_rows.push_back({"(c) " + tag, evaluate_policy(dc, sub, q)});
    st.subtype_rows.push_back({"(d) " + tag, evaluate_policy(dd, sub, q)});
  }
}

PipelineReports render_reports(const PipelineState& st) {
  PipelineReports r;
  const auto& models = *st.models;
  {
    std::ostringstream s;
    s << "deckshift pipeline summary\n\n";
    s << "seed " << st.config.seed << '\n';
    s << "players retained " << st.filter.retained << " of " << st.filter.input_players << '\n';
    std::array<std::size_t, kNumSubtypes> counts{};
    for (int u : st.subtypes) ++counts[static_cast<std::size_t>(u)];
    s << "subtypes";
    for (int u = 0; u < kNumSubtypes; ++u)
      s << ' ' << to_string(static_cast<Subtype>(u)) << '=' << counts[static_cast<std::size_t>(u)];
    s << "\nsubtype silhouette " << fmt(models.subtype.silhouette) << '\n';
    s << "archetype states " << models.archetype.k() << " silhouette " << fmt(models.archetype.silhouette) << '\n';
    s << "encoder windows " << st.pretrain.train_windows << " best epoch " << st.pretrain.best_epoch << '\n';
    const auto& hm = st.pretrain.val_metrics;
    s << "encoder val auc_dc " << fmt(hm.auc_dc) << " acc_dv " << fmt(hm.acc_dv) << " auc_win " << fmt(hm.auc_win)
      << " acc_sub " << fmt(hm.acc_sub) << " mse_cd " << fmt(hm.mse_cd) << '\n';
    for (int sp = 0; sp < 3; ++sp)
      s << "events " << to_string(static_cast<Split>(sp)) << ' ' << st.extraction.events[sp] << " switches "
        << st.extraction.switches[sp] << " dropped " << st.extraction.dropped_short_tail[sp] << '\n';
    s << "timing labels train " << st.labels.train.size() << " val " << st.labels.val.size() << " test "
      << st.labels.test.size() << (st.labels.stay_shortfall ? " (stay shortfall)" : "") << '\n';
    s << "theta " << fmt(st.theta.theta) << " val approval " << fmt(st.theta.approval_rate)
      << (st.theta.fallback ? " fallback" : "") << '\n';
    s << "alpha " << fmt(st.alpha.alpha, 2) << (st.alpha.fallback ? " fallback" : "") << '\n';
    s << "note: Prec@1 scores the logged transition even when the recommended target differs\n";
    r.summary = s.str();
  }
  const std::vector<std::pair<std::string, PredictorReport>> pred{{"TQP", st.tqp_report},
                                                                  {"Always-Zero", st.zero_report}};
  {
    std::ostringstream s;
    write_predictor_table(s, pred);
    r.predictors = s.str();
  }
  {
    std::ostringstream s;
    write_predictor_flat(s, pred);
    r.predictors_flat = s.str();
  }
  {
    std::ostringstream s;
    write_policy_table(s, st.policy_rows);
    r.policies = s.str();
  }
  {
    std::ostringstream s;
    write_policy_flat(s, st.policy_rows);
    r.policies_flat = s.str();
  }
  {
    std::ostringstream s;
    write_policy_table(s, st.subtype_rows);
    r.subtypes = s.str();
  }
  return r;
}

void run_pipeline(PipelineState& st, std::ostream* log) {
  auto say = [&](const char* what) {
    if (log) *log << "== " << what << '\n';
  };
  std::vector<PlayerHistory> raw;
  if (st.config.matches_path.empty()) {
    say("generate");
    auto pop = generate_population(st.config.generator);
    st.models->catalog = std::move(pop.catalog);
    raw = std::move(pop.histories);
    st.truth = std::move(pop.truth);
    st.ingest = {};
  } else {
    say("ingest");
    st.models->catalog = load_catalog(st.config.catalog_path);
    raw = load_matchlog(st.config.matches_path, st.models->catalog, &st.ingest);
  }
  stage_data(st, std::move(raw));
  say("archetype");
  stage_archetype(st);
  stage_assign_states(st);
  say("subtype");
  stage_subtype(st);
  stage_sequences(st);
  say("encoder");
  stage_encoder(st, log);
  say("transition");
  stage_events(st);
  say("contexts");
  stage_contexts(st);
  say("heads");
  stage_heads(st, log);
  say("fusion");
  stage_fusion(st);
  say("eval");
  stage_eval(st);
}

void save_reports(const std::string& dir, const PipelineReports& r) {
  const fs::path d(dir);
  fs::create_directories(d);
  write_text(d / "summary.txt", r.summary);
  write_text(d / "predictors.txt", r.predictors);
  write_text(d / "predictors.flat", r.predictors_flat);
  write_text(d / "policies.txt", r.policies);
  write_text(d / "policies.flat", r.policies_flat);
  write_text(d / "subtypes.txt", r.subtypes);
}

void save_artifacts(const std::string& dir, const PipelineState& st) {
  const fs::path d(dir);
  fs::create_directories(d);
  {
    auto out = open_out(d / files::kFilterReport);
    write_filter_report(out, st.filter);
  }
  {
    std::vector<SubtypeRow> rows;
    for (std::size_t p = 0; p < st.histories.size(); ++p)
      rows.push_back({st.histories[p].player_id, static_cast<Subtype>(st.subtypes[p]), st.profiles[p]});
    auto out = open_out(d / files::kSubtypeTable);
    write_subtype_table(out, rows);
  }
  save_events((d / files::kEvents).string(), st.events);
  if (st.baseline) {
    auto out = open_out(d / files::kBaseline);
    st.baseline->write(out);
  }
  auto out = open_out(d / files::kLabels);
  write_labels(out, st.labels);
}

}  // namespace deckshift
