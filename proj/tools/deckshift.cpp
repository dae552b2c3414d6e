// deckshift command line: data generation, stage-by-stage training inside a
// work directory, evaluation, the full pipeline and the advisor service.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "deckshift/flatfile.hpp"
#include "deckshift/pipeline.hpp"
#include "deckshift/service.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace deckshift;

namespace {

std::string path_in(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : PipelineConfig::load(path);
}

// Stages a work directory already holds artifacts for.
enum class Upto { Data, States, Subtypes, Encoder, Events, Contexts, Gate, Quality };

std::unique_ptr<PipelineState> load_work(const std::string& work, const PipelineConfig& cfg, Upto upto) {
  auto st = std::make_unique<PipelineState>();
  st->config = cfg;
  st->models->catalog = load_catalog(path_in(work, files::kCatalog));
  stage_data(*st, load_matchlog(path_in(work, files::kMatches), st->models->catalog, &st->ingest));
  if (upto == Upto::Data) return st;
  st->models->archetype = load_archetype_model(path_in(work, files::kArchetype));
  stage_assign_states(*st);
  if (upto == Upto::States) return st;
  st->models->subtype = load_subtype_model(path_in(work, files::kSubtype));
  stage_subtype(*st, false);
  stage_sequences(*st);
  if (upto == Upto::Subtypes) return st;
  st->models->encoder = load_encoder(path_in(work, files::kEncoder));
  if (upto == Upto::Encoder) return st;
  stage_events(*st);
  if (upto == Upto::Events) return st;
  stage_contexts(*st);
  if (upto == Upto::Contexts) return st;
  st->models->gate = load_gate(path_in(work, files::kGate));
  if (upto == Upto::Gate) return st;
  st->models->quality = load_quality(path_in(work, files::kQuality));
  return st;
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& f) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  f(out);
}

std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

void print_recommendation(const ModelBundle& m, const Recommendation& r) {
  std::cout << nlohmann::json::parse(advice_json(m, r, 0, false)).dump(2) << '\n';
}

AdvisorService* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deckshift: transition-level deck strategy advisor"};
  app.require_subcommand(1);
  std::string config_path, work, out_dir;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic population with planted ground truth");
  std::string synth_config;
  synth->add_option("--config", synth_config, "Generator or pipeline config (flat key = value)");
  synth->add_option("--out", out_dir, "Output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse and filter a match log into a work directory");
  std::string matchlog, cards;
  ingest->add_option("--matchlog", matchlog)->required()->check(CLI::ExistingFile);
  ingest->add_option("--cards", cards)->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", out_dir)->required();
  ingest->add_option("--config", config_path);

  auto add_work = [&](CLI::App* c) {
    c->add_option("--work", work, "Work directory")->required();
    c->add_option("--config", config_path, "Pipeline config (flat key = value)");
  };

  // archetype
  auto* arch = app.add_subcommand("archetype", "Deck archetype states");
  arch->require_subcommand(1);
  auto* arch_fit = arch->add_subcommand("fit", "Fit the archetype model on training decks");
  add_work(arch_fit);
  auto* arch_assign = arch->add_subcommand("assign", "Assign a deck to a state");
  add_work(arch_assign);
  std::string deck_ids;
  arch_assign->add_option("--deck", deck_ids, "Comma separated card ids")->required();
  auto* arch_stab = arch->add_subcommand("stability", "Agreement of independently seeded fits");
  add_work(arch_stab);
  std::size_t runs = 5;
  arch_stab->add_option("--runs", runs);

  // subtype
  auto* sub = app.add_subcommand("subtype", "Behavioral subtypes");
  sub->require_subcommand(1);
  auto* sub_fit = sub->add_subcommand("fit", "Fit subtypes on training-segment profiles");
  add_work(sub_fit);
  auto* sub_assign = sub->add_subcommand("assign", "Label the players of a match log");
  add_work(sub_assign);
  sub_assign->add_option("--matchlog", matchlog)->required()->check(CLI::ExistingFile);

  // encoder
  auto* enc = app.add_subcommand("encoder", "Session encoder");
  enc->require_subcommand(1);
  auto* enc_pre = enc->add_subcommand("pretrain", "Multi-task pre-training");
  add_work(enc_pre);
  auto* enc_encode = enc->add_subcommand("encode", "Embeddings of a player's latest window");
  add_work(enc_encode);
  std::string player;
  enc_encode->add_option("--player", player)->required();
  auto* enc_gc = enc->add_subcommand("gradcheck", "Finite-difference check on a tiny config");
  std::uint64_t gc_seed = 1;
  enc_gc->add_option("--seed", gc_seed);

  // transition
  auto* tr = app.add_subcommand("transition", "Decision events, stay baselines and timing labels");
  tr->require_subcommand(1);
  auto* tr_extract = tr->add_subcommand("extract", "Write the event table");
  auto* tr_base = tr->add_subcommand("baseline", "Write the stay baseline table");
  auto* tr_labels = tr->add_subcommand("labels", "Write the timing labels");
  for (auto* c : {tr_extract, tr_base, tr_labels}) add_work(c);

  // heads
  auto* heads = app.add_subcommand("heads", "TimingGate and TQP");
  heads->require_subcommand(1);
  auto* h_gate = heads->add_subcommand("train-gate", "Train the gate and tune its threshold");
  auto* h_quality = heads->add_subcommand("train-quality", "Train the quality predictor");
  auto* h_eval = heads->add_subcommand("eval", "TQP vs Always-Zero on the test switches");
  for (auto* c : {h_gate, h_quality, h_eval}) add_work(c);

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Score fusion");
  fuse->require_subcommand(1);
  auto* f_tune = fuse->add_subcommand("tune-alpha", "Tune the fusion weight and export the model bundle");
  add_work(f_tune);
  auto* f_rec = fuse->add_subcommand("recommend", "Recommend for a match history");
  std::string models_dir, context_path;
  f_rec->add_option("--models", models_dir)->required();
  f_rec->add_option("--context", context_path, "Match log holding one player's history")
      ->required()
      ->check(CLI::ExistingFile);

  // eval
  auto* ev = app.add_subcommand("eval", "Baselines, ablation and subtype breakdown on the test split");
  add_work(ev);
  std::string policies = "all";
  ev->add_option("--policies", policies)->check(CLI::IsMember({"all"}));
  ev->add_option("--out", out_dir);

  // run
  auto* run = app.add_subcommand("run", "Full pipeline: data, training, evaluation and reports");
  run->add_option("--config", config_path);
  run->add_option("--out", out_dir)->required();
  bool quiet = false;
  run->add_flag("--quiet", quiet);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP advisor service");
  ServiceOptions sopt;
  serve->add_option("--models", models_dir)->required();
  serve->add_option("--port", sopt.port);
  serve->add_option("--host", sopt.host);
  serve->add_option("--sessions", sopt.session_dir, "Directory of append-only session logs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      GeneratorConfig gc;
      if (!synth_config.empty()) {
        const auto kv = KeyValueConfig::load(synth_config);
        gc = kv.with_prefix("synth.").values().empty() ? GeneratorConfig::from_key_values(kv)
                                                       : PipelineConfig::from_key_values(kv).generator;
      }
      const auto pop = generate_population(gc);
      fs::create_directories(out_dir);
      save_catalog(path_in(out_dir, files::kCatalog), pop.catalog);
      save_matchlog(path_in(out_dir, files::kMatches), pop.histories, pop.catalog);
      save_ground_truth(path_in(out_dir, files::kTruth), pop.truth);
      std::cout << "players " << pop.histories.size() << " written to " << out_dir << '\n';
    } else if (ingest->parsed()) {
      const auto cfg = load_config(config_path);
      const auto catalog = load_catalog(cards);
      IngestStats stats;
      const auto raw = load_matchlog(matchlog, catalog, &stats);
      FilterReport rep;
      const auto kept = apply_filters(raw, cfg.filter, &rep);
      fs::create_directories(out_dir);
      save_catalog(path_in(out_dir, files::kCatalog), catalog);
      save_matchlog(path_in(out_dir, files::kMatches), kept, catalog);
      write_file(path_in(out_dir, files::kFilterReport), [&](std::ostream& o) { write_filter_report(o, rep); });
      std::cout << "records " << stats.records << " skipped_other_modes " << stats.skipped_other_modes << '\n';
      write_filter_report(std::cout, rep);
    } else if (arch_fit->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Data);
      stage_archetype(*st);
      save_archetype_model(path_in(work, files::kArchetype), st->models->archetype);
      std::cout << "states " << st->models->archetype.k() << " silhouette "
                << format_double(st->models->archetype.silhouette) << '\n';
    } else if (arch_assign->parsed()) {
      const auto catalog = load_catalog(path_in(work, files::kCatalog));
      const auto model = load_archetype_model(path_in(work, files::kArchetype));
      const int s = model.assign(deck_features(split_ids(deck_ids), catalog));
      std::cout << s << ' ' << model.states.at(static_cast<std::size_t>(s)).name << '\n';
    } else if (arch_stab->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Data);
      std::vector<ArchetypeModel> models;
      std::vector<DeckFeatures> corpus;
      for (std::size_t r = 0; r < runs; ++r) {
        st->config.archetype.seed = derive_seed(st->config.seed, r + 1);
        stage_archetype(*st);
        models.push_back(st->models->archetype);
      }
      std::set<Deck> decks;
      for (const auto& h : st->histories)
        for (const auto& m : h.matches) decks.insert(m.deck);
      for (const auto& d : decks) corpus.push_back(deck_features(d, st->models->catalog));
      const auto rep = clustering_stability(models, corpus);
      std::cout << "runs " << rep.runs << " ari " << format_double(rep.ari) << " nmi " << format_double(rep.nmi)
                << " silhouette " << format_double(rep.silhouette) << '\n';
    } else if (sub_fit->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::States);
      stage_subtype(*st);
      save_subtype_model(path_in(work, files::kSubtype), st->models->subtype);
      std::vector<SubtypeRow> rows;
      for (std::size_t p = 0; p < st->histories.size(); ++p)
        rows.push_back({st->histories[p].player_id, static_cast<Subtype>(st->subtypes[p]), st->profiles[p]});
      write_file(path_in(work, files::kSubtypeTable), [&](std::ostream& o) { write_subtype_table(o, rows); });
      std::cout << "subtype silhouette " << format_double(st->models->subtype.silhouette) << '\n';
    } else if (sub_assign->parsed()) {
      const auto catalog = load_catalog(path_in(work, files::kCatalog));
      const auto model = load_subtype_model(path_in(work, files::kSubtype));
      for (const auto& h : load_matchlog(matchlog, catalog))
        std::cout << h.player_id << ' ' << to_string(model.assign(behavior_profile(h))) << '\n';
    } else if (enc_pre->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Subtypes);
      stage_encoder(*st, &std::cerr);
      save_encoder(path_in(work, files::kEncoder), st->models->encoder);
      const auto& m = st->pretrain.val_metrics;
      std::cout << "best epoch " << st->pretrain.best_epoch << " val auc_dc " << format_double(m.auc_dc)
                << " acc_dv " << format_double(m.acc_dv) << " auc_win " << format_double(m.auc_win) << " acc_sub "
                << format_double(m.acc_sub) << " mse_cd " << format_double(m.mse_cd) << '\n';
    } else if (enc_encode->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Encoder);
      std::size_t p = 0;
      while (p < st->histories.size() && st->histories[p].player_id != player) ++p;
      if (p == st->histories.size()) throw DataError("unknown player " + player);
      const auto ctx = build_context(*st->models, player, st->histories[p].matches, st->subtypes[p]);
      std::cout << "z_cls";
      for (double v : ctx.z_cls) std::cout << ' ' << format_double(v);
      std::cout << "\nz_user";
      for (double v : ctx.z_user) std::cout << ' ' << format_double(v);
      std::cout << '\n';
    } else if (enc_gc->parsed()) {
      GeneratorConfig gc;
      gc.n_players = 2;
      gc.min_matches = gc.max_matches = 24;
      gc.seed = gc_seed;
      const auto pop = generate_population(gc);
      EncoderConfig ec;
      ec.vocab = pop.catalog.size();
      ec.card_dim = 3;
      ec.cat_dim = 2;
      ec.hidden = 4;
      ec.layers = 2;
      ec.d_z = 4;
      const Encoder e(init_encoder(ec, gc_seed));
      std::vector<PlayerSequence> seqs;
      for (std::size_t p = 0; p < pop.histories.size(); ++p) {
        std::vector<int> states;
        for (const auto& t : pop.truth.matches[p]) states.push_back(t.archetype);
        seqs.push_back(make_sequence(pop.histories[p].player_id, pop.histories[p].matches, states,
                                     pop.truth.players[p].subtype));
      }
      std::vector<Window> batch;
      for (std::size_t s : {0, 5, 9}) batch.push_back(make_window(seqs[s % seqs.size()], s, ec.k));
      const auto r = gradient_check(e, batch);
      std::cout << "max relative error " << format_double(r.max_rel_error) << " at " << r.worst_param << " over "
                << r.checked << " parameters\n";
      return r.max_rel_error < 1e-3 ? 0 : 1;
    } else if (tr->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Events);
      if (tr_extract->parsed()) save_events(path_in(work, files::kEvents), st->events);
      if (tr_base->parsed())
        write_file(path_in(work, files::kBaseline), [&](std::ostream& o) { st->baseline->write(o); });
      if (tr_labels->parsed())
        write_file(path_in(work, files::kLabels), [&](std::ostream& o) { write_labels(o, st->labels); });
      for (int s = 0; s < 3; ++s)
        std::cout << to_string(static_cast<Split>(s)) << " events " << st->extraction.events[s] << " switches "
                  << st->extraction.switches[s] << " dropped " << st->extraction.dropped_short_tail[s] << '\n';
    } else if (h_gate->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Contexts);
      stage_gate(*st, &std::cerr);
      save_gate(path_in(work, files::kGate), st->models->gate);
      std::cout << "theta " << format_double(st->theta.theta) << (st->theta.fallback ? " (fallback)" : "") << '\n';
    } else if (h_quality->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Contexts);
      stage_quality(*st, &std::cerr);
      save_quality(path_in(work, files::kQuality), st->models->quality);
      std::cout << "best epoch " << st->quality_report.best_epoch << '\n';
    } else if (h_eval->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Quality);
      st->models->counts = TransitionCounts::build(st->events);
      st->models->fusion = st->config.fusion;
      stage_eval(*st);
      const auto r = render_reports(*st);
      std::cout << r.predictors;
      write_file(path_in(work, "predictors.flat"), [&](std::ostream& o) { o << r.predictors_flat; });
    } else if (f_tune->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Quality);
      stage_fusion(*st);
      st->models->save(work);
      std::cout << "alpha " << format_double(st->alpha.alpha) << (st->alpha.fallback ? " (fallback)" : "") << '\n';
    } else if (f_rec->parsed()) {
      const auto models = ModelBundle::load(models_dir);
      const auto hist = load_matchlog(context_path, models->catalog);
      if (hist.size() != 1) throw DataError("--context must hold exactly one player's matches");
      const int u = history_subtype(*models, hist[0].matches);
      const auto ctx = build_context(*models, hist[0].player_id, hist[0].matches, u);
      print_recommendation(*models, models->recommender().recommend(ctx));
    } else if (ev->parsed()) {
      auto st = load_work(work, load_config(config_path), Upto::Quality);
      const auto models = ModelBundle::load(work);
      st->models->counts = models->counts;
      st->models->fusion = models->fusion;
      stage_eval(*st);
      const auto r = render_reports(*st);
      std::cout << r.policies;
      save_reports(out_dir.empty() ? work : out_dir, r);
    } else if (run->parsed()) {
      PipelineState st;
      st.config = load_config(config_path);
      run_pipeline(st, quiet ? nullptr : &std::cerr);
      const auto r = render_reports(st);
      save_reports(out_dir, r);
      save_artifacts(out_dir, st);
      st.models->save(path_in(out_dir, "models"));
      std::cout << r.summary << '\n' << r.predictors << '\n' << r.policies;
    } else if (serve->parsed()) {
      std::shared_ptr<const ModelBundle> models;
      try {
        models = ModelBundle::load(models_dir);
      } catch (const ConfigError& e) {
        std::cerr << "warning: " << e.what() << "; serving without models\n";
      }
      AdvisorService service(models, sopt);
      g_service = &service;
      std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
      });
      int port = 0;
      std::cerr << "listening on " << sopt.host << ':' << sopt.port << '\n';
      service.listen(&port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
