#include "deckshift/service.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace deckshift {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Session {
  std::string id;
  std::mutex mu;
  std::vector<MatchRecord> matches;
  // advice cache, valid while the history length is unchanged
  std::size_t cached_at = static_cast<std::size_t>(-1);
  std::string cached_advice;
};

HttpReply reply(int status, const json& body) { return {status, body.dump()}; }

HttpReply error(int status, const std::string& msg) { return reply(status, json{{"error", msg}}); }

std::string state_name(const ModelBundle& m, int s) {
  for (const auto& info : m.archetype.states)
    if (info.state_id == s) return info.name;
  return "state-" + std::to_string(s);
}

json match_json(const CardCatalog& catalog, const MatchRecord& m) {
  json deck = json::array();
  for (auto c : m.deck) deck.push_back(catalog.at(c).card_id);
  return json{{"player_id", m.player_id},
              {"timestamp", m.timestamp},
              {"deck", deck},
              {"outcome", std::string(to_string(m.outcome))},
              {"crown_diff", m.crown_diff},
              {"mode", std::string(to_string(m.mode))}};
}

// Field-level validation of a match payload; `errors` collects one message per field.
std::optional<MatchRecord> parse_match(const CardCatalog& catalog, const json& body, const Session& s,
                                       std::int64_t now, json& errors) {
  MatchRecord m;
  m.player_id = s.id;
  m.seq_index = s.matches.size();
  if (!body.is_object()) {
    errors["body"] = "must be a JSON object";
    return std::nullopt;
  }
  if (!body.contains("deck") || !body["deck"].is_array()) {
    errors["deck"] = "must be an array of 8 card ids";
  } else {
    std::vector<std::string> ids;
    bool strings = true;
    for (const auto& c : body["deck"]) {
      if (!c.is_string()) strings = false;
      else ids.push_back(c.get<std::string>());
    }
    if (!strings) {
      errors["deck"] = "entries must be card id strings";
    } else {
      try {
        m.deck = catalog.make_deck(ids);
        m.avg_elixir = catalog.average_elixir(m.deck);
      } catch (const DataError& e) {
        errors["deck"] = e.what();
      }
    }
  }
  const auto outcome = body.contains("outcome") && body["outcome"].is_string() ? body["outcome"].get<std::string>() : "";
  if (outcome == "win") m.outcome = Outcome::Win;
  else if (outcome == "loss") m.outcome = Outcome::Loss;
  else errors["outcome"] = "must be \"win\" or \"loss\"";

  if (!body.contains("crown_diff") || !body["crown_diff"].is_number_integer()) {
    errors["crown_diff"] = "must be an integer";
  } else {
    const int cd = body["crown_diff"].get<int>();
    if (cd < -3 || cd > 3 || cd == 0) errors["crown_diff"] = "must be in [-3, 3] and non-zero";
    else if (!errors.contains("outcome") && (cd > 0) != (m.outcome == Outcome::Win))
      errors["crown_diff"] = "sign must agree with the outcome";
    m.crown_diff = cd;
  }

  m.mode = Mode::Pvp;
  if (body.contains("mode")) {
    const auto mode = body["mode"].is_string() ? body["mode"].get<std::string>() : "";
    if (mode == "pvp") m.mode = Mode::Pvp;
    else if (mode == "path_of_legend") m.mode = Mode::PathOfLegend;
    else errors["mode"] = "must be \"pvp\" or \"path_of_legend\"";
  }

  const std::int64_t last = s.matches.empty() ? 0 : s.matches.back().timestamp;
  if (body.contains("timestamp")) {
    if (!body["timestamp"].is_number_integer()) {
      errors["timestamp"] = "must be an integer number of seconds";
    } else {
      m.timestamp = body["timestamp"].get<std::int64_t>();
      if (!s.matches.empty() && m.timestamp < last) errors["timestamp"] = "precedes the previous match";
    }
  } else {
    m.timestamp = std::max(now, last);
  }
  if (!errors.empty()) return std::nullopt;
  return m;
}

}  // namespace

std::string advice_json(const ModelBundle& models, const Recommendation& rec, std::size_t match_count,
                        bool provisional_subtype) {
  json out;
  out["decision"] = rec.switch_ ? "switch" : "stay";
  if (rec.switch_) {
    out["target_state"] = rec.target_state;
    out["target_name"] = state_name(models, rec.target_state);
  }
  out["from_state"] = rec.from_state;
  out["from_name"] = state_name(models, rec.from_state);
  out["subtype"] = std::string(to_string(static_cast<Subtype>(rec.subtype)));
  out["subtype_provisional"] = provisional_subtype;
  out["gate_prob"] = rec.gate_prob ? json(*rec.gate_prob) : json(nullptr);
  out["theta"] = models.gate.theta;
  json cands = json::array();
  for (const auto& c : rec.candidates)
    cands.push_back(json{{"to_state", c.to_state},
                         {"name", state_name(models, c.to_state)},
                         {"support", c.support},
                         {"adoptability", c.adoptability},
                         {"adoptability_norm", c.adoptability_norm},
                         {"quality", c.quality},
                         {"fused", c.fused}});
  out["candidates"] = cands;
  out["provenance"] = std::string(to_string(rec.provenance));
  out["explanation"] = explain(rec.provenance);
  out["match_count"] = match_count;
  return out.dump();
}

struct AdvisorService::Impl {
  std::shared_ptr<const ModelBundle> models;
  std::optional<Recommender> recommender;
  ServiceOptions options;
  mutable std::shared_mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::mutex id_mu;
  std::mt19937_64 id_rng;
  httplib::Server server;
  std::thread thread;

  std::string new_id() {
    std::lock_guard lock(id_mu);
    for (;;) {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "s%016llx", static_cast<unsigned long long>(id_rng()));
      std::shared_lock sl(sessions_mu);
      if (!sessions.count(buf)) return buf;
    }
  }

  fs::path log_path(const std::string& id) const { return fs::path(options.session_dir) / (id + ".jsonl"); }

  void append_log(const std::string& id, const json& line) {
    if (options.session_dir.empty()) return;
    std::ofstream out(log_path(id), std::ios::app);
    if (!out) throw Error("cannot append to the session log of " + id);
    out << line.dump() << '\n';
    out.flush();
  }

  void replay_sessions() {
    if (options.session_dir.empty()) return;
    fs::create_directories(options.session_dir);
    std::vector<fs::path> logs;
    for (const auto& e : fs::directory_iterator(options.session_dir))
      if (e.path().extension() == ".jsonl") logs.push_back(e.path());
    std::sort(logs.begin(), logs.end());
    for (const auto& p : logs) {
      auto s = std::make_shared<Session>();
      s->id = p.stem().string();
      std::ifstream in(p);
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj;
        try {
          obj = json::parse(line);
        } catch (const json::parse_error& e) {
          throw ParseError(lineno, p.string() + ": " + e.what());
        }
        if (obj.value("kind", "") == "session") continue;
        json errors;
        auto m = parse_match(models->catalog, obj, *s, 0, errors);
        if (!m) throw ParseError(lineno, p.string() + ": " + errors.dump());
        s->matches.push_back(std::move(*m));
      }
      sessions.emplace(s->id, std::move(s));
    }
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  HttpReply create() {
    auto s = std::make_shared<Session>();
    s->id = new_id();
    append_log(s->id, json{{"kind", "session"}, {"session_id", s->id}});
    {
      std::unique_lock lock(sessions_mu);
      sessions.emplace(s->id, s);
    }
    return reply(201, json{{"session_id", s->id}});
  }

  HttpReply describe(Session& s) {
    std::lock_guard lock(s.mu);
    json matches = json::array();
    for (const auto& m : s.matches) matches.push_back(match_json(models->catalog, m));
    bool provisional = true;
    const int u = history_subtype(*models, s.matches, &provisional);
    const auto p = behavior_profile(s.matches);
    json profile{{"overall_switch_rate", p.overall_switch_rate},
                 {"post_loss_switch_rate", p.post_loss_switch_rate},
                 {"post_win_switch_rate", p.post_win_switch_rate},
                 {"loss_reactivity", p.loss_reactivity},
                 {"avg_change_magnitude", p.avg_change_magnitude},
                 {"top_deck_occupancy", p.top_deck_occupancy}};
    return reply(200, json{{"session_id", s.id},
                           {"match_count", s.matches.size()},
                           {"subtype", std::string(to_string(static_cast<Subtype>(u)))},
                           {"subtype_provisional", provisional},
                           {"profile", profile},
                           {"matches", matches}});
  }

  HttpReply add_match(Session& s, const std::string& body) {
    json obj;
    try {
      obj = json::parse(body);
    } catch (const json::parse_error&) {
      return reply(422, json{{"error", "invalid match"}, {"fields", {{"body", "must be valid JSON"}}}});
    }
    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::lock_guard lock(s.mu);
    json errors = json::object();
    auto m = parse_match(models->catalog, obj, s, now, errors);
    if (!m) return reply(422, json{{"error", "invalid match"}, {"fields", errors}});
    append_log(s.id, match_json(models->catalog, *m));
    const bool dc = !s.matches.empty() && s.matches.back().deck != m->deck;
    s.matches.push_back(std::move(*m));
    return reply(200, json{{"ok", true},
                           {"match_count", s.matches.size()},
                           {"deck_changed", dc},
                           {"state", models->archetype.assign(s.matches.back().deck, models->catalog)}});
  }

  HttpReply advice(Session& s) {
    std::lock_guard lock(s.mu);
    const std::size_t k = models->encoder.config().k;
    const std::size_t n = s.matches.size();
    if (n < k)
      return reply(200, json{{"decision", "need_more_history"},
                             {"need_matches", k - n},
                             {"match_count", n},
                             {"message", "need " + std::to_string(k - n) + " more matches"}});
    if (s.cached_at != n) {
      bool provisional = true;
      const int u = history_subtype(*models, s.matches, &provisional);
      const auto ctx = build_context(*models, s.id, s.matches, u);
      s.cached_advice = advice_json(*models, recommender->recommend(ctx), n, provisional);
      s.cached_at = n;
    }
    return {200, s.cached_advice};
  }

  int bind() {
    int port = options.port;
    if (port == 0) port = server.bind_to_any_port(options.host);
    else if (!server.bind_to_port(options.host, port)) port = -1;
    if (port < 0) throw Error("cannot bind " + options.host + ":" + std::to_string(options.port));
    return port;
  }

  HttpReply route(const std::string& method, const std::string& path, const std::string& body) {
    if (path == "/health") {
      if (method != "GET") return error(405, "method not allowed");
      std::shared_lock lock(sessions_mu);
      return reply(models ? 200 : 503, json{{"status", models ? "ok" : "models not loaded"},
                                            {"models_loaded", models != nullptr},
                                            {"sessions", sessions.size()}});
    }
    const std::string prefix = "/session";
    if (path.compare(0, prefix.size(), prefix) != 0) return error(404, "no such endpoint");
    if (!models) return error(503, "models not loaded");
    std::string rest = path.substr(prefix.size());
    if (rest.empty() || rest == "/") {
      if (method != "POST") return error(405, "method not allowed");
      return create();
    }
    if (rest[0] != '/') return error(404, "no such endpoint");
    rest.erase(0, 1);
    const auto slash = rest.find('/');
    const std::string id = rest.substr(0, slash);
    const std::string action = slash == std::string::npos ? "" : rest.substr(slash + 1);
    auto s = find(id);
    if (!s) return error(404, "unknown session " + id);
    if (action.empty()) {
      if (method != "GET") return error(405, "method not allowed");
      return describe(*s);
    }
    if (action == "match") {
      if (method != "POST") return error(405, "method not allowed");
      return add_match(*s, body);
    }
    if (action == "advice") {
      if (method != "GET") return error(405, "method not allowed");
      return advice(*s);
    }
    return error(404, "no such endpoint");
  }
};

AdvisorService::AdvisorService(std::shared_ptr<const ModelBundle> models, ServiceOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->models = std::move(models);
  impl_->options = std::move(options);
  impl_->id_rng.seed(impl_->options.seed ? impl_->options.seed : std::random_device{}());
  if (impl_->models) {
    impl_->recommender.emplace(impl_->models->recommender());
    impl_->replay_sessions();
  }
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    HttpReply r;
    try {
      r = handle(req.method, req.path, req.body);
    } catch (const std::exception& e) {
      r = error(500, e.what());
    }
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  impl_->server.Get(".*", forward);
  impl_->server.Post(".*", forward);
  impl_->server.Put(".*", forward);
  impl_->server.Delete(".*", forward);
}

AdvisorService::~AdvisorService() { stop(); }

HttpReply AdvisorService::handle(const std::string& method, const std::string& path, const std::string& body) {
  try {
    return impl_->route(method, path, body);
  } catch (const DataError& e) {
    return error(422, e.what());
  }
}

void AdvisorService::listen(int* bound) {
  const int port = impl_->bind();
  if (bound) *bound = port;
  impl_->server.listen_after_bind();
}

int AdvisorService::start() {
  const int port = impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void AdvisorService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::size_t AdvisorService::session_count() const {
  std::shared_lock lock(impl_->sessions_mu);
  return impl_->sessions.size();
}

}  // namespace deckshift
