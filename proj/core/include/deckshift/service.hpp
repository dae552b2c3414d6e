#pragma once

// Live advisor over HTTP/JSON. Sessions accumulate match reports and get
// gated Stay / Switch(target) advice from the frozen model bundle.
//
//   POST /session                 -> {session_id}
//   GET  /session/{id}            -> {session_id, match_count, matches, ...}
//   POST /session/{id}/match      -> {ok, match_count}
//   GET  /session/{id}/advice     -> {decision, target_state?, gate_prob, candidates, provenance, need_matches?}
//   GET  /health

#include <memory>
#include <string>

#include "deckshift/pipeline.hpp"

namespace deckshift {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;                   // 0 picks a free port
  std::string session_dir;           // empty keeps sessions in memory only
  std::uint64_t seed = 0;            // session id stream; 0 draws from the OS
};

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

class AdvisorService {
 public:
  // `models` may be null, in which case session endpoints answer 503.
  AdvisorService(std::shared_ptr<const ModelBundle> models, ServiceOptions options);
  ~AdvisorService();
  AdvisorService(const AdvisorService&) = delete;
  AdvisorService& operator=(const AdvisorService&) = delete;

  // Routing without a socket; the HTTP server forwards every request here.
  HttpReply handle(const std::string& method, const std::string& path, const std::string& body);

  // Binds and serves until stop(); returns the bound port through `bound`.
  void listen(int* bound = nullptr);
  // Binds now and serves on a background thread; returns the port.
  int start();
  void stop();

  std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// The advice JSON for one recommendation, as served.
std::string advice_json(const ModelBundle& models, const Recommendation& rec, std::size_t match_count,
                        bool provisional_subtype);

}  // namespace deckshift
