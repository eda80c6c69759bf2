#ifndef BIOPTX_SERVICE_HPP_
#define BIOPTX_SERVICE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "bioptx/cohort.hpp"
#include "bioptx/env.hpp"
#include "bioptx/serialize.hpp"

namespace bioptx {

// What an HTTP handler sends back: a status code and a JSON body.
struct ServiceReply {
  int status = 200;
  Json body;
};

// Session bookkeeping behind the HTTP API, independent of the transport.
// Distinct sessions may be stepped concurrently; steps within one session
// are serialized by that session's mutex.
class SessionStore {
 public:
  using Listener = std::function<void(const std::string& message)>;

  // Finished episodes are appended to `log_dir`/<session id>.jsonl when
  // log_dir is non-empty.
  SessionStore(std::vector<CaseEntry> cases, EnvConfig cfg, std::filesystem::path log_dir = {});

  // {"case": id, "seed": n, "start"?: [i, j], "role"?: "human" | "agent"}
  ServiceReply create(const Json& request);
  // {"di": x, "dj": y}
  ServiceReply step(const std::string& id, const Json& request);
  ServiceReply log(const std::string& id) const;
  ServiceReply cases() const;

  // Registers a listener for the session's step results. Returns a token
  // for unsubscribe, or 0 if the session does not exist.
  std::uint64_t subscribe(const std::string& id, Listener fn);
  void unsubscribe(const std::string& id, std::uint64_t token);

  std::size_t size() const;

 private:
  struct Session {
    std::string id, case_id, role;
    std::unique_ptr<BiopsyEnv> env;
    bool persisted = false;
    mutable std::mutex mu;
    std::map<std::uint64_t, Listener> listeners;
  };
  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(Session& s);

  std::map<std::string, CaseEntry> cases_;
  std::vector<std::string> case_order_;
  EnvConfig cfg_;
  std::filesystem::path log_dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::uint64_t next_token_ = 1;
};

struct ServerOptions {
  std::string address = "127.0.0.1";
  // 0 picks an ephemeral port.
  unsigned short port = 8080;
  int threads = 1;
};

// HTTP + WebSocket front end:
//   GET  /cases
//   POST /sessions                    -> {id, obs, ...}
//   POST /sessions/{id}/step          -> StepResult
//   GET  /sessions/{id}/log           -> EpisodeLog
//   GET  /sessions/{id}/stream        (WebSocket) pushes StepResults
class SessionServer {
 public:
  SessionServer(SessionStore& store, ServerOptions opts);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  // Bound port, valid after construction.
  unsigned short port() const;
  // Starts the worker threads and returns.
  void start();
  // Blocks until stop() is called from another thread or a signal handler.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bioptx

#endif  // BIOPTX_SERVICE_HPP_
