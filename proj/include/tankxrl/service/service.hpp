#pragma once

// Query pipeline behind the HTTP API and the CLI: sessions, append-only
// transcript logs, per-query event channels and figure export.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tankxrl/agents/agents.hpp"
#include "tankxrl/error.hpp"
#include "tankxrl/xrl.hpp"

namespace tankxrl::service {

struct ServiceConfig {
  /// Session logs go to <data_dir>/sessions/<id>.jsonl; empty keeps them in memory.
  std::string data_dir;
  std::string weights_path;
  EnvParams env;
  std::string llm_mode = "mock";
  int max_tokens = 200;
  std::size_t trial_max = 10;
  bool few_shot = true;
  std::uint64_t seed = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;  // served at / when set
  /// Seconds an event stream waits for a query that has not started yet.
  double events_wait_s = 30.0;

  /// Keys as in to_json; missing keys keep their defaults.
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

/// Per-session settings accepted by create_session.
struct SessionSettings {
  bool few_shot = true;
  std::size_t trial_max = 10;
  int max_tokens = 200;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct Session {
  std::string id;
  std::string created_at;
  std::string env_hash;
  std::string weights_hash;
  SessionSettings settings;
  std::vector<nlohmann::json> transcripts;  // append-only

  /// {id, created_at, env_hash, weights_hash, settings, queries}
  nlohmann::json to_json() const;
};

/// Pipeline failure with the stage it happened in and the HTTP status it maps to.
class QueryError : public Error {
 public:
  QueryError(const Error& cause, std::string stage, int status, nlohmann::json extra = nlohmann::json::object());
  const std::string& stage() const { return stage_; }
  int status() const { return status_; }
  /// {error, message, stage, status, ...extra}
  nlohmann::json body() const;

 private:
  std::string stage_;
  int status_;
  nlohmann::json extra_;
};

/// HTTP status for an error code: SessionNotFound and NotFound 404, ConfigError 400,
/// OutOfScopeQuery / ArgumentValidationError / GenerationFailure 422,
/// EndpointError 502, anything else 500.
int http_status(const std::string& code);

/// Ordered events of one query. Readers see every event from the first one,
/// including after the query has finished.
class EventChannel {
 public:
  void push(const std::string& type, nlohmann::json data);
  /// Blocks until an event past `next` exists, the channel closes or the
  /// deadline passes. Returns the events from index `next` on.
  std::vector<nlohmann::json> wait(std::size_t next, std::chrono::steady_clock::time_point deadline) const;
  bool closed() const;
  std::vector<nlohmann::json> events() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<nlohmann::json> events_;
  bool closed_ = false;
};

/// Fields that vary between otherwise identical queries: timing, timestamps
/// and identifiers.
nlohmann::json canonical_response(nlohmann::json response);

class Service {
 public:
  /// Loads the workbench from config.weights_path and replays every session
  /// log under data_dir.
  explicit Service(ServiceConfig config);
  Service(ServiceConfig config, std::shared_ptr<const Workbench> workbench,
          std::shared_ptr<const agents::LlmEndpoint> endpoint);

  /// Overrides: few_shot, trial_max (1..50), max_tokens (1..4096), seed.
  nlohmann::json create_session(const nlohmann::json& overrides = nlohmann::json::object());
  /// {session, transcripts}
  nlohmann::json get_history(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

  /// Runs one query to completion. `query_id` is assigned when empty.
  /// Throws QueryError; the failure is still persisted as a transcript.
  nlohmann::json handle_query(const std::string& session_id, const std::string& text,
                              const std::string& query_id = "");

  /// Channel for (session, query), created on first use.
  std::shared_ptr<EventChannel> channel(const std::string& session_id, const std::string& query_id);
  bool has_session(const std::string& session_id) const;

  /// FigureData exactly as it appears in the served response.
  std::string figure_payload(const std::string& session_id, const std::string& query_id, std::size_t index) const;
  /// Writes figure_payload to `path`. Throws IoError.
  void export_figure(const std::string& session_id, const std::string& query_id, std::size_t index,
                     const std::string& path) const;

  nlohmann::json policy_info() const;
  nlohmann::json health() const;

  const ServiceConfig& config() const { return config_; }
  const Workbench& workbench() const { return *wb_; }
  const agents::LlmEndpoint& endpoint() const { return *endpoint_; }

 private:
  struct Slot {
    Session session;
    mutable std::mutex run;   // serializes queries of one session
    mutable std::mutex data;  // guards session.transcripts
    std::size_t next_query = 1;
  };

  std::shared_ptr<Slot> slot(const std::string& session_id) const;
  void append(const Slot& slot, const nlohmann::json& record) const;
  void replay();
  nlohmann::json run_pipeline(Slot& slot, const std::string& text, const std::string& query_id, EventChannel& events);

  ServiceConfig config_;
  std::shared_ptr<const Workbench> wb_;
  std::shared_ptr<const agents::LlmEndpoint> endpoint_;
  mutable std::mutex store_mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::map<std::string, std::shared_ptr<EventChannel>> channels_;
  std::uint64_t id_state_;
};

/// Current UTC time as "YYYY-MM-DDTHH:MM:SS.mmmZ".
std::string utc_timestamp();

}  // namespace tankxrl::service
