#include "tankxrl/service/service.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "tankxrl/network.hpp"
#include "tankxrl/util.hpp"

namespace tankxrl::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <typename T>
T bounded(const json& j, const char* key, T lo, T hi, T fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j[key];
  if (!v.is_number_integer()) throw ConfigError(std::string(key) + " must be an integer");
  const auto x = v.get<std::int64_t>();
  if (x < static_cast<std::int64_t>(lo) || x > static_cast<std::int64_t>(hi)) {
    throw ConfigError(std::string(key) + " must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<T>(x);
}

SessionSettings settings_from_json(const json& j, const SessionSettings& defaults) {
  if (!j.is_object()) throw ConfigError("session settings must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k != "few_shot" && k != "trial_max" && k != "max_tokens" && k != "seed") {
      throw ConfigError("unknown session setting '" + k + "'");
    }
  }
  SessionSettings s = defaults;
  if (j.contains("few_shot")) {
    if (!j["few_shot"].is_boolean()) throw ConfigError("few_shot must be a boolean");
    s.few_shot = j["few_shot"].get<bool>();
  }
  s.trial_max = bounded<std::size_t>(j, "trial_max", 1, 50, s.trial_max);
  s.max_tokens = bounded<int>(j, "max_tokens", 1, 4096, s.max_tokens);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
      throw ConfigError("seed must be a non-negative integer");
    }
    s.seed = j["seed"].get<std::uint64_t>();
  }
  return s;
}

bool valid_query_id(const std::string& id) {
  static const std::regex re(R"([A-Za-z0-9_-]{1,64})");
  return std::regex_match(id, re);
}

std::string padded_query_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "q%04zu", n);
  return buf;
}

std::string default_weights_path() {
#ifdef TANKXRL_DEFAULT_WEIGHTS
  return TANKXRL_DEFAULT_WEIGHTS;
#else
  return "data/policy.json";
#endif
}

std::string channel_key(const std::string& session_id, const std::string& query_id) {
  return session_id + "/" + query_id;
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// ---- config ------------------------------------------------------------------

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  if (!j.is_object()) throw ConfigError("service config must be a JSON object");
  try {
    c.data_dir = j.value("data_dir", c.data_dir);
    c.weights_path = j.value("weights", c.weights_path);
    if (j.contains("env")) c.env = j["env"].get<EnvParams>();
    c.llm_mode = j.value("llm_mode", c.llm_mode);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.trial_max = j.value("trial_max", c.trial_max);
    c.few_shot = j.value("few_shot", c.few_shot);
    c.seed = j.value("seed", c.seed);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.static_dir = j.value("static_dir", c.static_dir);
    c.events_wait_s = j.value("events_wait_s", c.events_wait_s);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  c.env.validate();
  if (c.max_tokens < 1) throw ConfigError("max_tokens must be positive");
  if (c.trial_max < 1) throw ConfigError("trial_max must be at least 1");
  if (c.port < 0 || c.port > 65535) throw ConfigError("port out of range");
  return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

json ServiceConfig::to_json() const {
  return {{"data_dir", data_dir}, {"weights", weights_path}, {"env", env},
          {"llm_mode", llm_mode}, {"max_tokens", max_tokens}, {"trial_max", trial_max},
          {"few_shot", few_shot}, {"seed", seed},             {"host", host},
          {"port", port},         {"static_dir", static_dir}, {"events_wait_s", events_wait_s}};
}

json SessionSettings::to_json() const {
  return {{"few_shot", few_shot}, {"trial_max", trial_max}, {"max_tokens", max_tokens}, {"seed", seed}};
}

json Session::to_json() const {
  return {{"id", id},
          {"created_at", created_at},
          {"env_hash", env_hash},
          {"weights_hash", weights_hash},
          {"settings", settings.to_json()},
          {"queries", transcripts.size()}};
}

// ---- errors ------------------------------------------------------------------

int http_status(const std::string& code) {
  if (code == "SessionNotFound" || code == "NotFound") return 404;
  if (code == "ConfigError") return 400;
  if (code == "OutOfScopeQuery" || code == "ArgumentValidationError" || code == "GenerationFailure") return 422;
  if (code == "EndpointError") return 502;
  return 500;
}

QueryError::QueryError(const Error& cause, std::string stage, int status, json extra)
    : Error(cause.code(), cause.what()), stage_(std::move(stage)), status_(status), extra_(std::move(extra)) {}

json QueryError::body() const {
  json b = extra_;
  b["error"] = code();
  b["message"] = what();
  b["stage"] = stage_;
  b["status"] = status_;
  return b;
}

json canonical_response(json r) {
  for (const char* k : {"timing", "created_at", "query_id", "session_id"}) r.erase(k);
  return r;
}

// ---- events ------------------------------------------------------------------

void EventChannel::push(const std::string& type, json data) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (closed_) return;
    json e{{"seq", events_.size()}, {"type", type}, {"data", std::move(data)}};
    events_.push_back(std::move(e));
    if (type == "completed" || type == "failed") closed_ = true;
  }
  cv_.notify_all();
}

std::vector<json> EventChannel::wait(std::size_t next, Clock::time_point deadline) const {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_until(lock, deadline, [&] { return events_.size() > next || closed_; });
  if (next >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(next), events_.end()};
}

bool EventChannel::closed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return closed_;
}

std::vector<json> EventChannel::events() const {
  std::lock_guard<std::mutex> lock(mu_);
  return events_;
}

// ---- service -----------------------------------------------------------------

Service::Service(ServiceConfig config)
    : Service(config,
              Workbench::create(config.env,
                                load_weights(config.weights_path.empty() ? default_weights_path() : config.weights_path),
                                config.seed),
              agents::make_endpoint(config.llm_mode)) {}

Service::Service(ServiceConfig config, std::shared_ptr<const Workbench> workbench,
                 std::shared_ptr<const agents::LlmEndpoint> endpoint)
    : config_(std::move(config)), wb_(std::move(workbench)), endpoint_(std::move(endpoint)) {
  if (!wb_ || !endpoint_) throw ConfigError("service needs a workbench and an endpoint");
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
              static_cast<std::uint64_t>(std::chrono::system_clock::now().time_since_epoch().count());
  if (!config_.data_dir.empty()) {
    std::error_code ec;
    fs::create_directories(fs::path(config_.data_dir) / "sessions", ec);
    if (ec) throw IoError("cannot create data directory " + config_.data_dir + ": " + ec.message());
    replay();
  }
}

void Service::replay() {
  for (const auto& entry : fs::directory_iterator(fs::path(config_.data_dir) / "sessions")) {
    if (entry.path().extension() != ".jsonl") continue;
    std::ifstream in(entry.path());
    std::string line;
    auto s = std::make_shared<Slot>();
    bool header = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception&) {
        break;  // torn tail from an interrupted write
      }
      const std::string type = rec.value("type", "");
      if (!header) {
        if (type != "session") break;
        const json& j = rec.at("session");
        s->session.id = j.at("id").get<std::string>();
        s->session.created_at = j.value("created_at", "");
        s->session.env_hash = j.value("env_hash", "");
        s->session.weights_hash = j.value("weights_hash", "");
        s->session.settings = settings_from_json(j.value("settings", json::object()), SessionSettings{});
        header = true;
      } else if (type == "transcript") {
        s->session.transcripts.push_back(rec.at("transcript"));
      }
    }
    if (!header) continue;
    s->next_query = s->session.transcripts.size() + 1;
    sessions_[s->session.id] = s;
  }
}

void Service::append(const Slot& s, const json& record) const {
  if (config_.data_dir.empty()) return;
  const fs::path path = fs::path(config_.data_dir) / "sessions" / (s.session.id + ".jsonl");
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot open session log " + path.string());
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot write session log " + path.string());
}

json Service::create_session(const json& overrides) {
  SessionSettings defaults;
  defaults.few_shot = config_.few_shot;
  defaults.trial_max = config_.trial_max;
  defaults.max_tokens = config_.max_tokens;
  defaults.seed = config_.seed;
  auto s = std::make_shared<Slot>();
  s->session.settings = settings_from_json(overrides.is_null() ? json::object() : overrides, defaults);
  s->session.created_at = utc_timestamp();
  s->session.env_hash = wb_->env_hash();
  s->session.weights_hash = wb_->weights_hash();
  {
    std::lock_guard<std::mutex> lock(store_mu_);
    do {
      id_state_ = splitmix64(id_state_);
      s->session.id = hex64(id_state_);
    } while (sessions_.count(s->session.id) != 0);
  }
  const json j = s->session.to_json();
  append(*s, {{"type", "session"}, {"session", j}});
  std::lock_guard<std::mutex> lock(store_mu_);
  sessions_[s->session.id] = s;
  return j;
}

std::shared_ptr<Service::Slot> Service::slot(const std::string& session_id) const {
  std::lock_guard<std::mutex> lock(store_mu_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SessionNotFound("no session '" + session_id + "'");
  return it->second;
}

bool Service::has_session(const std::string& session_id) const {
  std::lock_guard<std::mutex> lock(store_mu_);
  return sessions_.count(session_id) != 0;
}

std::vector<std::string> Service::session_ids() const {
  std::lock_guard<std::mutex> lock(store_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

json Service::get_history(const std::string& session_id) const {
  const auto s = slot(session_id);
  std::lock_guard<std::mutex> lock(s->data);
  return {{"session", s->session.to_json()}, {"transcripts", s->session.transcripts}};
}

std::shared_ptr<EventChannel> Service::channel(const std::string& session_id, const std::string& query_id) {
  const auto s = slot(session_id);
  const std::string key = channel_key(session_id, query_id);
  {
    std::lock_guard<std::mutex> lock(store_mu_);
    const auto it = channels_.find(key);
    if (it != channels_.end()) return it->second;
  }
  auto ch = std::make_shared<EventChannel>();
  {
    // A finished query from an earlier run: rebuild its stream from the transcript.
    std::lock_guard<std::mutex> lock(s->data);
    for (const json& t : s->session.transcripts) {
      if (t.value("query_id", "") != query_id) continue;
      ch->push("started", {{"query_id", query_id}, {"text", t.value("text", "")}});
      if (t.contains("task")) ch->push("coordinated", {{"task", t["task"]}, {"arguments", t["arguments"]}});
      const json& log = t.contains("iteration_log") ? t["iteration_log"]
                        : t.contains("error") && t["error"].contains("iteration_log") ? t["error"]["iteration_log"]
                                                                                      : json(nullptr);
      if (log.is_object()) {
        for (const json& a : log.at("attempts")) ch->push("attempt", a);
      }
      const std::string stage = t.contains("error") ? t["error"].value("stage", "") : "";
      const bool dispatched = !t.contains("error") || stage == "explain";
      if (dispatched && t.contains("task")) {
        const std::size_t n = t.contains("figures") ? t["figures"].size() : 0;
        ch->push("dispatched", {{"task", t["task"]}, {"figures", n}});
      }
      if (!t.contains("error")) {
        ch->push("explained", {{"degraded", t.value("explanation_degraded", false)}});
      }
      if (t.contains("error")) {
        ch->push("failed", t["error"]);
      } else {
        ch->push("completed", {{"status", 200}});
      }
      break;
    }
  }
  std::lock_guard<std::mutex> lock(store_mu_);
  return channels_.emplace(key, ch).first->second;
}

json Service::run_pipeline(Slot& s, const std::string& text, const std::string& query_id, EventChannel& events) {
  const Clock::time_point start = Clock::now();
  const SessionSettings& st = s.session.settings;
  const EnvParams& params = wb_->params();
  json timing = json::object();
  const auto wrap = [](const Error& e, const char* stage, json extra = json::object()) {
    return QueryError(e, stage, http_status(e.code()), std::move(extra));
  };

  if (s.session.env_hash != wb_->env_hash() || s.session.weights_hash != wb_->weights_hash()) {
    throw wrap(ConfigError("session was created with a different plant or policy"), "coordinate");
  }

  Clock::time_point t0 = Clock::now();
  agents::Coordination coord;
  try {
    coord = agents::coordinate(text, *endpoint_, params, {.few_shot = st.few_shot, .seed = st.seed, .prompts = nullptr});
  } catch (const Error& e) {
    throw wrap(e, "coordinate");
  }
  const agents::ToolCall wire = agents::to_tool_call(coord.request);
  timing["coordinate_ms"] = ms_since(t0);
  events.push("coordinated", {{"task", wire.name}, {"arguments", wire.arguments}});

  XrlResult result;
  json iteration_log = nullptr;
  json program = nullptr;
  if (coord.request.task == Task::CfPolicy) {
    t0 = Clock::now();
    agents::GenerationOptions o;
    o.trial_max = st.trial_max;
    o.seed = st.seed;
    o.on_attempt = [&events](const agents::AttemptRecord& r) { events.push("attempt", r.to_json()); };
    try {
      agents::PolicyGeneration g = agents::generate_policy(*wb_, coord.request.description, coord.request.cf.t_start,
                                                           coord.request.cf.t_end, *endpoint_, o);
      result = std::move(g.result);
      iteration_log = g.log.to_json();
      program = g.source;
    } catch (const agents::GenerationFailure& f) {
      throw wrap(f, "generate", {{"iteration_log", f.log().to_json()}});
    } catch (const Error& e) {
      throw wrap(e, "generate");
    }
    timing["generate_ms"] = ms_since(t0);
  } else {
    t0 = Clock::now();
    try {
      result = dispatch(*wb_, coord.request);
    } catch (const Error& e) {
      throw wrap(e, "dispatch");
    }
    timing["dispatch_ms"] = ms_since(t0);
  }
  events.push("dispatched", {{"task", wire.name}, {"figures", result.figures.size()}});

  t0 = Clock::now();
  agents::Explanation ex;
  try {
    ex = agents::explain(result, text, *endpoint_, params, st.max_tokens, nullptr, st.seed);
  } catch (const Error& e) {
    throw wrap(e, "explain");
  } catch (const std::exception& e) {
    throw wrap(Error("InternalError", e.what()), "explain");
  }
  timing["explain_ms"] = ms_since(t0);
  events.push("explained", {{"degraded", ex.degraded}});

  timing["total_ms"] = ms_since(start);
  return {{"query_id", query_id},
          {"session_id", s.session.id},
          {"created_at", utc_timestamp()},
          {"text", text},
          {"task", wire.name},
          {"arguments", wire.arguments},
          {"figures", result.figures},
          {"summary", result.summary},
          {"explanation", ex.text},
          {"explanation_degraded", ex.degraded},
          {"iteration_log", iteration_log},
          {"program", program},
          {"timing", timing}};
}

json Service::handle_query(const std::string& session_id, const std::string& text, const std::string& requested_id) {
  const auto s = slot(session_id);
  std::lock_guard<std::mutex> run(s->run);

  std::string query_id = requested_id;
  if (query_id.empty()) {
    query_id = padded_query_id(s->next_query);
  } else if (!valid_query_id(query_id)) {
    throw QueryError(ConfigError("query_id must match [A-Za-z0-9_-]{1,64}"), "request", 400);
  }
  {
    std::lock_guard<std::mutex> lock(s->data);
    for (const json& t : s->session.transcripts) {
      if (t.value("query_id", "") == query_id) {
        throw QueryError(ConfigError("query id '" + query_id + "' already used in this session"), "request", 400);
      }
    }
  }
  if (text.empty() || text.size() > 4000) {
    throw QueryError(ConfigError("query text must have 1 to 4000 characters"), "request", 400);
  }

  const auto ch = channel(session_id, query_id);
  ch->push("started", {{"query_id", query_id}, {"text", text}});
  ++s->next_query;

  json transcript;
  std::optional<QueryError> failure;
  try {
    transcript = run_pipeline(*s, text, query_id, *ch);
  } catch (const QueryError& e) {
    failure = e;
    transcript = {{"query_id", query_id}, {"session_id", session_id}, {"created_at", utc_timestamp()},
                  {"text", text},         {"error", e.body()}};
    for (const json& ev : ch->events()) {
      if (ev.at("type") != "coordinated") continue;
      transcript["task"] = ev["data"]["task"];
      transcript["arguments"] = ev["data"]["arguments"];
    }
  }
  try {
    append(*s, {{"type", "transcript"}, {"transcript", transcript}});
  } catch (const IoError& e) {
    const QueryError err(e, "persist", 500);
    ch->push("failed", err.body());
    throw err;
  }
  {
    std::lock_guard<std::mutex> lock(s->data);
    s->session.transcripts.push_back(transcript);
  }
  if (failure) {
    ch->push("failed", failure->body());
    throw *failure;
  }
  ch->push("completed", {{"status", 200}});
  return transcript;
}

std::string Service::figure_payload(const std::string& session_id, const std::string& query_id,
                                    std::size_t index) const {
  const auto s = slot(session_id);
  std::lock_guard<std::mutex> lock(s->data);
  for (const json& t : s->session.transcripts) {
    if (t.value("query_id", "") != query_id) continue;
    if (!t.contains("figures") || index >= t["figures"].size()) {
      throw NotFound("query '" + query_id + "' has no figure " + std::to_string(index));
    }
    return t["figures"][index].dump();
  }
  throw NotFound("no query '" + query_id + "' in session '" + session_id + "'");
}

void Service::export_figure(const std::string& session_id, const std::string& query_id, std::size_t index,
                            const std::string& path) const {
  const std::string payload = figure_payload(session_id, query_id, index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << payload;
  if (!out) throw IoError("cannot write " + path);
}

json Service::policy_info() const {
  json info = wb_->policy_info();
  info["llm"] = {{"endpoint", endpoint_->name()}, {"mock", endpoint_->is_mock()}};
  return info;
}

json Service::health() const {
  std::lock_guard<std::mutex> lock(store_mu_);
  return {{"status", "ok"}, {"sessions", sessions_.size()}, {"llm", endpoint_->name()}};
}

}  // namespace tankxrl::service
