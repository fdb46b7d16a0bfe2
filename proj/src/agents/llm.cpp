#include "tankxrl/agents/llm.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tankxrl/error.hpp"

namespace tankxrl::agents {

namespace {

constexpr std::array<const char*, kRoleCount> kRoleNames{"coordinator", "explainer", "coder", "evaluator",
                                                         "debugger"};

const char* env_or_null(const char* name) {
  const char* v = std::getenv(name);
  return (v != nullptr && *v != '\0') ? v : nullptr;
}

nlohmann::json completion_to_json(const Completion& c) {
  nlohmann::json j = nlohmann::json::object();
  if (c.text) j["text"] = *c.text;
  if (c.tool_call) j["tool_call"] = {{"name", c.tool_call->name}, {"arguments", c.tool_call->arguments}};
  return j;
}

}  // namespace

std::string to_string(Role role) { return kRoleNames[static_cast<std::size_t>(role)]; }

std::optional<Role> role_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kRoleCount; ++i) {
    if (name == kRoleNames[i]) return static_cast<Role>(i);
  }
  return std::nullopt;
}

const std::string& last_user_message(const CompletionRequest& request) {
  static const std::string empty;
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  return empty;
}

// ---- scripted --------------------------------------------------------------

ScriptedEndpoint::ScriptedEndpoint(std::vector<Entry> entries) : entries_(std::move(entries)) {}

ScriptedEndpoint ScriptedEndpoint::from_json(const nlohmann::json& script) {
  const nlohmann::json& list = script.is_array() ? script : script.at("responses");
  std::vector<Entry> entries;
  for (const auto& item : list) {
    Entry e;
    const auto role = role_from_string(item.at("role").get<std::string>());
    if (!role) throw ConfigError("mock script: unknown role '" + item.at("role").get<std::string>() + "'");
    e.role = *role;
    if (item.contains("attempt") && !item["attempt"].is_null()) e.attempt = item["attempt"].get<std::size_t>();
    if (item.contains("query")) e.query = item["query"].get<std::string>();
    if (item.contains("error")) e.error = item["error"].get<std::string>();
    if (item.contains("text")) e.response.text = item["text"].get<std::string>();
    if (item.contains("tool_call")) {
      const auto& tc = item["tool_call"];
      e.response.tool_call = ToolCall{tc.at("name").get<std::string>(),
                                      tc.value("arguments", nlohmann::json::object())};
    }
    if (!e.error && !e.response.text && !e.response.tool_call) {
      throw ConfigError("mock script: entry for " + to_string(e.role) + " has no text, tool_call or error");
    }
    entries.push_back(std::move(e));
  }
  return ScriptedEndpoint(std::move(entries));
}

ScriptedEndpoint ScriptedEndpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mock script " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mock script " + path + ": " + e.what());
  }
}

ScriptedEndpoint& ScriptedEndpoint::add_text(Role role, std::optional<std::size_t> attempt, std::string text) {
  Entry e;
  e.role = role;
  e.attempt = attempt;
  e.response.text = std::move(text);
  entries_.push_back(std::move(e));
  return *this;
}

ScriptedEndpoint& ScriptedEndpoint::add_tool(Role role, std::optional<std::size_t> attempt, ToolCall call) {
  Entry e;
  e.role = role;
  e.attempt = attempt;
  e.response.tool_call = std::move(call);
  entries_.push_back(std::move(e));
  return *this;
}

ScriptedEndpoint& ScriptedEndpoint::add_error(Role role, std::optional<std::size_t> attempt, std::string message) {
  Entry e;
  e.role = role;
  e.attempt = attempt;
  e.error = std::move(message);
  entries_.push_back(std::move(e));
  return *this;
}

Completion ScriptedEndpoint::complete(const CompletionRequest& request) const {
  calls_->n[static_cast<std::size_t>(request.agent)].fetch_add(1);
  const std::string& query = last_user_message(request);
  const Entry* exact = nullptr;
  const Entry* wildcard = nullptr;
  for (const Entry& e : entries_) {
    if (e.role != request.agent) continue;
    if (e.query && *e.query != query) continue;
    if (e.attempt) {
      if (*e.attempt == request.attempt && exact == nullptr) exact = &e;
    } else if (wildcard == nullptr) {
      wildcard = &e;
    }
  }
  const Entry* hit = exact != nullptr ? exact : wildcard;
  if (hit == nullptr) {
    throw EndpointError("scripted endpoint has no response for " + to_string(request.agent) + " attempt " +
                        std::to_string(request.attempt));
  }
  if (hit->error) throw EndpointError(*hit->error);
  return hit->response;
}

nlohmann::json ScriptedEndpoint::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const Entry& e : entries_) {
    nlohmann::json j = completion_to_json(e.response);
    j["role"] = to_string(e.role);
    if (e.attempt) j["attempt"] = *e.attempt;
    if (e.query) j["query"] = *e.query;
    if (e.error) j["error"] = *e.error;
    list.push_back(std::move(j));
  }
  return {{"responses", list}};
}

// ---- lookup ----------------------------------------------------------------

Completion LookupEndpoint::complete(const CompletionRequest& request) const {
  Completion c;
  const auto it = request.agent == Role::Coordinator ? table_.find(last_user_message(request)) : table_.end();
  if (it != table_.end()) {
    c.tool_call = it->second;
  } else {
    c.tool_call = ToolCall{"raise_error", {{"message", "query not in lookup table"}}};
  }
  return c;
}

// ---- wire format -------------------------------------------------------------

Completion parse_chat_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw EndpointError(std::string("malformed completion body: ") + e.what());
  }
  if (j.contains("error")) {
    const auto& err = j["error"];
    throw EndpointError("endpoint error: " + (err.is_object() ? err.value("message", err.dump()) : err.dump()));
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw EndpointError("completion has no choices");
  }
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  Completion c;
  if (msg.contains("content") && msg["content"].is_string()) c.text = msg["content"].get<std::string>();
  if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
    const auto& fn = msg["tool_calls"][0].value("function", nlohmann::json::object());
    ToolCall call;
    call.name = fn.value("name", "");
    const auto args = fn.value("arguments", nlohmann::json("{}"));
    if (args.is_string()) {
      try {
        call.arguments = nlohmann::json::parse(args.get<std::string>());
      } catch (const nlohmann::json::exception&) {
        // Left for argument validation to reject.
        call.arguments = {{"_unparsed", args}};
      }
    } else {
      call.arguments = args;
    }
    if (call.name.empty()) throw EndpointError("tool call without a function name");
    c.tool_call = std::move(call);
  }
  if (!c.text && !c.tool_call) throw EndpointError("completion has neither content nor tool call");
  return c;
}

std::shared_ptr<const LlmEndpoint> make_endpoint(const std::string& mode) {
  if (mode == "mock") return std::make_shared<HeuristicEndpoint>();
  if (mode != "live") throw ConfigError("LLM mode must be 'live' or 'mock', got '" + mode + "'");
  HttpEndpointConfig cfg;
  const char* key = env_or_null("LLM_API_KEY");
  if (key == nullptr) throw ConfigError("LLM_MODE=live needs LLM_API_KEY");
  cfg.api_key = key;
  if (const char* url = env_or_null("LLM_BASE_URL")) cfg.base_url = url;
  if (const char* model = env_or_null("LLM_MODEL")) cfg.model = model;
  return std::make_shared<HttpEndpoint>(cfg);
}

std::shared_ptr<const LlmEndpoint> endpoint_from_env() {
  const char* mode = env_or_null("LLM_MODE");
  return make_endpoint(mode != nullptr ? mode : "mock");
}

}  // namespace tankxrl::agents
