#pragma once

// Chat-completion endpoints used by the five agents.

#include <array>
#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace tankxrl::agents {

enum class Role { Coordinator, Explainer, Coder, Evaluator, Debugger };
inline constexpr std::size_t kRoleCount = 5;

std::string to_string(Role role);
std::optional<Role> role_from_string(const std::string& name);

struct ChatMessage {
  std::string role;  // "user" | "assistant"
  std::string content;
};

struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters;  // JSON schema object
};

struct ToolCall {
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();
};

struct CompletionRequest {
  Role agent = Role::Coordinator;
  std::string system_prompt;
  std::vector<ChatMessage> messages;
  std::vector<ToolSchema> tools;
  int max_tokens = 1024;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  /// 1-based invocation index of this role within one query (mock keying).
  std::size_t attempt = 1;
  /// What the call is for: "coordinate", "policy", "reward", "evaluate",
  /// "debug", "explain".
  std::string purpose;
};

struct Completion {
  std::optional<std::string> text;
  std::optional<ToolCall> tool_call;
};

/// Contract: thread-safe; transport problems surface as EndpointError.
class LlmEndpoint {
 public:
  virtual ~LlmEndpoint() = default;
  virtual Completion complete(const CompletionRequest& request) const = 0;
  virtual std::string name() const = 0;
  virtual bool is_mock() const { return true; }
};

/// Canned responses keyed by (role, attempt), loaded from a script file:
///   {"responses": [{"role": "coder", "attempt": 2, "text": "..."},
///                  {"role": "coordinator", "tool_call": {"name": ..., "arguments": {...}}},
///                  {"role": "evaluator", "attempt": 1, "error": "timeout"}]}
/// An entry without "attempt" matches every attempt not listed explicitly.
/// "query" optionally restricts an entry to requests whose last user message
/// equals it.
class ScriptedEndpoint : public LlmEndpoint {
 public:
  struct Entry {
    Role role = Role::Coder;
    std::optional<std::size_t> attempt;
    std::optional<std::string> query;
    Completion response;
    std::optional<std::string> error;
  };

  ScriptedEndpoint() = default;
  explicit ScriptedEndpoint(std::vector<Entry> entries);
  static ScriptedEndpoint from_json(const nlohmann::json& script);
  static ScriptedEndpoint load(const std::string& path);

  ScriptedEndpoint& add_text(Role role, std::optional<std::size_t> attempt, std::string text);
  ScriptedEndpoint& add_tool(Role role, std::optional<std::size_t> attempt, ToolCall call);
  ScriptedEndpoint& add_error(Role role, std::optional<std::size_t> attempt, std::string message);

  Completion complete(const CompletionRequest& request) const override;
  std::string name() const override { return "scripted"; }

  /// Invocations per role so far; shared between copies.
  std::size_t calls(Role role) const { return calls_->n[static_cast<std::size_t>(role)].load(); }
  nlohmann::json to_json() const;

 private:
  struct Counters {
    std::array<std::atomic<std::size_t>, kRoleCount> n{};
  };
  std::vector<Entry> entries_;
  std::shared_ptr<Counters> calls_ = std::make_shared<Counters>();
};

/// Coordinator answering from a query -> tool-call table; other roles and
/// unknown queries get raise_error.
class LookupEndpoint : public LlmEndpoint {
 public:
  explicit LookupEndpoint(std::map<std::string, ToolCall> table) : table_(std::move(table)) {}
  Completion complete(const CompletionRequest& request) const override;
  std::string name() const override { return "lookup"; }

 private:
  std::map<std::string, ToolCall> table_;
};

/// Deterministic rule-based stand-in for every role (LLM_MODE=mock): keyword
/// and number extraction for the coordinator, rule-intent templates for the
/// coder, acceptance for the evaluator, error-echo guidance for the debugger,
/// and the template summary for the explainer.
class HeuristicEndpoint : public LlmEndpoint {
 public:
  Completion complete(const CompletionRequest& request) const override;
  std::string name() const override { return "mock"; }
};

struct HttpEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "gpt-4.1";
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::chrono::milliseconds backoff{500};
};

/// OpenAI-compatible /chat/completions client.
class HttpEndpoint : public LlmEndpoint {
 public:
  explicit HttpEndpoint(HttpEndpointConfig config);
  Completion complete(const CompletionRequest& request) const override;
  std::string name() const override { return "live:" + config_.model; }
  bool is_mock() const override { return false; }

  const HttpEndpointConfig& config() const { return config_; }
  /// Request body sent for `request` (exposed for tests).
  nlohmann::json request_body(const CompletionRequest& request) const;

 private:
  HttpEndpointConfig config_;
  std::string scheme_host_;
  std::string path_prefix_;
};

/// Parses an OpenAI chat-completions response body. Throws EndpointError.
Completion parse_chat_response(const std::string& body);

/// LLM_MODE=live builds an HttpEndpoint from LLM_API_KEY, LLM_BASE_URL and
/// LLM_MODEL; anything else (default mock) a HeuristicEndpoint.
std::shared_ptr<const LlmEndpoint> endpoint_from_env();
std::shared_ptr<const LlmEndpoint> make_endpoint(const std::string& mode);

/// Last user message of a request, or "".
const std::string& last_user_message(const CompletionRequest& request);

}  // namespace tankxrl::agents
