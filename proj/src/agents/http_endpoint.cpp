#include <thread>

#include <httplib.h>

#include "tankxrl/agents/llm.hpp"
#include "tankxrl/error.hpp"

namespace tankxrl::agents {

HttpEndpoint::HttpEndpoint(HttpEndpointConfig config) : config_(std::move(config)) {
  const std::string& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("LLM base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

nlohmann::json HttpEndpoint::request_body(const CompletionRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  for (const ChatMessage& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json body{{"model", config_.model},
                      {"messages", messages},
                      {"max_tokens", request.max_tokens},
                      {"temperature", request.temperature},
                      {"seed", request.seed}};
  if (!request.tools.empty()) {
    nlohmann::json tools = nlohmann::json::array();
    for (const ToolSchema& t : request.tools) {
      tools.push_back({{"type", "function"},
                       {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    }
    body["tools"] = tools;
    body["tool_choice"] = "auto";
  }
  return body;
}

Completion HttpEndpoint::complete(const CompletionRequest& request) const {
  const std::string body = request_body(request).dump();
  const std::string path = path_prefix_ + "/chat/completions";
  httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};

  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  std::string last_error;
  auto delay = config_.backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client cli(scheme_host_);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "request to " + scheme_host_ + path + " failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "endpoint returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw EndpointError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
    }
    return parse_chat_response(res->body);
  }
  throw EndpointError(last_error + " (after " + std::to_string(config_.max_retries) + " retries)");
}

}  // namespace tankxrl::agents
