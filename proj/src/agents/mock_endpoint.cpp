#include "tankxrl/agents/intent.hpp"
#include "tankxrl/agents/llm.hpp"
#include "tankxrl/outcome.hpp"

namespace tankxrl::agents {

namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::string after_marker(const std::string& s, const std::string& marker) {
  const auto pos = s.find(marker);
  return pos == std::string::npos ? s : s.substr(pos + marker.size());
}

}  // namespace

Completion HeuristicEndpoint::complete(const CompletionRequest& request) const {
  Completion c;
  const std::string& last = last_user_message(request);
  switch (request.agent) {
    case Role::Coordinator:
      c.tool_call = heuristic_tool_call(last);
      break;
    case Role::Coder: {
      if (request.purpose == "reward") {
        const RewardComponentSpec spec = builtin_decomposition();
        c.text = dsl::pretty_print(spec.program) + "\n---\n" + nlohmann::json(spec.names).dump();
        break;
      }
      const std::string intent_text =
          request.messages.empty() ? std::string() : first_line(request.messages.front().content);
      const std::string norm = normalize_text(intent_text);
      if (norm.find("pid") != std::string::npos || norm.find("mpc") != std::string::npos) {
        c.tool_call = ToolCall{"raise_error", {{"message", "only rule-based policies are supported"}}};
        break;
      }
      const auto intent = parse_rule_intent(intent_text);
      if (!intent) {
        c.tool_call = ToolCall{"raise_error", {{"message", "the description does not state a rule-based policy"}}};
        break;
      }
      c.text = intent_program(*intent, "cf_policy");
      break;
    }
    case Role::Evaluator:
      c.text = "ACCEPT";
      break;
    case Role::Debugger:
      c.text = "Fix the reported problem and keep every other line unchanged: " + first_line(after_marker(last, "Error:"));
      break;
    case Role::Explainer:
      c.text = after_marker(last, "Result summary:\n");
      break;
  }
  return c;
}

}  // namespace tankxrl::agents
