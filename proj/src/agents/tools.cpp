#include "tankxrl/agents/tools.hpp"

#include <cmath>

#include "tankxrl/error.hpp"

namespace tankxrl::agents {

namespace {

using nlohmann::json;

json number_param(const std::string& description) { return {{"type", "number"}, {"description", description}}; }

json object_schema(json properties, std::vector<std::string> required) {
  return {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}};
}

const json kInterval{{"t_start", number_param("Interval start in seconds (multiple of delta_t)")},
                     {"t_end", number_param("Interval end in seconds (multiple of delta_t)")}};

[[noreturn]] void invalid(const std::string& tool, const std::string& msg) {
  throw ArgumentValidationError(tool + ": " + msg);
}

double number_arg(const std::string& tool, const json& args, const std::string& key) {
  if (!args.contains(key)) invalid(tool, "missing argument '" + key + "'");
  const json& v = args[key];
  if (!v.is_number()) invalid(tool, "argument '" + key + "' must be a number, got " + v.dump());
  const double d = v.get<double>();
  if (!std::isfinite(d)) invalid(tool, "argument '" + key + "' is not finite");
  return d;
}

std::optional<double> optional_number(const std::string& tool, const json& args, const std::string& key) {
  if (!args.contains(key) || args[key].is_null()) return std::nullopt;
  return number_arg(tool, args, key);
}

double time_arg(const std::string& tool, const json& args, const std::string& key, const EnvParams& p,
                bool allow_end) {
  const double t = number_arg(tool, args, key);
  const double k = t / p.dt;
  if (t < 0.0 || std::abs(k - std::round(k)) > 1e-9) {
    invalid(tool, key + "=" + json(t).dump() + " is not a non-negative multiple of delta_t=" + json(p.dt).dump());
  }
  const double last = allow_end ? p.total_time : p.total_time - p.dt;
  if (t > last + 1e-9) invalid(tool, key + "=" + json(t).dump() + " is past the episode end");
  return t;
}

double action_arg(const std::string& tool, double v, std::size_t pump, const EnvParams& p) {
  if (v < p.action_low[pump] || v > p.action_high[pump]) {
    invalid(tool, "v" + std::to_string(pump + 1) + "=" + json(v).dump() + " is outside the action range [" +
                      json(p.action_low[pump]).dump() + ", " + json(p.action_high[pump]).dump() + "]");
  }
  return v;
}

void check_interval(const std::string& tool, double a, double b) {
  if (!(a < b)) invalid(tool, "t_start must be before t_end");
}

}  // namespace

const std::vector<ToolSchema>& coordinator_tools() {
  static const std::vector<ToolSchema> tools{
      {"explain_feature_importance",
       "Feature importance (SHAP) of the six state variables for the agent's actions at one time.",
       object_schema({{"time", number_param("Query time in seconds")}}, {"time"})},
      {"explain_expected_outcome",
       "Decomposed expected return (h1 tracking, h2 tracking, control effort) of an action taken at one time.",
       object_schema({{"time", number_param("Query time in seconds")},
                      {"action",
                       {{"type", "array"},
                        {"items", {{"type", "number"}}},
                        {"minItems", 2},
                        {"maxItems", 2},
                        {"description", "Optional [v1, v2] in volts; defaults to the agent's own action"}}},
                      {"horizon", {{"type", "integer"}, {"description", "Steps to look ahead (default 50)"}}}},
                     {"time"})},
      {"cf_action", "Counterfactual: hold v1 and/or v2 at fixed voltages over an interval.",
       object_schema(
           [] {
             json p = kInterval;
             p["v1"] = number_param("Voltage for pump 1 (omit to keep the agent's)");
             p["v2"] = number_param("Voltage for pump 2 (omit to keep the agent's)");
             return p;
           }(),
           {"t_start", "t_end"})},
      {"cf_behavior",
       "Counterfactual: smooth (0 < alpha < 1 calmer, alpha > 1 more aggressive) or mirror (opposite) the agent's "
       "recorded actions over an interval.",
       object_schema(
           [] {
             json p = kInterval;
             p["alpha"] = number_param("Smoothing or mirroring coefficient");
             p["mode"] = {{"type", "string"}, {"enum", {"smooth", "opposite"}}};
             return p;
           }(),
           {"t_start", "t_end", "alpha"})},
      {"cf_policy", "Counterfactual: replace the agent by a rule-based policy described in words over an interval.",
       object_schema(
           [] {
             json p = kInterval;
             p["description"] = {{"type", "string"}, {"description", "The rule-based policy, in the user's words"}};
             return p;
           }(),
           {"t_start", "t_end", "description"})},
      raise_error_tool(),
  };
  return tools;
}

const ToolSchema& raise_error_tool() {
  static const ToolSchema tool{"raise_error", "Report that the request cannot be served.",
                               object_schema({{"message", {{"type", "string"}}}}, {"message"})};
  return tool;
}

XrlRequest validate_tool_call(const ToolCall& call, const EnvParams& params) {
  const std::string& tool = call.name;
  if (tool == "raise_error") {
    const std::string msg = call.arguments.is_object() && call.arguments.contains("message") &&
                                    call.arguments["message"].is_string()
                                ? call.arguments["message"].get<std::string>()
                                : std::string("query is out of scope");
    throw OutOfScopeQuery(msg);
  }
  const auto task = task_from_tool(tool);
  if (!task) invalid(tool.empty() ? "<empty>" : tool, "unknown tool");
  if (!call.arguments.is_object()) invalid(tool, "arguments must be a JSON object");
  const json& args = call.arguments;

  XrlRequest req;
  req.task = *task;
  switch (*task) {
    case Task::FeatureImportance:
      req.time = time_arg(tool, args, "time", params, false);
      break;
    case Task::ExpectedOutcome: {
      req.time = time_arg(tool, args, "time", params, false);
      if (args.contains("action") && !args["action"].is_null()) {
        const json& a = args["action"];
        if (!a.is_array() || a.size() != 2) invalid(tool, "action must be [v1, v2]");
        json wrapped{{"v1", a[0]}, {"v2", a[1]}};
        req.action = ControlInput{action_arg(tool, number_arg(tool, wrapped, "v1"), 0, params),
                                  action_arg(tool, number_arg(tool, wrapped, "v2"), 1, params)};
      }
      if (args.contains("horizon") && !args["horizon"].is_null()) {
        const json& h = args["horizon"];
        if (!h.is_number_integer() && !(h.is_number_float() && h.get<double>() == std::floor(h.get<double>()))) {
          invalid(tool, "horizon must be an integer");
        }
        const double hv = h.get<double>();
        if (hv < 1 || hv > static_cast<double>(params.n_steps)) {
          invalid(tool, "horizon must be between 1 and " + std::to_string(params.n_steps));
        }
        req.horizon = static_cast<std::size_t>(hv);
      }
      break;
    }
    case Task::CfAction: {
      const double a = time_arg(tool, args, "t_start", params, false);
      const double b = time_arg(tool, args, "t_end", params, true);
      check_interval(tool, a, b);
      auto v1 = optional_number(tool, args, "v1");
      auto v2 = optional_number(tool, args, "v2");
      if (!v1 && !v2) invalid(tool, "at least one of v1, v2 is required");
      if (v1) action_arg(tool, *v1, 0, params);
      if (v2) action_arg(tool, *v2, 1, params);
      req.cf = CfSpec::action_override(a, b, v1, v2);
      break;
    }
    case Task::CfBehavior: {
      const double a = time_arg(tool, args, "t_start", params, false);
      const double b = time_arg(tool, args, "t_end", params, true);
      check_interval(tool, a, b);
      const double alpha = number_arg(tool, args, "alpha");
      BehaviorMode mode = alpha < 0.0 ? BehaviorMode::Opposite : BehaviorMode::Smooth;
      if (args.contains("mode") && !args["mode"].is_null()) {
        mode = BehaviorMode::Smooth;
        const json& m = args["mode"];
        if (!m.is_string()) invalid(tool, "mode must be a string");
        if (m == "opposite") {
          mode = BehaviorMode::Opposite;
        } else if (m != "smooth") {
          invalid(tool, "mode must be 'smooth' or 'opposite', got " + m.dump());
        }
      }
      if (mode == BehaviorMode::Smooth && alpha <= 0.0) invalid(tool, "smoothing needs alpha > 0");
      if (std::abs(alpha) > 100.0) invalid(tool, "alpha magnitude above 100");
      req.cf = CfSpec::behavior(a, b, alpha, mode);
      break;
    }
    case Task::CfPolicy: {
      const double a = time_arg(tool, args, "t_start", params, false);
      const double b = time_arg(tool, args, "t_end", params, true);
      check_interval(tool, a, b);
      if (!args.contains("description") || !args["description"].is_string()) {
        invalid(tool, "description must be a string");
      }
      req.description = args["description"].get<std::string>();
      if (req.description.empty()) invalid(tool, "description is empty");
      if (req.description.size() > 4000) invalid(tool, "description longer than 4000 characters");
      req.cf.kind = CfKind::Policy;
      req.cf.t_start = a;
      req.cf.t_end = b;
      break;
    }
  }
  return req;
}

ToolCall to_tool_call(const XrlRequest& r) {
  ToolCall call;
  call.name = tool_name(r.task);
  switch (r.task) {
    case Task::FeatureImportance: call.arguments = {{"time", r.time}}; break;
    case Task::ExpectedOutcome:
      call.arguments = {{"time", r.time}, {"horizon", r.horizon}};
      if (r.action) call.arguments["action"] = *r.action;
      break;
    case Task::CfAction:
      call.arguments = {{"t_start", r.cf.t_start}, {"t_end", r.cf.t_end}};
      if (r.cf.action[0]) call.arguments["v1"] = *r.cf.action[0];
      if (r.cf.action[1]) call.arguments["v2"] = *r.cf.action[1];
      break;
    case Task::CfBehavior:
      call.arguments = {{"t_start", r.cf.t_start},
                        {"t_end", r.cf.t_end},
                        {"alpha", r.cf.alpha},
                        {"mode", to_string(r.cf.mode)}};
      break;
    case Task::CfPolicy:
      call.arguments = {{"t_start", r.cf.t_start}, {"t_end", r.cf.t_end}, {"description", r.description}};
      break;
  }
  return call;
}

}  // namespace tankxrl::agents
