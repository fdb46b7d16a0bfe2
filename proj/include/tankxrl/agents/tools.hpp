#pragma once

#include <vector>

#include "tankxrl/agents/llm.hpp"
#include "tankxrl/xrl.hpp"

namespace tankxrl::agents {

/// explain_feature_importance, explain_expected_outcome, cf_action,
/// cf_behavior, cf_policy and raise_error. Times in seconds, actions in raw
/// volts.
const std::vector<ToolSchema>& coordinator_tools();
const ToolSchema& raise_error_tool();

/// Turns a coordinator tool call into an engine request. raise_error becomes
/// OutOfScopeQuery; anything malformed or out of range ArgumentValidationError.
/// Times must be multiples of dt and inside the episode, actions inside the
/// action box, alpha finite (and > 0 for smoothing).
XrlRequest validate_tool_call(const ToolCall& call, const EnvParams& params);

/// Wire form of a request, inverse of validate_tool_call.
ToolCall to_tool_call(const XrlRequest& request);

}  // namespace tankxrl::agents
