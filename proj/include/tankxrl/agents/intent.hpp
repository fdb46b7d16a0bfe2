#pragma once

// Deterministic reading of free-text queries: number and interval extraction,
// rule-style policy intents ("v1 = 8.0 whenever the error of h1 < 0.0, and
// v1 = 1.0 otherwise") and a keyword tool picker used by the mock endpoint.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tankxrl/agents/llm.hpp"
#include "tankxrl/counterfactual.hpp"
#include "tankxrl/dsl.hpp"

namespace tankxrl::agents {

/// Lower case, "v_1" -> "v1", "$" removed, unicode dashes and "α" folded.
std::string normalize_text(const std::string& text);

struct PumpRule {
  double value_true = 0.0;
  dsl::Var cond_var = dsl::Var::ErrH1;
  dsl::BinaryOp op = dsl::BinaryOp::Lt;
  double threshold = 0.0;
  std::optional<double> value_else;
};

struct RuleIntent {
  std::array<std::optional<PumpRule>, 2> rules;
  std::array<std::optional<double>, 2> constants;

  bool empty() const;
  /// Whether pump i is fully determined by the intent.
  bool covers(std::size_t pump) const { return rules[pump] || constants[pump]; }
};

std::optional<RuleIntent> parse_rule_intent(const std::string& text);

/// DSL source realizing an intent; unmentioned pumps hold their previous value.
std::string intent_program(const RuleIntent& intent, const std::string& name = "generated");

/// Reasons a CF-P result does not realize a machine-checkable intent; empty
/// when it does. Checks the referenced variables of the program and, per
/// interval step, the applied action against the rule.
std::vector<std::string> structural_violations(const RuleIntent& intent, const dsl::Program& program,
                                               const CfResult& result, const EnvParams& params);

struct Interval {
  double start = 0.0;
  double end = 0.0;
};

std::optional<double> extract_time(const std::string& normalized);
std::optional<Interval> extract_interval(const std::string& normalized);
std::array<std::optional<double>, 2> extract_actions(const std::string& normalized);
std::optional<double> extract_alpha(const std::string& normalized);

struct AlphaEntry {
  const char* term;
  double alpha;
  BehaviorMode mode;
};

/// Qualitative behavior terms and their alpha values.
const std::vector<AlphaEntry>& alpha_table();

/// Keyword-based tool call for a query; raise_error when nothing matches.
ToolCall heuristic_tool_call(const std::string& query);

}  // namespace tankxrl::agents
