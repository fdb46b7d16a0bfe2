#pragma once

// Coordinator and explainer agents, and the query-classification harness.

#include <array>
#include <string>
#include <vector>

#include "tankxrl/agents/generation.hpp"
#include "tankxrl/agents/llm.hpp"
#include "tankxrl/agents/prompts.hpp"
#include "tankxrl/agents/tools.hpp"
#include "tankxrl/xrl.hpp"

namespace tankxrl::agents {

struct CoordinatorOptions {
  bool few_shot = true;
  std::uint64_t seed = 0;
  const PromptLibrary* prompts = nullptr;
};

struct Coordination {
  ToolCall call;
  XrlRequest request;
};

/// One coordinator call with validated arguments. Throws OutOfScopeQuery
/// (raise_error or no tool chosen), ArgumentValidationError or EndpointError.
Coordination coordinate(const std::string& query, const LlmEndpoint& endpoint, const EnvParams& params,
                        const CoordinatorOptions& options = {});

/// Coordinator system prompt as sent.
std::string coordinator_prompt(const EnvParams& params, const CoordinatorOptions& options = {});

struct LabeledQuery {
  std::string id;
  std::string text;
  Task task = Task::FeatureImportance;
  ToolCall expected;
};

/// {"queries": [{"id", "text", "task": "FI"|..., "tool_call": {"name", "arguments"}}]}
std::vector<LabeledQuery> load_corpus(const std::string& path);
std::vector<LabeledQuery> corpus_from_json(const nlohmann::json& j);
/// Lookup table answering every corpus query with its labeled tool call.
std::map<std::string, ToolCall> corpus_lookup(const std::vector<LabeledQuery>& corpus);

/// Column index kTaskCount collects raise_error, invalid arguments and
/// endpoint failures.
inline constexpr std::size_t kConfusionCols = kTaskCount + 1;

struct ClassificationReport {
  std::size_t items = 0;  // per trial
  std::size_t trials = 0;
  std::vector<double> trial_accuracy;
  std::array<std::array<std::size_t, kConfusionCols>, kTaskCount> confusion{};  // summed over trials
  std::size_t correct = 0;
  std::size_t arguments_matched = 0;  // correct task and identical validated arguments
  std::size_t endpoint_errors = 0;

  double accuracy() const;
  double mean_accuracy() const;
  double stddev_accuracy() const;
  double class_accuracy(Task t) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

/// Runs the coordinator over the corpus `trials` times with seed (seed + trial).
ClassificationReport classify_corpus(const std::vector<LabeledQuery>& corpus, const LlmEndpoint& endpoint,
                                     const EnvParams& params, std::size_t trials = 1, std::uint64_t seed = 0,
                                     const CoordinatorOptions& options = {});

struct Explanation {
  std::string text;
  std::string template_text;
  bool degraded = false;  // endpoint failed; text is the template
};

/// Deterministic description of a result, also the explainer's fallback.
std::string template_explanation(const XrlResult& result);

/// Explainer agent. max_tokens is forwarded to the endpoint unchanged.
Explanation explain(const XrlResult& result, const std::string& query, const LlmEndpoint& endpoint,
                    const EnvParams& params, int max_tokens = 200, const PromptLibrary* prompts = nullptr,
                    std::uint64_t seed = 0);

}  // namespace tankxrl::agents
