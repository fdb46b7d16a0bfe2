#pragma once

// Iterative generation loop: coder -> run -> evaluator, with debugger
// guidance after every failed attempt, up to trial_max refinements.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tankxrl/agents/llm.hpp"
#include "tankxrl/agents/prompts.hpp"
#include "tankxrl/dsl.hpp"
#include "tankxrl/error.hpp"
#include "tankxrl/xrl.hpp"

namespace tankxrl::agents {

enum class AttemptCategory {
  ParseError,
  NameError,
  TypeError,
  RuntimeError,
  IncompleteAssignment,
  Hallucination,
  Success,
  Failure
};
inline constexpr std::size_t kAttemptCategoryCount = 8;

std::string to_string(AttemptCategory c);
std::optional<AttemptCategory> attempt_category_from_string(const std::string& name);
AttemptCategory attempt_category(dsl::ErrorCategory c);

struct AttemptRecord {
  std::size_t attempt = 0;  // coder invocation; 0 for the closing Failure entry
  std::string source;
  AttemptCategory category = AttemptCategory::Success;
  std::string message;
  std::string guidance;
  std::optional<dsl::Span> span;

  nlohmann::json to_json() const;
};

struct IterationLog {
  std::string task;  // "cf_policy" | "reward_decomposition"
  std::string intent;
  std::vector<AttemptRecord> attempts;
  bool success = false;
  std::size_t attempt_count = 0;  // coder invocations

  nlohmann::json to_json() const;
  static IterationLog from_json(const nlohmann::json& j);
  /// Categories of all entries in order.
  std::vector<AttemptCategory> sequence() const;
};

class GenerationFailure : public Error {
 public:
  explicit GenerationFailure(IterationLog log);
  const IterationLog& log() const { return log_; }

 private:
  IterationLog log_;
};

struct GenerationOptions {
  std::size_t trial_max = 10;
  bool use_debugger = true;
  std::uint64_t seed = 0;
  const PromptLibrary* prompts = nullptr;  // default library when null
  /// Called after every attempt, in order, including the closing entry.
  std::function<void(const AttemptRecord&)> on_attempt;
};

/// Removes markdown fences and surrounding prose lines from coder output.
std::string sanitize_code(const std::string& text);

struct FidelityVerdict {
  bool accepted = false;
  std::string reason;
  bool structural = false;    // decided by the structural check
  bool consumed_llm = false;  // the evaluator endpoint was called
};

/// Structural check first for rule-style intents, then the evaluator agent
/// on a trajectory summary. An endpoint failure counts as a rejection.
FidelityVerdict evaluate_fidelity(const dsl::Program& program, const std::string& intent, const CfResult* result,
                                  const LlmEndpoint& endpoint, const EnvParams& params,
                                  const PromptLibrary& prompts, std::size_t attempt = 1);

/// Per-step interval actions and downsampled states, as given to the evaluator.
std::string trajectory_summary(const CfResult& result);

struct PolicyGeneration {
  std::shared_ptr<const dsl::Program> program;
  std::string source;
  XrlResult result;
  IterationLog log;
};

/// CF-P generation over [t_start, t_end]. Throws GenerationFailure, or
/// OutOfScopeQuery when the coder calls raise_error.
PolicyGeneration generate_policy(const Workbench& wb, const std::string& description, double t_start, double t_end,
                                 const LlmEndpoint& endpoint, const GenerationOptions& options = {});

struct DecompositionGeneration {
  RewardComponentSpec spec;
  IterationLog log;
};

/// Plain-text reward definition handed to the coder.
std::string plant_reward_source();

/// Coder output: reward-DSL source, "\n---\n", then a JSON list of names.
/// The fidelity gate plays the evaluator. Throws GenerationFailure.
DecompositionGeneration generated_decomposition(const TankEnv& env, const std::string& reward_source_text,
                                                const LlmEndpoint& endpoint, const GenerationOptions& options = {});

/// Rows: Start plus the six error categories; columns: the eight categories.
/// Every consecutive pair of entries (with Start before the first) counts once.
struct TransitionMatrix {
  static constexpr std::size_t kRows = 7;
  std::array<std::array<std::size_t, kAttemptCategoryCount>, kRows> counts{};

  static std::string row_name(std::size_t r);
  std::size_t at(const std::string& from, const std::string& to) const;
  std::size_t row_sum(std::size_t r) const;
  std::size_t column_sum(AttemptCategory c) const;
  std::size_t total() const;
  nlohmann::json to_json() const;
  std::string table() const;
};

TransitionMatrix error_transition_matrix(const std::vector<IterationLog>& logs);

struct CampaignQuery {
  std::string id;
  std::string description;
  double t_start = 4000.0;
  double t_end = 4200.0;
};

struct CampaignReport {
  std::vector<CampaignQuery> queries;
  std::size_t trials = 0;
  std::vector<std::vector<IterationLog>> logs;  // [query][trial]
  TransitionMatrix matrix;

  std::size_t failures() const;
  std::size_t total_attempts() const;
  nlohmann::json to_json() const;
  std::string table() const;
};

using EndpointFactory = std::function<std::shared_ptr<const LlmEndpoint>(std::size_t query, std::size_t trial)>;

CampaignReport run_cfp_campaign(const Workbench& wb, const std::vector<CampaignQuery>& queries, std::size_t trials,
                                const EndpointFactory& endpoints, const GenerationOptions& options = {});

/// Scripted campaign file: queries with a reference solution, a catalogue of
/// broken programs per error category and, per query and trial, the category
/// sequence the scripted coder walks through.
struct ScriptedCampaign {
  std::vector<CampaignQuery> queries;
  std::vector<std::string> solutions;
  std::map<std::string, std::string> catalogue;
  std::vector<std::vector<std::vector<std::string>>> plans;  // [query][trial] -> categories

  static ScriptedCampaign load(const std::string& path);
  static ScriptedCampaign from_json(const nlohmann::json& j);
  std::size_t trials() const;
  /// Coder, evaluator and debugger responses realizing plans[q][t].
  std::shared_ptr<const LlmEndpoint> endpoint(std::size_t query, std::size_t trial) const;
};

}  // namespace tankxrl::agents
