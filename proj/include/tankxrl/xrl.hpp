#pragma once

// Dispatch from a validated request to the FI, EO and CF engines.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tankxrl/attribution.hpp"
#include "tankxrl/counterfactual.hpp"
#include "tankxrl/network.hpp"
#include "tankxrl/outcome.hpp"

namespace tankxrl {

enum class Task { FeatureImportance, ExpectedOutcome, CfAction, CfBehavior, CfPolicy };

/// Tool name used on the wire: explain_feature_importance, explain_expected_outcome,
/// cf_action, cf_behavior, cf_policy.
std::string tool_name(Task task);
std::optional<Task> task_from_tool(const std::string& name);
/// Short label: FI, EO, CF-A, CF-B, CF-P.
std::string task_label(Task task);
inline constexpr std::size_t kTaskCount = 5;

inline constexpr std::size_t kDefaultEoHorizon = 50;

/// Plant, bundled policy and the reference rollout every explanation refers to.
class Workbench {
 public:
  static std::shared_ptr<const Workbench> create(const EnvParams& params, NetworkWeights weights,
                                                 std::uint64_t seed = 0, std::size_t background_size = 64);

  const TankEnv& env() const { return env_; }
  const EnvParams& params() const { return env_.params(); }
  const NetworkWeights& weights() const { return policy_.weights(); }
  const Policy& policy() const { return policy_; }
  const Trajectory& reference() const { return reference_; }
  const Background& background() const { return background_; }
  const std::string& env_hash() const { return env_hash_; }
  const std::string& weights_hash() const { return weights_hash_; }

  /// {input_dim, output_dim, layers, activations, weights_hash, env_hash, cumulative reward}
  nlohmann::json policy_info() const;

  Workbench(const EnvParams& params, NetworkWeights weights, std::uint64_t seed, std::size_t background_size);
  Workbench(const Workbench&) = delete;
  Workbench& operator=(const Workbench&) = delete;

 private:
  TankEnv env_;
  NetworkPolicy policy_;
  Trajectory reference_;
  Background background_;
  std::string env_hash_;
  std::string weights_hash_;
};

struct XrlRequest {
  Task task = Task::FeatureImportance;
  double time = 0.0;                          // FI, EO
  std::optional<ControlInput> action;         // EO; defaults to the policy action
  std::size_t horizon = kDefaultEoHorizon;    // EO
  CfSpec cf;                                  // CF-A, CF-B, CF-P
  std::string description;                    // CF-P intent

  nlohmann::json arguments() const;
};

struct XrlResult {
  Task task = Task::FeatureImportance;
  nlohmann::json arguments;
  std::vector<FigureData> figures;
  /// Numeric digest used by the explainer and its fallback template.
  nlohmann::json summary;
  std::optional<AttributionResult> fi;
  std::optional<QDecomposition> eo;
  std::optional<CfResult> cf;
};

std::size_t time_to_step_index(double time, const EnvParams& params, bool allow_end = false);

XrlResult run_feature_importance(const Workbench& wb, double time);
XrlResult run_expected_outcome(const Workbench& wb, double time, std::optional<ControlInput> action,
                               std::size_t horizon, const RewardComponentSpec& spec);
XrlResult run_counterfactual(const Workbench& wb, const CfSpec& spec);

/// CF-P requests need `request.cf.program` set (see generate_policy).
XrlResult dispatch(const Workbench& wb, const XrlRequest& request,
                   const RewardComponentSpec& decomposition = builtin_decomposition());

}  // namespace tankxrl
