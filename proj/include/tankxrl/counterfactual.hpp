#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tankxrl/attribution.hpp"
#include "tankxrl/dsl.hpp"
#include "tankxrl/env.hpp"

namespace tankxrl {

/// Raw-unit DSL inputs for a plant state. prev_v1/prev_v2 read 0 before any
/// action has been applied.
dsl::EvalContext policy_context(const TankEnv& env, const PlantState& state, const Observation& obs);

/// A compiled DSL program acting as a closed-loop policy.
class ProgramPolicy : public Policy {
 public:
  ProgramPolicy(std::shared_ptr<const dsl::Program> program, const TankEnv& env);
  ControlInput act(const PlantState& state, const Observation& obs) const override;

 private:
  std::shared_ptr<const dsl::Program> program_;
  const TankEnv* env_;
};

enum class CfKind { Action, Behavior, Policy };
enum class BehaviorMode { Smooth, Opposite };

std::string to_string(CfKind kind);
std::string to_string(BehaviorMode mode);

struct CfSpec {
  CfKind kind = CfKind::Action;
  double t_start = 0.0;
  double t_end = 0.0;
  std::array<std::optional<double>, 2> action{};  // Action: raw volts per pump
  double alpha = 1.0;                             // Behavior
  BehaviorMode mode = BehaviorMode::Smooth;       // Behavior
  std::shared_ptr<const dsl::Program> program;    // Policy
  std::string program_source;                     // Policy, for display

  static CfSpec action_override(double t_start, double t_end, std::optional<double> v1, std::optional<double> v2);
  static CfSpec behavior(double t_start, double t_end, double alpha, BehaviorMode mode = BehaviorMode::Smooth);
  static CfSpec policy(double t_start, double t_end, std::shared_ptr<const dsl::Program> program,
                       std::string source = {});
};

nlohmann::json cf_spec_to_json(const CfSpec& spec);

struct StepInterval {
  std::size_t begin = 0;  // inclusive step index
  std::size_t end = 0;    // exclusive step index
  std::size_t size() const { return end - begin; }
};

/// Checks the interval (multiples of dt, t_start < t_end <= total_time) and
/// the kind-specific fields. Throws IntervalOutOfRange or ConfigError.
StepInterval validate_cf_spec(const CfSpec& spec, const EnvParams& params);

struct ActionPlan {
  StepInterval interval;
  std::vector<std::array<std::optional<double>, 2>> values;  // one entry per interval step
  bool clipped = false;
};

/// Per-step open-loop overrides for a CF-A spec, clipped to the action box.
ActionPlan cf_action_sequence(const Trajectory& reference, const CfSpec& spec, const EnvParams& params);

/// Smoothing (new_t = new_{t-1} + alpha (prev_t - new_{t-1}), new_0 = prev_0)
/// or mirroring (new_t = prev_0 + alpha (prev_t - prev_0)) of one pump's
/// recorded actions. The recurrence runs on unclipped values; outputs are
/// clipped to [low, high].
std::vector<double> cf_behavior_sequence(const std::vector<double>& prev, double alpha, BehaviorMode mode,
                                         double low, double high);
std::vector<double> cf_behavior_sequence_unclipped(const std::vector<double>& prev, double alpha, BehaviorMode mode);

/// Both pumps over the interval of a CF-B spec.
ActionPlan cf_behavior_plan(const Trajectory& reference, const CfSpec& spec, const EnvParams& params);

struct CfResult {
  CfSpec spec;
  StepInterval interval;
  std::size_t horizon_end = 0;  // exclusive step index of the comparison window
  Trajectory actual;
  Trajectory counterfactual;
  std::vector<double> reward_delta;  // counterfactual - actual, per step
  double cumulative_delta = 0.0;
  bool clipped = false;
  std::vector<std::string> warnings;
};

/// Number of steps shown after the interval closes.
inline constexpr std::size_t kPostIntervalSteps = 200;

/// `reference` is the policy's rollout from step 0. The counterfactual copies
/// the reference before the interval, applies the CF actions inside it and
/// hands control back to `policy` afterwards, up to
/// min(end + 200 steps, n_steps).
CfResult cf_rollout(const TankEnv& env, const CfSpec& spec, const Trajectory& reference, const Policy& policy);

/// {kind:"cf_compare", interval, series:[{name, actual, counterfactual}]}
/// with h1..h4, v1, v2 and reward in raw units.
FigureData cf_figure_data(const CfResult& result);

}  // namespace tankxrl
