#pragma once

#include <string>
#include <vector>

#include "tankxrl/attribution.hpp"
#include "tankxrl/dsl.hpp"
#include "tankxrl/env.hpp"

namespace tankxrl {

/// Reward split into named components, each a reward-DSL expression over
/// scaled quantities: h1..h4, error_h1, error_h2, sp_h1, sp_h2 (scaled by the
/// level box), v1, v2 (scaled action) and prev_v1, prev_v2 (scaled previous
/// action, equal to the current one at the first step).
struct RewardComponentSpec {
  enum class Source { Builtin, Generated };

  std::vector<std::string> names;
  dsl::RewardProgram program;
  Source source = Source::Builtin;

  std::size_t size() const { return names.size(); }
};

/// h1 tracking, h2 tracking and control effort, matching the plant reward.
RewardComponentSpec builtin_decomposition();

/// Builds a spec from reward-DSL source and component names. Throws DslError
/// on bad source and ShapeMismatch when counts disagree or K < 2.
RewardComponentSpec make_decomposition(const std::string& source, std::vector<std::string> names,
                                       RewardComponentSpec::Source origin = RewardComponentSpec::Source::Generated);

dsl::ExprContext reward_context(const TankEnv& env, const PlantState& state, const ControlInput& u);

std::vector<double> component_rewards(const TankEnv& env, const RewardComponentSpec& spec, const PlantState& state,
                                      const ControlInput& u);

struct FidelityReport {
  std::size_t probes = 0;
  double max_deviation = 0.0;
  bool passed = false;
};

/// Compares the component sum with the plant reward on random probe states.
FidelityReport check_fidelity(const TankEnv& env, const RewardComponentSpec& spec, std::size_t probes = 1000,
                              std::uint64_t seed = 0, double tolerance = 1e-12);

/// Throws DecompositionInfidelity when check_fidelity fails.
void fidelity_gate(const TankEnv& env, const RewardComponentSpec& spec, std::size_t probes = 1000,
                   std::uint64_t seed = 0, double tolerance = 1e-12);

struct QDecomposition {
  std::vector<std::string> names;
  std::vector<std::vector<double>> per_step;  // [t][k] = gamma^t r_{t,k}
  std::vector<double> totals;
  double gamma = 0.9;
  std::size_t origin_step = 0;
  double origin_time = 0.0;
  PlantState origin_state;
  ControlInput origin_action{};
  Trajectory trajectory;

  double total() const;
};

inline constexpr double kStepFidelityTolerance = 1e-9;

/// Applies `action` at the first step and follows `policy` afterwards for
/// `horizon` steps. Throws DecompositionInfidelity if any step's component sum
/// is more than 1e-9 away from the plant reward.
QDecomposition decompose_q(const TankEnv& env, const Policy& policy, const PlantState& from,
                           const ControlInput& action, const RewardComponentSpec& spec, std::size_t horizon,
                           double gamma);

/// As above with the policy's own first action and the configured gamma.
QDecomposition decompose_q(const TankEnv& env, const Policy& policy, const PlantState& from,
                           const RewardComponentSpec& spec, std::size_t horizon);

/// {kind:"stacked_rewards", names, gamma, steps:[{t, values}], totals}.
FigureData eo_figure_data(const QDecomposition& q);

}  // namespace tankxrl
