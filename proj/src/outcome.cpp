#include "tankxrl/outcome.hpp"

#include <cmath>

#include "tankxrl/error.hpp"
#include "tankxrl/util.hpp"

namespace tankxrl {

namespace {

constexpr const char* kBuiltinSource = R"(reward builtin {
  -100 * (h1 - sp_h1) * (h1 - sp_h1),
  -100 * (h2 - sp_h2) * (h2 - sp_h2),
  -((v1 - prev_v1) * (v1 - prev_v1) + (v2 - prev_v2) * (v2 - prev_v2))
})";

}  // namespace

RewardComponentSpec builtin_decomposition() {
  return make_decomposition(kBuiltinSource, {"h1 tracking", "h2 tracking", "control effort"},
                            RewardComponentSpec::Source::Builtin);
}

RewardComponentSpec make_decomposition(const std::string& source, std::vector<std::string> names,
                                       RewardComponentSpec::Source origin) {
  RewardComponentSpec spec;
  spec.program = dsl::compile_reward(source);
  if (spec.program.terms.size() < 2) throw ShapeMismatch("a decomposition needs at least two components");
  if (names.size() != spec.program.terms.size()) {
    throw ShapeMismatch("decomposition has " + std::to_string(spec.program.terms.size()) + " components but " +
                        std::to_string(names.size()) + " names");
  }
  spec.names = std::move(names);
  spec.source = origin;
  return spec;
}

dsl::ExprContext reward_context(const TankEnv& env, const PlantState& state, const ControlInput& u) {
  using dsl::Var;
  const Observation obs = env.observe(state);
  dsl::ExprContext ctx;
  for (std::size_t i = 0; i < 6; ++i) ctx.values[i] = obs.scaled[i];
  // Level-box scaling so that h1 - sp_h1 is the tracking term of the reward.
  for (std::size_t i = 0; i < 4; ++i) ctx.values[i] = env.scale_level(state.h[i]);
  ctx[Var::SpH1] = env.scale_level(state.setpoints[0]);
  ctx[Var::SpH2] = env.scale_level(state.setpoints[1]);
  const Vec2 now = env.scale_action(u);
  const Vec2 before = state.prev_action ? env.scale_action(*state.prev_action) : now;
  ctx[Var::V1] = now[0];
  ctx[Var::V2] = now[1];
  ctx[Var::PrevV1] = before[0];
  ctx[Var::PrevV2] = before[1];
  return ctx;
}

std::vector<double> component_rewards(const TankEnv& env, const RewardComponentSpec& spec, const PlantState& state,
                                      const ControlInput& u) {
  return dsl::evaluate_terms(spec.program, reward_context(env, state, env.clip_action(u)));
}

FidelityReport check_fidelity(const TankEnv& env, const RewardComponentSpec& spec, std::size_t probes,
                              std::uint64_t seed, double tolerance) {
  const EnvParams& p = env.params();
  Rng rng(seed ^ 0x5eedf1de11ULL);
  FidelityReport rep;
  rep.probes = probes;
  for (std::size_t n = 0; n < probes; ++n) {
    PlantState s;
    for (double& h : s.h) h = rng.uniform(p.obs_low[0], p.obs_high[0]);
    s.setpoints = {rng.uniform(p.setpoint_range[0], p.setpoint_range[1]),
                   rng.uniform(p.setpoint_range[0], p.setpoint_range[1])};
    s.step_index = static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(p.n_steps)));
    if (n % 10 != 0) {
      s.prev_action = ControlInput{rng.uniform(p.action_low[0], p.action_high[0]),
                                   rng.uniform(p.action_low[1], p.action_high[1])};
    }
    const ControlInput u{rng.uniform(p.action_low[0], p.action_high[0]),
                         rng.uniform(p.action_low[1], p.action_high[1])};
    const auto terms = env.reward_terms(s, u);
    const double reward = terms[0] + terms[1] + terms[2];
    double sum = 0.0;
    for (double c : component_rewards(env, spec, s, u)) sum += c;
    rep.max_deviation = std::max(rep.max_deviation, std::abs(sum - reward));
  }
  rep.passed = rep.max_deviation <= tolerance;
  return rep;
}

void fidelity_gate(const TankEnv& env, const RewardComponentSpec& spec, std::size_t probes, std::uint64_t seed,
                   double tolerance) {
  const FidelityReport rep = check_fidelity(env, spec, probes, seed, tolerance);
  if (!rep.passed) {
    throw DecompositionInfidelity("component sum deviates from the reward by " + std::to_string(rep.max_deviation) +
                                  " on probe states");
  }
}

double QDecomposition::total() const { return compensated_sum(totals); }

QDecomposition decompose_q(const TankEnv& env, const Policy& policy, const PlantState& from,
                           const ControlInput& action, const RewardComponentSpec& spec, std::size_t horizon,
                           double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  const std::vector<ActionOverride> first{{0, 1, {action[0], action[1]}}};
  QDecomposition q;
  q.trajectory = env.rollout(policy, from, horizon, first);
  q.names = spec.names;
  q.gamma = gamma;
  q.origin_step = from.step_index;
  q.origin_time = static_cast<double>(from.step_index) * env.params().dt;
  q.origin_state = from;
  q.origin_action = env.clip_action(action);

  const std::size_t K = spec.size();
  std::vector<std::vector<double>> columns(K);
  double discount = 1.0;
  for (std::size_t t = 0; t < q.trajectory.length(); ++t) {
    const auto r = component_rewards(env, spec, q.trajectory.states[t], q.trajectory.actions[t]);
    double sum = 0.0;
    for (double c : r) sum += c;
    if (!(std::abs(sum - q.trajectory.rewards[t]) <= kStepFidelityTolerance)) {
      throw DecompositionInfidelity("components sum to " + std::to_string(sum) + " but the reward at step " +
                                    std::to_string(q.trajectory.states[t].step_index) + " is " +
                                    std::to_string(q.trajectory.rewards[t]));
    }
    std::vector<double> row(K);
    for (std::size_t k = 0; k < K; ++k) {
      row[k] = discount * r[k];
      columns[k].push_back(row[k]);
    }
    q.per_step.push_back(std::move(row));
    discount *= gamma;
  }
  for (const auto& col : columns) q.totals.push_back(compensated_sum(col));
  return q;
}

QDecomposition decompose_q(const TankEnv& env, const Policy& policy, const PlantState& from,
                           const RewardComponentSpec& spec, std::size_t horizon) {
  const ControlInput a = policy.act(from, env.observe(from));
  return decompose_q(env, policy, from, a, spec, horizon, env.params().gamma);
}

FigureData eo_figure_data(const QDecomposition& q) {
  nlohmann::json steps = nlohmann::json::array();
  const double dt = q.trajectory.dt;
  for (std::size_t t = 0; t < q.per_step.size(); ++t) {
    steps.push_back({{"t", static_cast<double>(q.origin_step + t) * dt}, {"values", q.per_step[t]}});
  }
  return {{"kind", "stacked_rewards"},
          {"names", q.names},
          {"gamma", q.gamma},
          {"discounted", true},
          {"origin_time", q.origin_time},
          {"origin_action", q.origin_action},
          {"steps", steps},
          {"totals", q.totals},
          {"total", q.total()}};
}

}  // namespace tankxrl
