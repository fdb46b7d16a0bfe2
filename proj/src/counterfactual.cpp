#include "tankxrl/counterfactual.hpp"

#include <algorithm>
#include <cmath>

#include "tankxrl/error.hpp"
#include "tankxrl/util.hpp"

namespace tankxrl {

namespace {

std::size_t time_to_step(double t, double dt, const char* what) {
  const double k = t / dt;
  const double r = std::round(k);
  if (!std::isfinite(t) || t < 0.0 || std::abs(k - r) > 1e-9) {
    throw IntervalOutOfRange(std::string(what) + " time " + std::to_string(t) + " s is not a non-negative multiple of " +
                             std::to_string(dt) + " s");
  }
  return static_cast<std::size_t>(r);
}

/// Switches from `base` to `inner` for absolute steps in [begin, end).
class IntervalPolicy : public Policy {
 public:
  IntervalPolicy(const Policy& inner, const Policy& base, StepInterval iv) : inner_(inner), base_(base), iv_(iv) {}
  ControlInput act(const PlantState& state, const Observation& obs) const override {
    if (state.step_index >= iv_.begin && state.step_index < iv_.end) return inner_.act(state, obs);
    return base_.act(state, obs);
  }

 private:
  const Policy& inner_;
  const Policy& base_;
  StepInterval iv_;
};

void append(Trajectory& dst, const Trajectory& src, std::size_t from_action) {
  for (std::size_t t = from_action; t < src.length(); ++t) {
    dst.actions.push_back(src.actions[t]);
    dst.rewards.push_back(src.rewards[t]);
    dst.reward_components.push_back(src.reward_components[t]);
    dst.states.push_back(src.states[t + 1]);
    dst.observations.push_back(src.observations[t + 1]);
  }
}

Trajectory prefix(const Trajectory& src, std::size_t steps) {
  Trajectory out;
  out.dt = src.dt;
  out.start_step = src.start_step;
  out.states.assign(src.states.begin(), src.states.begin() + static_cast<std::ptrdiff_t>(steps + 1));
  out.observations.assign(src.observations.begin(), src.observations.begin() + static_cast<std::ptrdiff_t>(steps + 1));
  out.actions.assign(src.actions.begin(), src.actions.begin() + static_cast<std::ptrdiff_t>(steps));
  out.rewards.assign(src.rewards.begin(), src.rewards.begin() + static_cast<std::ptrdiff_t>(steps));
  out.reward_components.assign(src.reward_components.begin(),
                               src.reward_components.begin() + static_cast<std::ptrdiff_t>(steps));
  return out;
}

}  // namespace

dsl::EvalContext policy_context(const TankEnv& env, const PlantState& state, const Observation& obs) {
  using dsl::Var;
  dsl::EvalContext ctx;
  for (std::size_t i = 0; i < 6; ++i) ctx.values[i] = obs.values[i];
  ctx[Var::SpH1] = state.setpoints[0];
  ctx[Var::SpH2] = state.setpoints[1];
  ctx[Var::PrevV1] = state.prev_action ? (*state.prev_action)[0] : 0.0;
  ctx[Var::PrevV2] = state.prev_action ? (*state.prev_action)[1] : 0.0;
  ctx.action_low = env.params().action_low;
  ctx.action_high = env.params().action_high;
  return ctx;
}

ProgramPolicy::ProgramPolicy(std::shared_ptr<const dsl::Program> program, const TankEnv& env)
    : program_(std::move(program)), env_(&env) {
  if (!program_) throw ConfigError("program policy needs a program");
}

ControlInput ProgramPolicy::act(const PlantState& state, const Observation& obs) const {
  return dsl::evaluate(*program_, policy_context(*env_, state, obs));
}

std::string to_string(CfKind kind) {
  switch (kind) {
    case CfKind::Action: return "action";
    case CfKind::Behavior: return "behavior";
    case CfKind::Policy: return "policy";
  }
  return "action";
}

std::string to_string(BehaviorMode mode) { return mode == BehaviorMode::Smooth ? "smooth" : "opposite"; }

CfSpec CfSpec::action_override(double t_start, double t_end, std::optional<double> v1, std::optional<double> v2) {
  CfSpec s;
  s.kind = CfKind::Action;
  s.t_start = t_start;
  s.t_end = t_end;
  s.action = {v1, v2};
  return s;
}

CfSpec CfSpec::behavior(double t_start, double t_end, double alpha, BehaviorMode mode) {
  CfSpec s;
  s.kind = CfKind::Behavior;
  s.t_start = t_start;
  s.t_end = t_end;
  s.alpha = alpha;
  s.mode = mode;
  return s;
}

CfSpec CfSpec::policy(double t_start, double t_end, std::shared_ptr<const dsl::Program> program, std::string source) {
  CfSpec s;
  s.kind = CfKind::Policy;
  s.t_start = t_start;
  s.t_end = t_end;
  s.program = std::move(program);
  s.program_source = std::move(source);
  return s;
}

nlohmann::json cf_spec_to_json(const CfSpec& spec) {
  nlohmann::json j{{"kind", to_string(spec.kind)}, {"interval", {spec.t_start, spec.t_end}}};
  switch (spec.kind) {
    case CfKind::Action: {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& v : spec.action) a.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
      j["action"] = a;
      break;
    }
    case CfKind::Behavior:
      j["alpha"] = spec.alpha;
      j["mode"] = to_string(spec.mode);
      break;
    case CfKind::Policy:
      j["program"] = spec.program ? dsl::pretty_print(*spec.program) : spec.program_source;
      break;
  }
  return j;
}

StepInterval validate_cf_spec(const CfSpec& spec, const EnvParams& params) {
  StepInterval iv;
  iv.begin = time_to_step(spec.t_start, params.dt, "start");
  iv.end = time_to_step(spec.t_end, params.dt, "end");
  if (iv.begin >= iv.end) throw IntervalOutOfRange("interval start must be before its end");
  if (iv.end > params.n_steps) {
    throw IntervalOutOfRange("interval end " + std::to_string(spec.t_end) + " s is past the episode end of " +
                             std::to_string(params.total_time) + " s");
  }
  switch (spec.kind) {
    case CfKind::Action:
      if (!spec.action[0] && !spec.action[1]) throw ConfigError("action counterfactual overrides no pump");
      for (const auto& v : spec.action) {
        if (v && !std::isfinite(*v)) throw ConfigError("override value must be finite");
      }
      break;
    case CfKind::Behavior:
      if (!std::isfinite(spec.alpha)) throw ConfigError("alpha must be finite");
      if (spec.mode == BehaviorMode::Smooth && !(spec.alpha > 0.0)) {
        throw ConfigError("smooth behavior needs alpha > 0");
      }
      break;
    case CfKind::Policy:
      if (!spec.program) throw ConfigError("policy counterfactual needs a program");
      break;
  }
  return iv;
}

ActionPlan cf_action_sequence(const Trajectory& reference, const CfSpec& spec, const EnvParams& params) {
  if (spec.kind != CfKind::Action) throw ConfigError("spec is not an action counterfactual");
  ActionPlan plan;
  plan.interval = validate_cf_spec(spec, params);
  if (reference.start_step + reference.length() < plan.interval.end) {
    throw IntervalOutOfRange("reference trajectory does not cover the interval");
  }
  std::array<std::optional<double>, 2> v = spec.action;
  for (std::size_t i = 0; i < 2; ++i) {
    if (!v[i]) continue;
    const double c = std::clamp(*v[i], params.action_low[i], params.action_high[i]);
    if (c != *v[i]) plan.clipped = true;
    v[i] = c;
  }
  plan.values.assign(plan.interval.size(), v);
  return plan;
}

std::vector<double> cf_behavior_sequence_unclipped(const std::vector<double>& prev, double alpha,
                                                   BehaviorMode mode) {
  std::vector<double> out;
  if (prev.empty()) return out;
  out.reserve(prev.size());
  out.push_back(prev[0]);
  for (std::size_t t = 1; t < prev.size(); ++t) {
    if (mode == BehaviorMode::Smooth) {
      const double last = out.back();
      double v = (1.0 - alpha) * last + alpha * prev[t];
      if (alpha >= 0.0 && alpha <= 1.0) v = std::clamp(v, std::min(last, prev[t]), std::max(last, prev[t]));
      out.push_back(v);
    } else {
      // prev0 + (prev_t - prev0) can round away from prev_t.
      out.push_back(alpha == 1.0 ? prev[t] : prev[0] + alpha * (prev[t] - prev[0]));
    }
  }
  return out;
}

std::vector<double> cf_behavior_sequence(const std::vector<double>& prev, double alpha, BehaviorMode mode,
                                         double low, double high) {
  std::vector<double> out = cf_behavior_sequence_unclipped(prev, alpha, mode);
  for (double& v : out) v = std::clamp(v, low, high);
  return out;
}

ActionPlan cf_behavior_plan(const Trajectory& reference, const CfSpec& spec, const EnvParams& params) {
  if (spec.kind != CfKind::Behavior) throw ConfigError("spec is not a behavior counterfactual");
  ActionPlan plan;
  plan.interval = validate_cf_spec(spec, params);
  if (plan.interval.begin < reference.start_step ||
      reference.start_step + reference.length() < plan.interval.end) {
    throw IntervalOutOfRange("reference trajectory does not cover the interval");
  }
  plan.values.assign(plan.interval.size(), {});
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> prev;
    for (std::size_t k = plan.interval.begin; k < plan.interval.end; ++k) {
      prev.push_back(reference.actions[k - reference.start_step][i]);
    }
    const std::vector<double> raw = cf_behavior_sequence_unclipped(prev, spec.alpha, spec.mode);
    for (std::size_t t = 0; t < raw.size(); ++t) {
      const double c = std::clamp(raw[t], params.action_low[i], params.action_high[i]);
      if (c != raw[t]) plan.clipped = true;
      plan.values[t][i] = c;
    }
  }
  return plan;
}

CfResult cf_rollout(const TankEnv& env, const CfSpec& spec, const Trajectory& reference, const Policy& policy) {
  const EnvParams& p = env.params();
  if (reference.start_step != 0 || reference.length() == 0) {
    throw IntervalOutOfRange("counterfactuals need a reference rollout starting at step 0");
  }
  CfResult res;
  res.spec = spec;
  res.interval = validate_cf_spec(spec, p);
  const StepInterval iv = res.interval;
  if (reference.length() < iv.end) throw IntervalOutOfRange("reference trajectory does not cover the interval");
  res.horizon_end = std::min(iv.end + kPostIntervalSteps, p.n_steps);

  // Actual: the reference, extended with the policy if it stops early.
  if (reference.length() >= res.horizon_end) {
    res.actual = prefix(reference, res.horizon_end);
  } else {
    res.actual = reference;
    const Trajectory tail =
        env.rollout(policy, reference.states.back(), res.horizon_end - reference.length());
    append(res.actual, tail, 0);
  }

  res.counterfactual = prefix(reference, iv.begin);
  const PlantState& from = reference.states[iv.begin];
  const std::size_t horizon = res.horizon_end - iv.begin;
  Trajectory tail;
  switch (spec.kind) {
    case CfKind::Action: {
      const ActionPlan plan = cf_action_sequence(reference, spec, p);
      res.clipped = plan.clipped;
      tail = env.rollout(policy, from, horizon, {{0, iv.size(), plan.values.front()}});
      break;
    }
    case CfKind::Behavior: {
      const ActionPlan plan = cf_behavior_plan(reference, spec, p);
      res.clipped = plan.clipped;
      std::vector<ActionOverride> ov;
      for (std::size_t t = 0; t < plan.values.size(); ++t) ov.push_back({t, t + 1, plan.values[t]});
      tail = env.rollout(policy, from, horizon, ov);
      break;
    }
    case CfKind::Policy: {
      const ProgramPolicy program(spec.program, env);
      const IntervalPolicy mixed(program, policy, iv);
      tail = env.rollout(mixed, from, horizon);
      break;
    }
  }
  append(res.counterfactual, tail, 0);
  if (res.clipped) res.warnings.push_back("counterfactual actions were clipped to the action box");

  res.reward_delta.resize(res.horizon_end);
  for (std::size_t t = 0; t < res.horizon_end; ++t) {
    res.reward_delta[t] = res.counterfactual.rewards[t] - res.actual.rewards[t];
  }
  res.cumulative_delta = compensated_sum(res.reward_delta);
  return res;
}

FigureData cf_figure_data(const CfResult& result) {
  const Trajectory& a = result.actual;
  const Trajectory& c = result.counterfactual;
  nlohmann::json series = nlohmann::json::array();
  auto level_series = [&](std::size_t i, const std::string& name) {
    std::vector<double> xa, xc;
    for (const auto& s : a.states) xa.push_back(s.h[i]);
    for (const auto& s : c.states) xc.push_back(s.h[i]);
    series.push_back({{"name", name}, {"unit", "m"}, {"actual", xa}, {"counterfactual", xc}});
  };
  for (std::size_t i = 0; i < 4; ++i) level_series(i, "h" + std::to_string(i + 1));
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> xa, xc;
    for (const auto& u : a.actions) xa.push_back(u[i]);
    for (const auto& u : c.actions) xc.push_back(u[i]);
    series.push_back({{"name", "v" + std::to_string(i + 1)}, {"unit", "V"}, {"actual", xa}, {"counterfactual", xc}});
  }
  series.push_back({{"name", "reward"}, {"unit", ""}, {"actual", a.rewards}, {"counterfactual", c.rewards}});

  std::vector<double> level_times, step_times;
  for (std::size_t i = 0; i < a.states.size(); ++i) level_times.push_back(a.time_at(i));
  for (std::size_t i = 0; i < a.actions.size(); ++i) step_times.push_back(a.time_at(i));
  std::vector<double> setpoint1, setpoint2;
  for (const auto& s : a.states) {
    setpoint1.push_back(s.setpoints[0]);
    setpoint2.push_back(s.setpoints[1]);
  }

  return {{"kind", "cf_compare"},
          {"cf", cf_spec_to_json(result.spec)},
          {"interval", {result.spec.t_start, result.spec.t_end}},
          {"level_times", level_times},
          {"step_times", step_times},
          {"setpoints", {{"h1", setpoint1}, {"h2", setpoint2}}},
          {"series", series},
          {"reward_delta", result.reward_delta},
          {"cumulative_delta", result.cumulative_delta},
          {"clipped", result.clipped},
          {"warnings", result.warnings}};
}

}  // namespace tankxrl
