#include "tankxrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tankxrl/error.hpp"
#include "tankxrl/util.hpp"

namespace tankxrl {

namespace {

double box_scale(double x, double lo, double hi) { return 2.0 * (x - lo) / (hi - lo) - 1.0; }
double box_unscale(double s, double lo, double hi) { return lo + (s + 1.0) * 0.5 * (hi - lo); }

bool all_finite(const Vec4& h) {
  return std::all_of(h.begin(), h.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void EnvParams::validate() const {
  if (n_steps == 0 || !(dt > 0.0)) throw ConfigError("n_steps and dt must be positive");
  if (std::abs(dt * static_cast<double>(n_steps) - total_time) > 1e-9 * total_time) {
    throw ConfigError("dt * n_steps must equal total_time");
  }
  if (rk4_substeps == 0) throw ConfigError("rk4_substeps must be >= 1");
  for (std::size_t i = 0; i < 2; ++i) {
    if (!(action_low[i] < action_high[i])) throw ConfigError("action_low must be < action_high");
    if (!(flow_split[i] > 0.0 && flow_split[i] < 1.0)) throw ConfigError("flow splits must lie in (0, 1)");
    if (!(pump_gain[i] > 0.0)) throw ConfigError("pump gains must be positive");
  }
  for (std::size_t i = 0; i < kObsDim; ++i) {
    if (!(obs_low[i] < obs_high[i])) throw ConfigError("obs_low must be < obs_high");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(tank_area[i] > 0.0) || !(outlet_area[i] > 0.0)) throw ConfigError("areas must be positive");
    if (initial_obs[i] < 0.0) throw ConfigError("initial levels must be non-negative");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (setpoint_period == 0) throw ConfigError("setpoint_period must be >= 1");
  if (!(setpoint_range[0] <= setpoint_range[1])) throw ConfigError("setpoint_range is inverted");
  if (!(gravity > 0.0)) throw ConfigError("gravity must be positive");
}

void to_json(nlohmann::json& j, const EnvParams& p) {
  j = nlohmann::json{{"total_time", p.total_time},
                     {"n_steps", p.n_steps},
                     {"dt", p.dt},
                     {"rk4_substeps", p.rk4_substeps},
                     {"action_low", p.action_low},
                     {"action_high", p.action_high},
                     {"obs_low", p.obs_low},
                     {"obs_high", p.obs_high},
                     {"initial_obs", p.initial_obs},
                     {"setpoint_range", p.setpoint_range},
                     {"setpoint_period", p.setpoint_period},
                     {"gamma", p.gamma},
                     {"tank_area", p.tank_area},
                     {"outlet_area", p.outlet_area},
                     {"pump_gain", p.pump_gain},
                     {"flow_split", p.flow_split},
                     {"gravity", p.gravity}};
}

void from_json(const nlohmann::json& j, EnvParams& p) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("total_time", p.total_time);
  get("n_steps", p.n_steps);
  get("dt", p.dt);
  get("rk4_substeps", p.rk4_substeps);
  get("action_low", p.action_low);
  get("action_high", p.action_high);
  get("obs_low", p.obs_low);
  get("obs_high", p.obs_high);
  get("initial_obs", p.initial_obs);
  get("setpoint_range", p.setpoint_range);
  get("setpoint_period", p.setpoint_period);
  get("gamma", p.gamma);
  get("tank_area", p.tank_area);
  get("outlet_area", p.outlet_area);
  get("pump_gain", p.pump_gain);
  get("flow_split", p.flow_split);
  get("gravity", p.gravity);
}

EnvParams load_env_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open environment config: " + path);
  EnvParams p;
  try {
    from_json(nlohmann::json::parse(in), p);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid environment config " + path + ": " + e.what());
  }
  p.validate();
  return p;
}

std::string env_hash(const EnvParams& p) {
  nlohmann::json j = p;
  return hex64(fnv1a64(j.dump()));
}

nlohmann::json trajectory_to_json(const Trajectory& traj) {
  nlohmann::json times = nlohmann::json::array();
  nlohmann::json obs = nlohmann::json::array();
  for (std::size_t i = 0; i < traj.observations.size(); ++i) {
    times.push_back(traj.time_at(i));
    obs.push_back(traj.observations[i].values);
  }
  return nlohmann::json{{"times", times},
                        {"observations", obs},
                        {"actions", traj.actions},
                        {"rewards", traj.rewards},
                        {"reward_components", traj.reward_components}};
}

Vec2 setpoint_at(const EnvParams& params, std::size_t step_index, std::uint64_t seed) {
  const std::uint64_t block = step_index / params.setpoint_period;
  Rng rng(splitmix64(seed) ^ splitmix64(block + 0x5e7901u));
  const double lo = params.setpoint_range[0];
  const double hi = params.setpoint_range[1];
  const double s1 = rng.uniform(lo, hi);
  const double s2 = rng.uniform(lo, hi);
  return {s1, s2};
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

TankEnv::TankEnv(EnvParams params, std::uint64_t seed) : params_(std::move(params)), seed_(seed) {
  params_.validate();
}

PlantState TankEnv::initial_state() const {
  PlantState s;
  for (std::size_t i = 0; i < 4; ++i) s.h[i] = params_.initial_obs[i];
  s.setpoints = setpoint_at(0);
  s.step_index = 0;
  return s;
}

Vec2 TankEnv::setpoint_at(std::size_t step_index) const {
  return tankxrl::setpoint_at(params_, step_index, seed_);
}

Observation TankEnv::observe(const PlantState& state) const {
  Observation obs;
  for (std::size_t i = 0; i < 4; ++i) obs.values[i] = state.h[i];
  obs.values[4] = state.setpoints[0] - state.h[0];
  obs.values[5] = state.setpoints[1] - state.h[1];
  obs.scaled = scale_obs(obs.values);
  return obs;
}

Vec6 TankEnv::scale_obs(const Vec6& raw) const {
  Vec6 out{};
  for (std::size_t i = 0; i < kObsDim; ++i) out[i] = box_scale(raw[i], params_.obs_low[i], params_.obs_high[i]);
  return out;
}

double TankEnv::scale_level(double h) const { return box_scale(h, params_.obs_low[0], params_.obs_high[0]); }

ControlInput TankEnv::clip_action(const ControlInput& u) const {
  ControlInput out{};
  for (std::size_t i = 0; i < kActionDim; ++i) {
    out[i] = std::clamp(u[i], params_.action_low[i], params_.action_high[i]);
  }
  return out;
}

Vec2 TankEnv::scale_action(const ControlInput& u) const {
  const ControlInput c = clip_action(u);
  Vec2 out{};
  for (std::size_t i = 0; i < kActionDim; ++i) out[i] = box_scale(c[i], params_.action_low[i], params_.action_high[i]);
  return out;
}

ControlInput TankEnv::unscale_action(const Vec2& scaled) const {
  ControlInput out{};
  for (std::size_t i = 0; i < kActionDim; ++i) {
    out[i] = box_unscale(std::clamp(scaled[i], -1.0, 1.0), params_.action_low[i], params_.action_high[i]);
  }
  return out;
}

Vec4 TankEnv::dynamics_derivative(const Vec4& h, const ControlInput& u) const {
  const auto& A = params_.tank_area;
  const auto& a = params_.outlet_area;
  const double g2 = 2.0 * params_.gravity;
  const double q1 = params_.pump_gain[0] * u[0];
  const double q2 = params_.pump_gain[1] * u[1];
  const double gam1 = params_.flow_split[0];
  const double gam2 = params_.flow_split[1];

  Vec4 out{};
  std::array<double, 4> outflow{};
  for (std::size_t i = 0; i < 4; ++i) outflow[i] = a[i] * std::sqrt(g2 * std::max(h[i], 0.0));

  out[0] = (-outflow[0] + outflow[2] + gam1 * q1) / A[0];
  out[1] = (-outflow[1] + outflow[3] + gam2 * q2) / A[1];
  out[2] = (-outflow[2] + (1.0 - gam2) * q2) / A[2];
  out[3] = (-outflow[3] + (1.0 - gam1) * q1) / A[3];
  return out;
}

std::array<double, 3> TankEnv::reward_terms(const PlantState& state, const ControlInput& u) const {
  const double e1 = scale_level(state.h[0]) - scale_level(state.setpoints[0]);
  const double e2 = scale_level(state.h[1]) - scale_level(state.setpoints[1]);
  const Vec2 now = scale_action(u);
  const Vec2 before = state.prev_action ? scale_action(*state.prev_action) : now;
  const double d1 = now[0] - before[0];
  const double d2 = now[1] - before[1];
  return {-100.0 * e1 * e1, -100.0 * e2 * e2, -(d1 * d1 + d2 * d2)};
}

StepResult TankEnv::step(const PlantState& state, const ControlInput& u_raw) const {
  if (state.step_index >= params_.n_steps) {
    throw StepPastHorizon("step " + std::to_string(state.step_index) + " is past the horizon of " +
                          std::to_string(params_.n_steps) + " steps");
  }
  const ControlInput u = clip_action(u_raw);

  StepResult result;
  result.reward_components = reward_terms(state, u);
  result.reward = result.reward_components[0] + result.reward_components[1] + result.reward_components[2];

  // Fixed-step RK4, zero-order hold on u across the control interval.
  Vec4 h = state.h;
  const double hstep = params_.dt / static_cast<double>(params_.rk4_substeps);
  auto axpy = [](const Vec4& x, const Vec4& k, double s) {
    Vec4 r{};
    for (std::size_t i = 0; i < 4; ++i) r[i] = x[i] + s * k[i];
    return r;
  };
  for (std::size_t sub = 0; sub < params_.rk4_substeps; ++sub) {
    const Vec4 k1 = dynamics_derivative(h, u);
    const Vec4 k2 = dynamics_derivative(axpy(h, k1, 0.5 * hstep), u);
    const Vec4 k3 = dynamics_derivative(axpy(h, k2, 0.5 * hstep), u);
    const Vec4 k4 = dynamics_derivative(axpy(h, k3, hstep), u);
    for (std::size_t i = 0; i < 4; ++i) {
      h[i] += hstep / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      h[i] = std::max(h[i], 0.0);
    }
  }
  if (!all_finite(h)) throw NonFiniteState("integration produced a non-finite tank level");

  PlantState next;
  next.h = h;
  next.step_index = state.step_index + 1;
  next.setpoints = setpoint_at(next.step_index);
  next.prev_action = u;
  result.next_state = next;
  result.next_obs = observe(next);
  if (!std::isfinite(result.reward)) throw NonFiniteState("non-finite reward");
  return result;
}

Trajectory TankEnv::rollout(const Policy& policy, const PlantState& from, std::size_t horizon,
                            const std::vector<ActionOverride>& overrides) const {
  if (horizon == 0) throw IntervalOutOfRange("rollout horizon must be >= 1");
  for (const auto& ov : overrides) {
    if (ov.begin >= ov.end || ov.end > horizon) {
      throw IntervalOutOfRange("override interval [" + std::to_string(ov.begin) + ", " + std::to_string(ov.end) +
                               ") is outside the rollout horizon");
    }
  }

  Trajectory traj;
  traj.dt = params_.dt;
  traj.start_step = from.step_index;
  traj.states.reserve(horizon + 1);
  traj.observations.reserve(horizon + 1);
  traj.actions.reserve(horizon);

  PlantState state = from;
  Observation obs = observe(state);
  traj.states.push_back(state);
  traj.observations.push_back(obs);

  for (std::size_t t = 0; t < horizon; ++t) {
    std::array<std::optional<double>, 2> forced{};
    for (const auto& ov : overrides) {
      if (t >= ov.begin && t < ov.end) {
        for (std::size_t i = 0; i < kActionDim; ++i) {
          if (ov.value[i]) forced[i] = ov.value[i];
        }
      }
    }
    ControlInput u{};
    if (!forced[0] || !forced[1]) {
      u = policy.act(state, obs);
      if (!std::isfinite(u[0]) || !std::isfinite(u[1])) {
        throw PolicyEvalError("policy returned a non-finite action at step " + std::to_string(state.step_index));
      }
    }
    for (std::size_t i = 0; i < kActionDim; ++i) {
      if (forced[i]) u[i] = *forced[i];
    }
    u = clip_action(u);

    StepResult r = step(state, u);
    traj.actions.push_back(u);
    traj.rewards.push_back(r.reward);
    traj.reward_components.push_back(r.reward_components);
    state = r.next_state;
    obs = r.next_obs;
    traj.states.push_back(state);
    traj.observations.push_back(obs);
  }
  return traj;
}

}  // namespace tankxrl
