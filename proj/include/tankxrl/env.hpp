#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace tankxrl {

using Vec2 = std::array<double, 2>;
using Vec4 = std::array<double, 4>;
using Vec6 = std::array<double, 6>;

/// Pump voltages (v1, v2) in volts.
using ControlInput = Vec2;

inline constexpr std::size_t kObsDim = 6;
inline constexpr std::size_t kActionDim = 2;

/// Quadruple-tank configuration. Lengths in metres, time in seconds.
///
/// Physical constants are Johansson's laboratory "minimum-phase" set
/// (A1=A3=28 cm2, A2=A4=32 cm2, a1=a3=0.071 cm2, a2=a4=0.057 cm2,
/// gamma1=0.70, gamma2=0.60) converted to SI, with the pump gains scaled by
/// 2/3 so that full voltage on both pumps lands the lower tanks near 0.6 m.
struct EnvParams {
  double total_time = 8000.0;
  std::size_t n_steps = 400;
  double dt = 20.0;
  std::size_t rk4_substeps = 4;

  Vec2 action_low{0.1, 0.1};
  Vec2 action_high{10.0, 10.0};
  Vec6 obs_low{0.0, 0.0, 0.0, 0.0, -0.6, -0.6};
  Vec6 obs_high{0.6, 0.6, 0.6, 0.6, 0.6, 0.6};
  Vec6 initial_obs{0.141, 0.112, 0.072, 0.42, 0.0, 0.0};

  Vec2 setpoint_range{0.1, 0.5};
  std::size_t setpoint_period = 40;
  double gamma = 0.9;

  Vec4 tank_area{28e-4, 32e-4, 28e-4, 32e-4};
  Vec4 outlet_area{0.071e-4, 0.057e-4, 0.071e-4, 0.057e-4};
  Vec2 pump_gain{2.22e-6, 2.2333e-6};
  Vec2 flow_split{0.70, 0.60};
  double gravity = 9.81;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

void to_json(nlohmann::json& j, const EnvParams& p);
void from_json(const nlohmann::json& j, EnvParams& p);

/// Loads an environment config file; missing fields keep their defaults.
EnvParams load_env_params(const std::string& path);

/// Stable FNV-1a hash of the canonical JSON dump, hex encoded.
std::string env_hash(const EnvParams& p);

struct PlantState {
  Vec4 h{};
  Vec2 setpoints{};
  std::size_t step_index = 0;
  /// Empty at the first step of an episode: the control-effort term is zero
  /// until an action has been applied.
  std::optional<ControlInput> prev_action;
};

struct Observation {
  Vec6 values{};  // h1, h2, h3, h4, err_h1, err_h2 (raw)
  Vec6 scaled{};
};

struct StepResult {
  PlantState next_state;
  Observation next_obs;
  double reward = 0.0;
  std::array<double, 3> reward_components{};
};

/// A time-indexed rollout. `states`/`observations` hold one more entry than
/// `actions`: entry i is the state in which actions[i] was applied, and the
/// last entry is the terminal state.
struct Trajectory {
  double dt = 20.0;
  std::size_t start_step = 0;
  std::vector<PlantState> states;
  std::vector<Observation> observations;
  std::vector<ControlInput> actions;
  std::vector<double> rewards;
  std::vector<std::array<double, 3>> reward_components;

  std::size_t length() const { return actions.size(); }
  double time_at(std::size_t i) const { return static_cast<double>(start_step + i) * dt; }
};

/// Raw-unit trajectory export: {times, observations, actions, rewards,
/// reward_components}. `times` indexes `observations`.
nlohmann::json trajectory_to_json(const Trajectory& traj);

class Policy {
 public:
  virtual ~Policy() = default;
  /// Raw-volt action for the given state; the plant clips to the box.
  virtual ControlInput act(const PlantState& state, const Observation& obs) const = 0;
};

/// Open-loop replacement of one or both pumps over [begin, end), relative to
/// the rollout start.
struct ActionOverride {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::array<std::optional<double>, 2> value{};
};

class TankEnv {
 public:
  explicit TankEnv(EnvParams params = {}, std::uint64_t seed = 0);

  const EnvParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  PlantState initial_state() const;
  Observation observe(const PlantState& state) const;

  Vec4 dynamics_derivative(const Vec4& h, const ControlInput& u) const;
  StepResult step(const PlantState& state, const ControlInput& u) const;
  Vec2 setpoint_at(std::size_t step_index) const;

  /// Reward terms on scaled quantities: 100(h1^-s1^)^2, 100(h2^-s2^)^2 and
  /// |u^ - u^_prev|^2, each negated.
  std::array<double, 3> reward_terms(const PlantState& state, const ControlInput& u) const;

  Vec6 scale_obs(const Vec6& raw) const;
  double scale_level(double h) const;  // h1 box, used for setpoints
  ControlInput clip_action(const ControlInput& u) const;
  Vec2 scale_action(const ControlInput& u) const;
  ControlInput unscale_action(const Vec2& scaled) const;

  Trajectory rollout(const Policy& policy, const PlantState& from, std::size_t horizon,
                     const std::vector<ActionOverride>& overrides = {}) const;

 private:
  EnvParams params_;
  std::uint64_t seed_;
};

/// Deterministic piecewise-constant setpoint schedule shared by TankEnv.
Vec2 setpoint_at(const EnvParams& params, std::size_t step_index, std::uint64_t seed);

/// Constant-voltage policy, mostly for tests and plant probing.
class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(ControlInput u) : u_(u) {}
  ControlInput act(const PlantState&, const Observation&) const override { return u_; }

 private:
  ControlInput u_;
};

/// Discounted return sum_t gamma^t r_t of a reward sequence.
double discounted_return(const std::vector<double>& rewards, double gamma);

}  // namespace tankxrl
