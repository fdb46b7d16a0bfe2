#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tankxrl/env.hpp"

namespace tankxrl {

enum class Activation { Tanh, Relu, Identity };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

double activate(Activation act, double z);
double activate_derivative(Activation act, double z);

/// Dense layer; `w` is row-major out x in.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;
  Activation act = Activation::Tanh;

  double weight(std::size_t row, std::size_t col) const { return w[row * in + col]; }
};

struct NetworkWeights {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<Layer> layers;

  /// Throws ShapeMismatch if layer dims do not chain.
  void validate() const;
  std::size_t parameter_count() const;
};

/// Per-layer pre-activations and activations of one forward pass.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;   // z_l
  std::vector<std::vector<double>> post;  // a_l = f(z_l)
};

std::vector<double> predict(const NetworkWeights& net, std::span<const double> x);
ForwardTrace forward_trace(const NetworkWeights& net, std::span<const double> x);

/// d output / d input, row-major output_dim x input_dim.
std::vector<double> jacobian(const NetworkWeights& net, std::span<const double> x);

nlohmann::json weights_to_json(const NetworkWeights& net);
/// Parses a weight document; `source` names it in diagnostics.
NetworkWeights weights_from_json(const nlohmann::json& j, const std::string& source = "<json>");

/// Weight file I/O. Loading requires input_dim == 6 (the plant observation).
NetworkWeights load_weights(const std::string& path);
void save_weights(const NetworkWeights& net, const std::string& path);
std::string weights_hash(const NetworkWeights& net);

/// Randomly initialised network with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// weights and biases.
NetworkWeights random_network(const std::vector<std::size_t>& dims, Activation hidden, Activation last,
                              std::uint64_t seed);

/// The explained agent: scales the observation, runs the network and maps
/// its [-1, 1] output back to volts.
class NetworkPolicy : public Policy {
 public:
  NetworkPolicy(NetworkWeights weights, const TankEnv& env);

  ControlInput act(const PlantState& state, const Observation& obs) const override;
  const NetworkWeights& weights() const { return weights_; }

 private:
  NetworkWeights weights_;
  const TankEnv* env_;
};

/// Stand-in controller that the bundled network is cloned from: steady-state
/// feedforward for the current setpoints plus proportional feedback on the
/// scaled tracking errors, all in scaled action units.
struct ScriptedTeacher {
  Vec2 gains{4.0, 4.0};
  /// pairing[k] = index of the error (0: err_h1, 1: err_h2) driving pump k.
  std::array<std::size_t, 2> pairing{0, 1};

  /// Scaled action in [-1, 1] for a scaled observation.
  Vec2 act_scaled(const TankEnv& env, const Vec6& obs_scaled) const;
};

/// Pump voltages holding (sp1, sp2) in steady state, clipped to the box.
ControlInput steady_state_inputs(const EnvParams& params, const Vec2& setpoints);

class TeacherPolicy : public Policy {
 public:
  TeacherPolicy(ScriptedTeacher teacher, const TankEnv& env) : teacher_(teacher), env_(&env) {}
  ControlInput act(const PlantState& state, const Observation& obs) const override;

 private:
  ScriptedTeacher teacher_;
  const TankEnv* env_;
};

/// Mean |scaled err_h1| and |scaled err_h2| over the last `window` steps of a
/// full-episode rollout.
Vec2 tracking_error(const TankEnv& env, const Policy& policy, std::size_t window);

enum class Optimizer { Adam, GradientDescent };

struct CloneOptions {
  std::size_t epochs = 2000;
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  /// Setpoint schedules used to collect teacher states.
  std::size_t episodes = 6;
  /// Std-dev of exploration noise (scaled units) added to teacher actions
  /// while collecting; labels stay noise-free.
  double exploration_noise = 0.15;
  std::vector<std::size_t> hidden{64, 64};
};

struct CloneReport {
  NetworkWeights weights;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t samples = 0;
};

/// Supervised dataset of scaled observations and scaled teacher actions.
struct CloneDataset {
  std::vector<Vec6> inputs;
  std::vector<Vec2> targets;
};

CloneDataset collect_teacher_data(const ScriptedTeacher& teacher, const EnvParams& params, const CloneOptions& opt);

CloneReport behavior_clone(const ScriptedTeacher& teacher, const EnvParams& params, const CloneOptions& opt = {});

/// Frozen teacher gains, picked by a 3x3 grid over {2, 4, 8} on cloned-policy tracking error.
ScriptedTeacher default_teacher();

}  // namespace tankxrl
