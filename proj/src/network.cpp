#include "tankxrl/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tankxrl/error.hpp"
#include "tankxrl/kernels.hpp"
#include "tankxrl/util.hpp"

namespace tankxrl {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw WeightFileError("unknown activation '" + name + "'");
}

double activate(Activation act, double z) {
  switch (act) {
    case Activation::Tanh:
      return std::tanh(z);
    case Activation::Relu:
      return z > 0.0 ? z : 0.0;
    case Activation::Identity:
      return z;
  }
  return z;
}

double activate_derivative(Activation act, double z) {
  switch (act) {
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Relu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::Identity:
      return 1.0;
  }
  return 1.0;
}

void NetworkWeights::validate() const {
  if (layers.empty()) throw ShapeMismatch("network has no layers");
  std::size_t dim = input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.in != dim) {
      throw ShapeMismatch("layer " + std::to_string(l) + " expects " + std::to_string(layer.in) +
                          " inputs but receives " + std::to_string(dim));
    }
    if (layer.w.size() != layer.in * layer.out || layer.b.size() != layer.out) {
      throw ShapeMismatch("layer " + std::to_string(l) + " parameter arrays do not match its dims");
    }
    dim = layer.out;
  }
  if (dim != output_dim) {
    throw ShapeMismatch("network emits " + std::to_string(dim) + " outputs, declared " + std::to_string(output_dim));
  }
}

std::size_t NetworkWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

ForwardTrace forward_trace(const NetworkWeights& net, std::span<const double> x) {
  if (x.size() != net.input_dim) {
    throw ShapeMismatch("input has " + std::to_string(x.size()) + " features, network expects " +
                        std::to_string(net.input_dim));
  }
  ForwardTrace trace;
  trace.pre.reserve(net.layers.size());
  trace.post.reserve(net.layers.size());
  std::vector<double> a(x.begin(), x.end());
  for (const Layer& layer : net.layers) {
    std::vector<double> z(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
      double acc = layer.b[r];
      const double* row = &layer.w[r * layer.in];
      for (std::size_t c = 0; c < layer.in; ++c) acc += row[c] * a[c];
      z[r] = acc;
    }
    std::vector<double> out(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) out[r] = activate(layer.act, z[r]);
    trace.pre.push_back(std::move(z));
    trace.post.push_back(out);
    a = std::move(out);
  }
  return trace;
}

std::vector<double> predict(const NetworkWeights& net, std::span<const double> x) {
  ForwardTrace t = forward_trace(net, x);
  return std::move(t.post.back());
}

std::vector<double> jacobian(const NetworkWeights& net, std::span<const double> x) {
  const ForwardTrace t = forward_trace(net, x);
  // J starts as identity (input x input) and is left-multiplied layer by layer.
  std::size_t cols = net.input_dim;
  std::vector<double> J(cols * cols, 0.0);
  for (std::size_t i = 0; i < cols; ++i) J[i * cols + i] = 1.0;
  std::size_t rows = cols;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    std::vector<double> next(layer.out * cols, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double d = activate_derivative(layer.act, t.pre[l][r]);
      for (std::size_t k = 0; k < rows; ++k) {
        const double w = layer.weight(r, k) * d;
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < cols; ++c) next[r * cols + c] += w * J[k * cols + c];
      }
    }
    J = std::move(next);
    rows = layer.out;
  }
  return J;
}

nlohmann::json weights_to_json(const NetworkWeights& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : net.layers) {
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t r = 0; r < layer.out; ++r) {
      w.push_back(std::vector<double>(layer.w.begin() + static_cast<std::ptrdiff_t>(r * layer.in),
                                      layer.w.begin() + static_cast<std::ptrdiff_t>((r + 1) * layer.in)));
    }
    layers.push_back({{"w", w}, {"b", layer.b}, {"act", to_string(layer.act)}});
  }
  return {{"input_dim", net.input_dim}, {"output_dim", net.output_dim}, {"layers", layers}};
}

NetworkWeights weights_from_json(const nlohmann::json& j, const std::string& source) {
  auto fail = [&](const std::string& field, const std::string& what) -> WeightFileError {
    return WeightFileError(source + ": field '" + field + "': " + what);
  };
  if (!j.is_object()) throw fail("<root>", "expected an object");
  NetworkWeights net;
  for (const char* key : {"input_dim", "output_dim", "layers"}) {
    if (!j.contains(key)) throw fail(key, "missing");
  }
  if (!j["input_dim"].is_number_unsigned()) throw fail("input_dim", "expected a non-negative integer");
  if (!j["output_dim"].is_number_unsigned()) throw fail("output_dim", "expected a non-negative integer");
  if (!j["layers"].is_array()) throw fail("layers", "expected an array");
  net.input_dim = j["input_dim"].get<std::size_t>();
  net.output_dim = j["output_dim"].get<std::size_t>();

  const auto& layers = j["layers"];
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = "layers[" + std::to_string(l) + "]";
    const auto& lj = layers[l];
    if (!lj.is_object() || !lj.contains("w") || !lj.contains("b") || !lj.contains("act")) {
      throw fail(base, "expected {w, b, act}");
    }
    Layer layer;
    const auto& w = lj["w"];
    if (!w.is_array() || w.empty()) throw fail(base + ".w", "expected a non-empty matrix");
    layer.out = w.size();
    for (std::size_t r = 0; r < w.size(); ++r) {
      const auto& row = w[r];
      if (!row.is_array()) throw fail(base + ".w[" + std::to_string(r) + "]", "expected an array");
      if (r == 0) layer.in = row.size();
      if (row.size() != layer.in) throw fail(base + ".w[" + std::to_string(r) + "]", "ragged row");
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (!row[c].is_number()) {
          throw fail(base + ".w[" + std::to_string(r) + "][" + std::to_string(c) + "]", "expected a number");
        }
        layer.w.push_back(row[c].get<double>());
      }
    }
    const auto& b = lj["b"];
    if (!b.is_array()) throw fail(base + ".b", "expected an array");
    for (std::size_t r = 0; r < b.size(); ++r) {
      if (!b[r].is_number()) throw fail(base + ".b[" + std::to_string(r) + "]", "expected a number");
      layer.b.push_back(b[r].get<double>());
    }
    if (!lj["act"].is_string()) throw fail(base + ".act", "expected a string");
    try {
      layer.act = activation_from_string(lj["act"].get<std::string>());
    } catch (const WeightFileError& e) {
      throw fail(base + ".act", e.what());
    }
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

NetworkWeights load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw WeightFileError("cannot open weight file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw WeightFileError(path + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  NetworkWeights net = weights_from_json(j, path);
  if (net.input_dim != kObsDim) {
    throw ShapeMismatch(path + ": input_dim is " + std::to_string(net.input_dim) + ", the plant observation has 6");
  }
  return net;
}

void save_weights(const NetworkWeights& net, const std::string& path) {
  net.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write weight file " + path);
  out << weights_to_json(net).dump(1) << '\n';
  if (!out) throw IoError("failed writing weight file " + path);
}

std::string weights_hash(const NetworkWeights& net) { return hex64(fnv1a64(weights_to_json(net).dump())); }

NetworkWeights random_network(const std::vector<std::size_t>& dims, Activation hidden, Activation last,
                              std::uint64_t seed) {
  if (dims.size() < 2) throw ShapeMismatch("need at least input and output dims");
  Rng rng(seed);
  NetworkWeights net;
  net.input_dim = dims.front();
  net.output_dim = dims.back();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    layer.act = (l + 2 == dims.size()) ? last : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    layer.w.resize(layer.in * layer.out);
    for (double& w : layer.w) w = rng.uniform(-bound, bound);
    layer.b.resize(layer.out);
    for (double& b : layer.b) b = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

NetworkPolicy::NetworkPolicy(NetworkWeights weights, const TankEnv& env) : weights_(std::move(weights)), env_(&env) {
  weights_.validate();
  if (weights_.input_dim != kObsDim || weights_.output_dim != kActionDim) {
    throw ShapeMismatch("policy network must map 6 observations to 2 actions");
  }
  if (weights_.layers.back().act != Activation::Tanh) {
    throw ShapeMismatch("policy network must end in tanh so its output is a scaled action");
  }
}

ControlInput NetworkPolicy::act(const PlantState&, const Observation& obs) const {
  const std::vector<double> y = predict(weights_, obs.scaled);
  if (!std::isfinite(y[0]) || !std::isfinite(y[1])) throw PolicyEvalError("network produced a non-finite action");
  return env_->unscale_action({y[0], y[1]});
}

ControlInput steady_state_inputs(const EnvParams& p, const Vec2& setpoints) {
  const double g2 = 2.0 * p.gravity;
  const double s1 = p.outlet_area[0] * std::sqrt(g2 * std::max(setpoints[0], 0.0));
  const double s2 = p.outlet_area[1] * std::sqrt(g2 * std::max(setpoints[1], 0.0));
  // [g1 k1, (1-g2) k2; (1-g1) k1, g2 k2] v = s
  const double m00 = p.flow_split[0] * p.pump_gain[0];
  const double m01 = (1.0 - p.flow_split[1]) * p.pump_gain[1];
  const double m10 = (1.0 - p.flow_split[0]) * p.pump_gain[0];
  const double m11 = p.flow_split[1] * p.pump_gain[1];
  const double det = m00 * m11 - m01 * m10;
  ControlInput v{(m11 * s1 - m01 * s2) / det, (m00 * s2 - m10 * s1) / det};
  for (std::size_t i = 0; i < 2; ++i) v[i] = std::clamp(v[i], p.action_low[i], p.action_high[i]);
  return v;
}

Vec2 ScriptedTeacher::act_scaled(const TankEnv& env, const Vec6& obs_scaled) const {
  const EnvParams& p = env.params();
  Vec6 raw{};
  for (std::size_t i = 0; i < kObsDim; ++i) {
    raw[i] = p.obs_low[i] + (obs_scaled[i] + 1.0) * 0.5 * (p.obs_high[i] - p.obs_low[i]);
  }
  const Vec2 sp{raw[0] + raw[4], raw[1] + raw[5]};
  const Vec2 ff = env.scale_action(steady_state_inputs(p, sp));
  Vec2 out{};
  for (std::size_t k = 0; k < 2; ++k) {
    out[k] = std::clamp(ff[k] + gains[k] * obs_scaled[4 + pairing[k]], -1.0, 1.0);
  }
  return out;
}

ControlInput TeacherPolicy::act(const PlantState&, const Observation& obs) const {
  return env_->unscale_action(teacher_.act_scaled(*env_, obs.scaled));
}

Vec2 tracking_error(const TankEnv& env, const Policy& policy, std::size_t window) {
  const std::size_t n = env.params().n_steps;
  const Trajectory traj = env.rollout(policy, env.initial_state(), n);
  window = std::min(window, n);
  Vec2 acc{0.0, 0.0};
  for (std::size_t i = n - window; i < n; ++i) {
    acc[0] += std::abs(traj.observations[i].scaled[4]);
    acc[1] += std::abs(traj.observations[i].scaled[5]);
  }
  return {acc[0] / static_cast<double>(window), acc[1] / static_cast<double>(window)};
}

CloneDataset collect_teacher_data(const ScriptedTeacher& teacher, const EnvParams& params, const CloneOptions& opt) {
  CloneDataset data;
  Rng noise(splitmix64(opt.seed) ^ 0xc1097eULL);
  for (std::size_t e = 0; e < opt.episodes; ++e) {
    const TankEnv env(params, opt.seed * 1000 + e);
    PlantState state = env.initial_state();
    Observation obs = env.observe(state);
    for (std::size_t t = 0; t < params.n_steps; ++t) {
      const Vec2 target = teacher.act_scaled(env, obs.scaled);
      data.inputs.push_back(obs.scaled);
      data.targets.push_back(target);
      Vec2 explore = target;
      for (double& v : explore) v = std::clamp(v + opt.exploration_noise * noise.normal(), -1.0, 1.0);
      const StepResult r = env.step(state, env.unscale_action(explore));
      state = r.next_state;
      obs = r.next_obs;
    }
  }
  return data;
}

CloneReport behavior_clone(const ScriptedTeacher& teacher, const EnvParams& params, const CloneOptions& opt) {
  if (opt.epochs < 1) throw ConfigError("behavior cloning needs at least one epoch");
  if (!(opt.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  const CloneDataset data = collect_teacher_data(teacher, params, opt);

  std::vector<std::size_t> dims{kObsDim};
  dims.insert(dims.end(), opt.hidden.begin(), opt.hidden.end());
  dims.push_back(kActionDim);
  NetworkWeights net = random_network(dims, Activation::Tanh, Activation::Tanh, opt.seed);

  // Full-batch; Adam unless plain descent is requested.
  const std::size_t n = net.parameter_count();
  std::vector<double> m(n, 0.0), v(n, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  CloneReport report;
  report.samples = data.inputs.size();
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const kernels::LossGradient lg = kernels::mse_gradient(net, data);
    if (!std::isfinite(lg.loss)) throw NonFiniteLoss("loss diverged at epoch " + std::to_string(epoch));
    if (epoch == 0) report.initial_loss = lg.loss;

    const double t = static_cast<double>(epoch + 1);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    std::size_t idx = 0;
    for (Layer& layer : net.layers) {
      for (auto* params_vec : {&layer.w, &layer.b}) {
        for (double& p : *params_vec) {
          const double g = lg.grad[idx];
          if (opt.optimizer == Optimizer::GradientDescent) {
            p -= opt.learning_rate * g;
            ++idx;
            continue;
          }
          m[idx] = beta1 * m[idx] + (1.0 - beta1) * g;
          v[idx] = beta2 * v[idx] + (1.0 - beta2) * g * g;
          p -= opt.learning_rate * (m[idx] / c1) / (std::sqrt(v[idx] / c2) + eps);
          ++idx;
        }
      }
    }
  }
  report.final_loss = kernels::mse_gradient(net, data).loss;
  if (!std::isfinite(report.final_loss)) throw NonFiniteLoss("final loss is not finite");
  report.weights = std::move(net);
  return report;
}

ScriptedTeacher default_teacher() {
  ScriptedTeacher t;
  t.gains = {8.0, 4.0};
  return t;
}

}  // namespace tankxrl
