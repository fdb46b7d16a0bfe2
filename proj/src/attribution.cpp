#include "tankxrl/attribution.hpp"

#include <cmath>

#include "tankxrl/error.hpp"
#include "tankxrl/kernels.hpp"

namespace tankxrl {

namespace {

AttributionResult finish(const NetworkWeights& net, std::span<const double> input, const Background& background,
                         double time, std::vector<double> phi) {
  AttributionResult res;
  res.output_dim = net.output_dim;
  res.input_dim = net.input_dim;
  res.phi = std::move(phi);
  res.input.assign(input.begin(), input.end());
  res.output = predict(net, input);
  res.time = time;
  res.base_values.assign(net.output_dim, 0.0);
  for (const auto& ref : background.references) {
    const std::vector<double> y = predict(net, ref);
    for (std::size_t k = 0; k < y.size(); ++k) res.base_values[k] += y[k];
  }
  for (double& b : res.base_values) b /= static_cast<double>(background.size());
  for (double v : res.phi) {
    if (!std::isfinite(v)) throw NonFiniteAttribution("attribution contains a non-finite value");
  }
  return res;
}

void check_inputs(const NetworkWeights& net, std::span<const double> input, const Background& background) {
  net.validate();
  if (background.references.empty()) throw ShapeMismatch("background must contain at least one reference");
  if (input.size() != net.input_dim) throw ShapeMismatch("input does not match the network input dimension");
  for (const auto& ref : background.references) {
    if (ref.size() != net.input_dim) throw ShapeMismatch("background reference has the wrong dimension");
    for (double v : ref) {
      if (!std::isfinite(v)) throw NonFiniteAttribution("background contains a non-finite value");
    }
  }
}

}  // namespace

Background background_from_trajectory(const Trajectory& traj, std::size_t size) {
  Background bg;
  const std::size_t n = traj.observations.size();
  if (n == 0 || size == 0) return bg;
  size = std::min(size, n);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t idx = i * n / size;
    const auto& s = traj.observations[idx].scaled;
    bg.references.emplace_back(s.begin(), s.end());
  }
  return bg;
}

AttributionResult deepshap(const NetworkWeights& net, std::span<const double> input, const Background& background,
                           double time) {
  check_inputs(net, input, background);
  return finish(net, input, background, time, kernels::deepshap_mean(net, input, background.references));
}

AttributionResult deepshap_serial(const NetworkWeights& net, std::span<const double> input,
                                  const Background& background, double time) {
  check_inputs(net, input, background);
  return finish(net, input, background, time, kernels::deepshap_mean_serial(net, input, background.references));
}

std::vector<double> exact_shapley_oracle(const VectorFunction& f, std::span<const double> input,
                                         std::span<const double> reference) {
  const std::size_t n = input.size();
  if (n > 12) throw ShapeMismatch("exact Shapley enumeration is limited to 12 features");
  if (reference.size() != n) throw ShapeMismatch("reference and input differ in size");

  const std::size_t subsets = std::size_t{1} << n;
  std::vector<std::vector<double>> value(subsets);
  std::vector<double> point(n);
  for (std::size_t s = 0; s < subsets; ++s) {
    for (std::size_t j = 0; j < n; ++j) point[j] = (s >> j & 1U) ? input[j] : reference[j];
    value[s] = f(point);
  }
  const std::size_t out = value[0].size();

  // weight(|S|) = |S|! (n - |S| - 1)! / n!
  std::vector<double> fact(n + 1, 1.0);
  for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> phi(out * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t s = 0; s < subsets; ++s) {
      if (s >> j & 1U) continue;
      const auto size = static_cast<std::size_t>(__builtin_popcountll(s));
      const double w = fact[size] * fact[n - size - 1] / fact[n];
      const auto& with = value[s | (std::size_t{1} << j)];
      const auto& without = value[s];
      for (std::size_t k = 0; k < out; ++k) phi[k * n + j] += w * (with[k] - without[k]);
    }
  }
  return phi;
}

int dominant_feature(const AttributionResult& result, std::size_t k) {
  int best = -1;
  double best_abs = 0.0;
  for (std::size_t j = 0; j < result.input_dim; ++j) {
    const double a = std::abs(result.at(k, j));
    if (a > best_abs) {
      best_abs = a;
      best = static_cast<int>(j);
    }
  }
  return best;
}

FigureData fi_figure_data(const AttributionResult& result, const EnvParams& params) {
  nlohmann::json actions = nlohmann::json::array();
  for (std::size_t k = 0; k < result.output_dim; ++k) {
    nlohmann::json bars = nlohmann::json::array();
    for (std::size_t j = 0; j < result.input_dim; ++j) {
      const std::string feature = j < kFeatureNames.size() ? kFeatureNames[j] : "x" + std::to_string(j);
      bars.push_back({{"feature", feature}, {"value", result.at(k, j)}});
    }
    const std::string name = k < kActionNames.size() ? kActionNames[k] : "y" + std::to_string(k);
    const double half_range =
        k < kActionDim ? 0.5 * (params.action_high[k] - params.action_low[k]) : 1.0;
    actions.push_back({{"name", name},
                       {"base", result.base_values[k]},
                       {"output", result.output[k]},
                       {"unscaled_per_unit", half_range},
                       {"bars", bars}});
  }
  return {{"kind", "shap_bars"}, {"units", "scaled action"}, {"actions", actions}, {"time", result.time}};
}

}  // namespace tankxrl
