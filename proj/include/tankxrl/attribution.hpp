#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tankxrl/env.hpp"
#include "tankxrl/network.hpp"

namespace tankxrl {

/// JSON payload a client renders into a chart; `kind` selects the chart.
using FigureData = nlohmann::json;

inline const std::array<std::string, 6> kFeatureNames{"h1", "h2", "h3", "h4", "error_h1", "error_h2"};
inline const std::array<std::string, 2> kActionNames{"v1", "v2"};

struct Background {
  std::vector<std::vector<double>> references;  // scaled observations

  std::size_t size() const { return references.size(); }
};

/// `size` observations uniformly subsampled (evenly spaced) from a rollout.
Background background_from_trajectory(const Trajectory& traj, std::size_t size = 64);

struct AttributionResult {
  std::size_t output_dim = 0;
  std::size_t input_dim = 0;
  std::vector<double> phi;  // row-major output x input, scaled-action units
  std::vector<double> base_values;
  std::vector<double> input;
  std::vector<double> output;
  double time = 0.0;

  double at(std::size_t k, std::size_t j) const { return phi[k * input_dim + j]; }
};

/// DeepSHAP with rescale-rule multipliers chained through every layer and
/// averaged over the background.
AttributionResult deepshap(const NetworkWeights& net, std::span<const double> input, const Background& background,
                           double time = 0.0);

/// Serial reference path of `deepshap`; identical results, kept for tests.
AttributionResult deepshap_serial(const NetworkWeights& net, std::span<const double> input,
                                  const Background& background, double time = 0.0);

using VectorFunction = std::function<std::vector<double>(std::span<const double>)>;

/// Exact Shapley values by enumerating all feature coalitions; absent features
/// take the reference value. Row-major output x input.
std::vector<double> exact_shapley_oracle(const VectorFunction& f, std::span<const double> input,
                                         std::span<const double> reference);

/// {kind:"shap_bars", actions:[{name, base, bars:[{feature, value}]}], time}.
/// Each action also carries `unscaled_per_unit` (volts per scaled unit).
FigureData fi_figure_data(const AttributionResult& result, const EnvParams& params);

/// Index of the largest |phi| feature for output k, or -1 if all are zero.
int dominant_feature(const AttributionResult& result, std::size_t k);

}  // namespace tankxrl
