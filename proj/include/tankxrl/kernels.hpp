#pragma once

// Data-parallel hot loops. Each kernel has an OpenMP version used by the
// library and a plain serial version kept as the test/benchmark reference.

#include <cstddef>
#include <span>
#include <vector>

#include "tankxrl/network.hpp"

namespace tankxrl::kernels {

/// Gradient of the mean-squared-error loss w.r.t. every network parameter,
/// flattened layer by layer as [w..., b...].
struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Work is split into a fixed number of sample blocks whose partial sums are
/// reduced in block order, so the result does not depend on the thread count.
LossGradient mse_gradient(const NetworkWeights& net, const CloneDataset& data);
LossGradient mse_gradient_serial(const NetworkWeights& net, const CloneDataset& data);

/// Per-reference DeepSHAP attribution, row-major output x input.
std::vector<double> deepshap_single(const NetworkWeights& net, std::span<const double> x,
                                    std::span<const double> ref);

/// Mean attribution over references; the parallel form evaluates references
/// concurrently and reduces them in reference order.
std::vector<double> deepshap_mean(const NetworkWeights& net, std::span<const double> x,
                                  const std::vector<std::vector<double>>& refs);
std::vector<double> deepshap_mean_serial(const NetworkWeights& net, std::span<const double> x,
                                         const std::vector<std::vector<double>>& refs);

int max_threads();

}  // namespace tankxrl::kernels
