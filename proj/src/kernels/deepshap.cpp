#include <cmath>

#include "tankxrl/error.hpp"
#include "tankxrl/kernels.hpp"

namespace tankxrl::kernels {

namespace {

constexpr double kRescaleEps = 1e-9;

}  // namespace

std::vector<double> deepshap_single(const NetworkWeights& net, std::span<const double> x,
                                    std::span<const double> ref) {
  if (ref.size() != net.input_dim) throw ShapeMismatch("reference has the wrong number of features");
  const ForwardTrace tx = forward_trace(net, x);
  const ForwardTrace tr = forward_trace(net, ref);

  // Multiplier of the current layer's units w.r.t. the input features.
  const std::size_t n = net.input_dim;
  std::vector<double> mult(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) mult[i * n + i] = 1.0;
  std::size_t rows = n;

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    std::vector<double> next(layer.out * n, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      // Linear block: multipliers are the weights. Nonlinear block: rescale.
      const double dz = tx.pre[l][r] - tr.pre[l][r];
      const double m = std::abs(dz) < kRescaleEps ? activate_derivative(layer.act, tx.pre[l][r])
                                                  : (tx.post[l][r] - tr.post[l][r]) / dz;
      for (std::size_t k = 0; k < rows; ++k) {
        const double w = layer.weight(r, k) * m;
        if (w == 0.0) continue;
        const double* src = &mult[k * n];
        double* dst = &next[r * n];
        for (std::size_t c = 0; c < n; ++c) dst[c] += w * src[c];
      }
    }
    mult = std::move(next);
    rows = layer.out;
  }

  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t j = 0; j < n; ++j) mult[k * n + j] *= (x[j] - ref[j]);
  }
  return mult;
}

std::vector<double> deepshap_mean(const NetworkWeights& net, std::span<const double> x,
                                  const std::vector<std::vector<double>>& refs) {
  if (refs.empty()) throw ShapeMismatch("background must contain at least one reference");
  std::vector<std::vector<double>> per_ref(refs.size());
  const auto count = static_cast<std::ptrdiff_t>(refs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    per_ref[static_cast<std::size_t>(r)] = deepshap_single(net, x, refs[static_cast<std::size_t>(r)]);
  }
  std::vector<double> sum(per_ref[0].size(), 0.0);
  for (const auto& phi : per_ref) {
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += phi[i];
  }
  for (double& v : sum) v /= static_cast<double>(refs.size());
  return sum;
}

std::vector<double> deepshap_mean_serial(const NetworkWeights& net, std::span<const double> x,
                                         const std::vector<std::vector<double>>& refs) {
  if (refs.empty()) throw ShapeMismatch("background must contain at least one reference");
  std::vector<double> sum;
  for (const auto& ref : refs) {
    const std::vector<double> phi = deepshap_single(net, x, ref);
    if (sum.empty()) sum.assign(phi.size(), 0.0);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += phi[i];
  }
  for (double& v : sum) v /= static_cast<double>(refs.size());
  return sum;
}

}  // namespace tankxrl::kernels
