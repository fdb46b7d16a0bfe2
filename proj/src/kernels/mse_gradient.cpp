#include <algorithm>
#include <cmath>

#include "tankxrl/error.hpp"
#include "tankxrl/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tankxrl::kernels {

namespace {

constexpr std::size_t kBlocks = 64;

struct Offsets {
  std::vector<std::size_t> w;
  std::vector<std::size_t> b;
  std::size_t total = 0;
};

Offsets parameter_offsets(const NetworkWeights& net) {
  Offsets o;
  for (const Layer& l : net.layers) {
    o.w.push_back(o.total);
    o.total += l.w.size();
    o.b.push_back(o.total);
    o.total += l.b.size();
  }
  return o;
}

/// Accumulates the gradient of sum over outputs of (y - t)^2 * scale for one
/// sample into `grad`; returns the unscaled squared error.
double accumulate_sample(const NetworkWeights& net, const Offsets& off, const Vec6& x, const Vec2& target,
                         double scale, std::vector<double>& grad, std::vector<std::vector<double>>& delta) {
  const ForwardTrace tr = forward_trace(net, x);
  const std::size_t L = net.layers.size();
  const std::vector<double>& y = tr.post.back();

  double sq = 0.0;
  delta[L - 1].assign(y.size(), 0.0);
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double e = y[k] - target[k];
    sq += e * e;
    delta[L - 1][k] = 2.0 * e * scale * activate_derivative(net.layers[L - 1].act, tr.pre[L - 1][k]);
  }
  for (std::size_t l = L; l-- > 0;) {
    const Layer& layer = net.layers[l];
    const double* a_in = l == 0 ? x.data() : tr.post[l - 1].data();
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double d = delta[l][r];
      double* gw = &grad[off.w[l] + r * layer.in];
      for (std::size_t c = 0; c < layer.in; ++c) gw[c] += d * a_in[c];
      grad[off.b[l] + r] += d;
    }
    if (l == 0) break;
    const Layer& below = net.layers[l - 1];
    delta[l - 1].assign(layer.in, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double d = delta[l][r];
      const double* row = &layer.w[r * layer.in];
      for (std::size_t c = 0; c < layer.in; ++c) delta[l - 1][c] += d * row[c];
    }
    for (std::size_t c = 0; c < layer.in; ++c) {
      delta[l - 1][c] *= activate_derivative(below.act, tr.pre[l - 1][c]);
    }
  }
  return sq;
}

void check_dataset(const NetworkWeights& net, const CloneDataset& data) {
  net.validate();
  if (net.input_dim != kObsDim || net.output_dim != kActionDim) {
    throw ShapeMismatch("cloning network must be 6 -> 2");
  }
  if (data.inputs.size() != data.targets.size() || data.inputs.empty()) {
    throw ShapeMismatch("dataset inputs and targets must be non-empty and aligned");
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

LossGradient mse_gradient(const NetworkWeights& net, const CloneDataset& data) {
  check_dataset(net, data);
  const Offsets off = parameter_offsets(net);
  const std::size_t n = data.inputs.size();
  const double scale = 1.0 / static_cast<double>(n * kActionDim);

  std::vector<std::vector<double>> block_grad(kBlocks);
  std::vector<double> block_loss(kBlocks, 0.0);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::size_t lo = b * n / kBlocks;
    const std::size_t hi = (b + 1) * n / kBlocks;
    std::vector<double> grad(off.total, 0.0);
    std::vector<std::vector<double>> delta(net.layers.size());
    double loss = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      loss += accumulate_sample(net, off, data.inputs[i], data.targets[i], scale, grad, delta);
    }
    block_grad[b] = std::move(grad);
    block_loss[b] = loss;
  }

  LossGradient out;
  out.grad.assign(off.total, 0.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    loss += block_loss[b];
    for (std::size_t p = 0; p < off.total; ++p) out.grad[p] += block_grad[b][p];
  }
  out.loss = loss * scale;
  return out;
}

LossGradient mse_gradient_serial(const NetworkWeights& net, const CloneDataset& data) {
  check_dataset(net, data);
  const Offsets off = parameter_offsets(net);
  const std::size_t n = data.inputs.size();
  const double scale = 1.0 / static_cast<double>(n * kActionDim);

  LossGradient out;
  out.grad.assign(off.total, 0.0);
  std::vector<std::vector<double>> delta(net.layers.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss += accumulate_sample(net, off, data.inputs[i], data.targets[i], scale, out.grad, delta);
  }
  out.loss = loss * scale;
  return out;
}

}  // namespace tankxrl::kernels
