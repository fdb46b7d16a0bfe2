// Serial vs OpenMP timings for the two hot kernels.
//
//   tankxrl_bench [--reps N] [--json PATH]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tankxrl/kernels.hpp"
#include "tankxrl/xrl.hpp"

using namespace tankxrl;
using nlohmann::json;

namespace {

template <typename F>
double best_ms(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? d : INFINITY;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark"};
  int reps = 5;
  std::string json_path;
  std::string weights = TANKXRL_DEFAULT_WEIGHTS;
  app.add_option("--reps", reps, "repetitions, best time kept")->check(CLI::PositiveNumber);
  app.add_option("--json", json_path, "write results here");
  app.add_option("--weights", weights, "policy weights")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  const auto wb = Workbench::create(EnvParams{}, load_weights(weights));
  const NetworkWeights& net = wb->weights();
  json rows = json::array();

  {
    const CloneDataset data = collect_teacher_data(default_teacher(), EnvParams{}, CloneOptions{});
    kernels::LossGradient par, ser;
    const double t_ser = best_ms(reps, [&] { ser = kernels::mse_gradient_serial(net, data); });
    const double t_par = best_ms(reps, [&] { par = kernels::mse_gradient(net, data); });
    rows.push_back({{"kernel", "mse_gradient"},
                    {"size", data.inputs.size()},
                    {"serial_ms", t_ser},
                    {"parallel_ms", t_par},
                    {"speedup", t_ser / t_par},
                    {"max_abs_diff", max_abs_diff(par.grad, ser.grad)}});
  }
  {
    const auto& x = wb->reference().observations[201].scaled;
    const auto& refs = wb->background().references;
    std::vector<double> par, ser;
    const double t_ser = best_ms(reps, [&] { ser = kernels::deepshap_mean_serial(net, x, refs); });
    const double t_par = best_ms(reps, [&] { par = kernels::deepshap_mean(net, x, refs); });
    rows.push_back({{"kernel", "deepshap_mean"},
                    {"size", refs.size()},
                    {"serial_ms", t_ser},
                    {"parallel_ms", t_par},
                    {"speedup", t_ser / t_par},
                    {"max_abs_diff", max_abs_diff(par, ser)}});
  }

  const json report{{"threads", kernels::max_threads()}, {"reps", reps}, {"kernels", rows}};
  std::printf("threads %d, best of %d\n", kernels::max_threads(), reps);
  std::printf("%-16s %8s %12s %12s %8s %12s\n", "kernel", "size", "serial ms", "openmp ms", "speedup", "max |diff|");
  for (const json& r : rows) {
    std::printf("%-16s %8zu %12.3f %12.3f %8.2f %12.3g\n", r["kernel"].get<std::string>().c_str(),
                r["size"].get<std::size_t>(), r["serial_ms"].get<double>(), r["parallel_ms"].get<double>(),
                r["speedup"].get<double>(), r["max_abs_diff"].get<double>());
  }
  if (!json_path.empty()) {
    std::ofstream(json_path) << report.dump(2) << "\n";
  }
  return 0;
}
