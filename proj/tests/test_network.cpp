#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "tankxrl/error.hpp"
#include "tankxrl/kernels.hpp"
#include "tankxrl/network.hpp"
#include "tankxrl/util.hpp"
#include "support/workbench.hpp"

using namespace tankxrl;

namespace {

NetworkWeights identity_net() {
  NetworkWeights net;
  net.input_dim = 6;
  net.output_dim = 2;
  Layer l;
  l.in = 6;
  l.out = 2;
  l.w.assign(12, 0.0);
  l.w[0] = 1.0;
  l.w[7] = 1.0;
  l.b = {0.0, 0.0};
  l.act = Activation::Identity;
  net.layers.push_back(l);
  return net;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

CloneOptions tiny_options() {
  CloneOptions o;
  o.epochs = 30;
  o.episodes = 1;
  o.hidden = {8, 8};
  return o;
}

}  // namespace

TEST_CASE("identity and zero networks") {
  const NetworkWeights id = identity_net();
  const std::vector<double> x{0.3, -0.7, 0.1, 0.2, 0.5, -0.5};
  const auto y = predict(id, x);
  REQUIRE(y.size() == 2);
  CHECK(y[0] == 0.3);
  CHECK(y[1] == -0.7);

  NetworkWeights zero = random_network({6, 5, 2}, Activation::Tanh, Activation::Tanh, 1);
  for (auto& l : zero.layers) {
    std::fill(l.w.begin(), l.w.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
  CHECK(predict(zero, x) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("shape checks") {
  NetworkWeights net = random_network({6, 4, 2}, Activation::Tanh, Activation::Tanh, 2);
  CHECK_THROWS_AS(predict(net, std::vector<double>{1, 2, 3}), ShapeMismatch);
  net.layers[1].in = 5;
  CHECK_THROWS_AS(net.validate(), ShapeMismatch);
}

TEST_CASE("tanh outputs stay in the unit box") {
  const NetworkWeights net = random_network({6, 16, 16, 2}, Activation::Tanh, Activation::Tanh, 3);
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> x(6);
    for (double& v : x) v = rng.uniform(-50, 50);
    for (double y : predict(net, x)) {
      CHECK(y >= -1.0);
      CHECK(y <= 1.0);
    }
  }
}

TEST_CASE("jacobian matches central differences") {
  for (Activation hidden : {Activation::Tanh, Activation::Identity}) {
    const NetworkWeights net = random_network({6, 7, 5, 2}, hidden, Activation::Tanh, 5);
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(6);
      for (double& v : x) v = rng.uniform(-1, 1);
      const auto J = jacobian(net, x);
      const double h = 1e-6;
      for (std::size_t j = 0; j < 6; ++j) {
        auto xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const auto yp = predict(net, xp), ym = predict(net, xm);
        for (std::size_t k = 0; k < 2; ++k) {
          const double fd = (yp[k] - ym[k]) / (2 * h);
          CHECK(std::abs(fd - J[k * 6 + j]) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }
}

TEST_CASE("weight file round trip is bit exact") {
  const std::string path = "net_roundtrip_test.json";
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const NetworkWeights net = random_network({6, 9, 3, 2}, Activation::Relu, Activation::Tanh, seed);
    save_weights(net, path);
    const NetworkWeights back = load_weights(path);
    REQUIRE(back.layers.size() == net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      CHECK(back.layers[l].w == net.layers[l].w);
      CHECK(back.layers[l].b == net.layers[l].b);
      CHECK(back.layers[l].act == net.layers[l].act);
    }
    CHECK(weights_hash(back) == weights_hash(net));
    const std::string first = slurp(path);
    save_weights(back, path);
    CHECK(slurp(path) == first);
  }
  std::remove(path.c_str());
}

TEST_CASE("weight file errors") {
  const std::string path = "net_bad_test.json";
  const NetworkWeights net = random_network({6, 3, 2}, Activation::Tanh, Activation::Tanh, 7);
  save_weights(net, path);
  const std::string full = slurp(path);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << full.substr(0, full.size() / 2);
  }
  CHECK_THROWS_AS(load_weights(path), WeightFileError);

  nlohmann::json j = weights_to_json(random_network({5, 3, 2}, Activation::Tanh, Activation::Tanh, 8));
  {
    std::ofstream f(path, std::ios::trunc);
    f << j.dump();
  }
  CHECK_THROWS_AS(load_weights(path), ShapeMismatch);

  nlohmann::json bad = weights_to_json(net);
  bad["layers"][1]["act"] = "sigmoid";
  try {
    weights_from_json(bad, "x.json");
    FAIL("expected WeightFileError");
  } catch (const WeightFileError& e) {
    CHECK(std::string(e.what()).find("layers[1]") != std::string::npos);
  }
  bad = weights_to_json(net);
  bad["layers"][0]["w"][2] = nlohmann::json::array({1.0});
  CHECK_THROWS(weights_from_json(bad));
  CHECK_THROWS_AS(load_weights("no/such/file.json"), WeightFileError);
  std::remove(path.c_str());
}

TEST_CASE("policy wrapper requires a tanh-headed 6 -> 2 network") {
  TankEnv env;
  CHECK_NOTHROW(NetworkPolicy(random_network({6, 4, 2}, Activation::Tanh, Activation::Tanh, 1), env));
  CHECK_THROWS_AS(NetworkPolicy(identity_net(), env), ShapeMismatch);
  const NetworkPolicy pol(random_network({6, 4, 2}, Activation::Tanh, Activation::Tanh, 1), env);
  const PlantState s = env.initial_state();
  const ControlInput u = pol.act(s, env.observe(s));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(u[i] >= 0.1);
    CHECK(u[i] <= 10.0);
  }
}

TEST_CASE("gradient kernel matches finite differences and its serial twin") {
  NetworkWeights net = random_network({6, 5, 4, 2}, Activation::Tanh, Activation::Tanh, 9);
  CloneDataset data;
  Rng rng(10);
  for (int i = 0; i < 150; ++i) {
    Vec6 x{};
    for (double& v : x) v = rng.uniform(-1, 1);
    data.inputs.push_back(x);
    data.targets.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  const auto par = kernels::mse_gradient(net, data);
  const auto ser = kernels::mse_gradient_serial(net, data);
  REQUIRE(par.grad.size() == net.parameter_count());
  CHECK(std::abs(par.loss - ser.loss) < 1e-12);
  for (std::size_t p = 0; p < par.grad.size(); ++p) CHECK(std::abs(par.grad[p] - ser.grad[p]) < 1e-12);

  // Repeated parallel evaluation is bitwise stable.
  const auto again = kernels::mse_gradient(net, data);
  CHECK(again.grad == par.grad);
  CHECK(again.loss == par.loss);

  std::size_t idx = 0;
  const double h = 1e-6;
  for (auto& layer : net.layers) {
    for (auto* vec : {&layer.w, &layer.b}) {
      for (double& p : *vec) {
        const double keep = p;
        p = keep + h;
        const double lp = kernels::mse_gradient_serial(net, data).loss;
        p = keep - h;
        const double lm = kernels::mse_gradient_serial(net, data).loss;
        p = keep;
        CHECK(std::abs((lp - lm) / (2 * h) - par.grad[idx]) < 1e-7);
        ++idx;
      }
    }
  }
}

TEST_CASE("teacher feedforward holds the setpoint") {
  const EnvParams p;
  const Vec2 sp{0.3, 0.25};
  const ControlInput u = steady_state_inputs(p, sp);
  TankEnv env(p);
  const Trajectory t = env.rollout(ConstantPolicy(u), env.initial_state(), 400);
  CHECK(t.states.back().h[0] == doctest::Approx(sp[0]).epsilon(1e-3));
  CHECK(t.states.back().h[1] == doctest::Approx(sp[1]).epsilon(1e-3));
}

TEST_CASE("teacher tracks the setpoint schedule") {
  TankEnv env;
  const TeacherPolicy teacher(default_teacher(), env);
  const Vec2 err = tracking_error(env, teacher, 100);
  CHECK(err[0] < 0.05);
  CHECK(err[1] < 0.05);
}

TEST_CASE("cloning decreases loss and is deterministic") {
  const EnvParams p;
  const CloneOptions o = tiny_options();
  const CloneReport a = behavior_clone(default_teacher(), p, o);
  CHECK(a.final_loss < a.initial_loss);
  CHECK(a.samples == p.n_steps);
  const CloneReport b = behavior_clone(default_teacher(), p, o);
  CHECK(weights_hash(a.weights) == weights_hash(b.weights));

  CloneOptions other = o;
  other.seed = 1;
  CHECK(weights_hash(behavior_clone(default_teacher(), p, other).weights) != weights_hash(a.weights));

  CloneOptions gd = o;
  gd.optimizer = Optimizer::GradientDescent;
  const CloneReport g = behavior_clone(default_teacher(), p, gd);
  CHECK(g.final_loss < g.initial_loss);

  CloneOptions none = o;
  none.epochs = 0;
  CHECK_THROWS_AS(behavior_clone(default_teacher(), p, none), ConfigError);

  CloneOptions blow = o;
  blow.optimizer = Optimizer::GradientDescent;
  blow.learning_rate = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(behavior_clone(default_teacher(), p, blow), NonFiniteLoss);
  blow.learning_rate = 0.0;
  CHECK_THROWS_AS(behavior_clone(default_teacher(), p, blow), ConfigError);
}

TEST_CASE("bundled cloned policy tracks the setpoints over the final 100 steps") {
  TankEnv env;
  const NetworkPolicy pol(load_weights(tankxrl::testing::source_path("data/policy.json")), env);
  const Vec2 err = tracking_error(env, pol, 100);
  MESSAGE("scaled tracking error " << err[0] << ", " << err[1]);
  CHECK(0.5 * (err[0] + err[1]) < 0.05);
  CHECK(err[0] < 0.05);
  CHECK(err[1] < 0.05);
}
