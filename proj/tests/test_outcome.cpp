#include <doctest.h>

#include <cmath>

#include "tankxrl/error.hpp"
#include "tankxrl/network.hpp"
#include "tankxrl/outcome.hpp"

using namespace tankxrl;

namespace {

// Naive sum_t gamma^t r_t over a rollout that forces `action` at its first step.
double oracle_return(const TankEnv& env, const Policy& policy, const PlantState& from, const ControlInput& action,
                     std::size_t horizon, double gamma) {
  const Trajectory t = env.rollout(policy, from, horizon, {{0, 1, {action[0], action[1]}}});
  double sum = 0.0;
  for (std::size_t i = 0; i < t.rewards.size(); ++i) sum += std::pow(gamma, static_cast<double>(i)) * t.rewards[i];
  return sum;
}

PlantState mid_state(const TankEnv& env, const Policy& policy) {
  const Trajectory t = env.rollout(policy, env.initial_state(), 200);
  return t.states.back();
}

}  // namespace

TEST_CASE("builtin decomposition reproduces the plant reward") {
  TankEnv env;
  const RewardComponentSpec spec = builtin_decomposition();
  CHECK(spec.size() == 3);
  CHECK(spec.names[2] == "control effort");
  CHECK(spec.source == RewardComponentSpec::Source::Builtin);
  const FidelityReport rep = check_fidelity(env, spec);
  CHECK(rep.probes == 1000);
  CHECK(rep.passed);
  CHECK(rep.max_deviation <= 1e-12);

  // Componentwise, not only in sum.
  PlantState s = env.initial_state();
  s.prev_action = ControlInput{2.0, 7.0};
  const ControlInput u{6.0, 3.0};
  const auto terms = env.reward_terms(s, u);
  const auto comps = component_rewards(env, spec, s, u);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(comps[k] - terms[k]) <= 1e-12);
}

TEST_CASE("alternative splits that sum to the reward pass the gate") {
  TankEnv env;
  const RewardComponentSpec four = make_decomposition(
      "reward four { -50 * (h1 - sp_h1) * (h1 - sp_h1), -50 * (h1 - sp_h1) * (h1 - sp_h1),"
      " -100 * (h2 - sp_h2) * (h2 - sp_h2),"
      " -((v1 - prev_v1) * (v1 - prev_v1) + (v2 - prev_v2) * (v2 - prev_v2)) }",
      {"h1 a", "h1 b", "h2", "effort"});
  CHECK(four.source == RewardComponentSpec::Source::Generated);
  CHECK_NOTHROW(fidelity_gate(env, four));

  const RewardComponentSpec two = make_decomposition(
      "reward two { -100 * ((h1 - sp_h1) * (h1 - sp_h1) + (h2 - sp_h2) * (h2 - sp_h2)),"
      " -((v1 - prev_v1) * (v1 - prev_v1) + (v2 - prev_v2) * (v2 - prev_v2)) }",
      {"tracking", "effort"});
  CHECK(check_fidelity(env, two).passed);
}

TEST_CASE("unfaithful decompositions are rejected") {
  TankEnv env;
  const RewardComponentSpec missing_effort = make_decomposition(
      "reward bad { -100 * (h1 - sp_h1) * (h1 - sp_h1), -100 * (h2 - sp_h2) * (h2 - sp_h2) }", {"h1", "h2"});
  const FidelityReport rep = check_fidelity(env, missing_effort);
  CHECK_FALSE(rep.passed);
  CHECK(rep.max_deviation > 1e-3);
  CHECK_THROWS_AS(fidelity_gate(env, missing_effort), DecompositionInfidelity);

  const RewardComponentSpec wrong_scale = make_decomposition(
      "reward bad { -10 * (h1 - sp_h1) * (h1 - sp_h1), -100 * (h2 - sp_h2) * (h2 - sp_h2),"
      " -((v1 - prev_v1) * (v1 - prev_v1) + (v2 - prev_v2) * (v2 - prev_v2)) }",
      {"h1", "h2", "effort"});
  CHECK_THROWS_AS(fidelity_gate(env, wrong_scale), DecompositionInfidelity);

  const TeacherPolicy teacher(default_teacher(), env);
  CHECK_THROWS_AS(decompose_q(env, teacher, env.initial_state(), {5, 5}, wrong_scale, 10, 0.9),
                  DecompositionInfidelity);
}

TEST_CASE("decomposition shape errors") {
  CHECK_THROWS_AS(make_decomposition("reward one { h1 - sp_h1 }", {"only"}), ShapeMismatch);
  CHECK_THROWS_AS(make_decomposition("reward two { h1, h2 }", {"a"}), ShapeMismatch);
  CHECK_THROWS_AS(make_decomposition("reward two { h1, h9 }", {"a", "b"}), dsl::DslError);
}

TEST_CASE("component sums equal the discounted return") {
  TankEnv env;
  const TeacherPolicy teacher(default_teacher(), env);
  const RewardComponentSpec spec = builtin_decomposition();
  const std::vector<PlantState> origins{env.initial_state(), mid_state(env, teacher)};
  const std::vector<ControlInput> actions{{5.0, 5.0}, {0.1, 10.0}, {9.0, 1.5}};
  for (double gamma : {0.0, 0.5, 0.9}) {
    for (std::size_t horizon : {1u, 10u, 50u}) {
      for (const PlantState& from : origins) {
        for (const ControlInput& a : actions) {
          CAPTURE(gamma);
          CAPTURE(horizon);
          CAPTURE(from.step_index);
          const QDecomposition q = decompose_q(env, teacher, from, a, spec, horizon, gamma);
          REQUIRE(q.per_step.size() == horizon);
          double sum = 0.0;
          for (const auto& row : q.per_step) {
            for (double v : row) sum += v;
          }
          const double oracle = oracle_return(env, teacher, from, a, horizon, gamma);
          CHECK(std::abs(sum - oracle) <= 1e-9);
          CHECK(std::abs(q.total() - oracle) <= 1e-9);
          CHECK(std::abs(q.total() - discounted_return(q.trajectory.rewards, gamma)) <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("decomposition with gamma 0 is the immediate reward split") {
  TankEnv env;
  const TeacherPolicy teacher(default_teacher(), env);
  const PlantState from = mid_state(env, teacher);
  const ControlInput a{3.0, 8.0};
  const QDecomposition q = decompose_q(env, teacher, from, a, builtin_decomposition(), 20, 0.0);
  const auto terms = env.reward_terms(from, a);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(q.totals[k] - terms[k]) <= 1e-12);
  for (std::size_t t = 1; t < q.per_step.size(); ++t) {
    for (double v : q.per_step[t]) CHECK(v == 0.0);
  }
}

TEST_CASE("origin bookkeeping and defaults") {
  TankEnv env;
  const TeacherPolicy teacher(default_teacher(), env);
  const PlantState from = mid_state(env, teacher);
  const QDecomposition q = decompose_q(env, teacher, from, {20.0, -1.0}, builtin_decomposition(), 5, 0.9);
  CHECK(q.origin_step == 200);
  CHECK(q.origin_time == 4000.0);
  CHECK(q.origin_action == ControlInput{10.0, 0.1});
  CHECK(q.trajectory.actions[0] == ControlInput{10.0, 0.1});

  const QDecomposition own = decompose_q(env, teacher, from, builtin_decomposition(), 5);
  CHECK(own.gamma == 0.9);
  CHECK(own.origin_action == env.clip_action(teacher.act(from, env.observe(from))));
  CHECK(own.trajectory.actions == env.rollout(teacher, from, 5).actions);

  CHECK_THROWS_AS(decompose_q(env, teacher, from, {1, 1}, builtin_decomposition(), 5, 1.0), ConfigError);
  CHECK_THROWS_AS(decompose_q(env, teacher, from, {1, 1}, builtin_decomposition(), 5, -0.1), ConfigError);
  CHECK_THROWS_AS(decompose_q(env, teacher, from, {1, 1}, builtin_decomposition(), 0, 0.9), IntervalOutOfRange);
}

TEST_CASE("stacked rewards figure payload") {
  TankEnv env;
  const TeacherPolicy teacher(default_teacher(), env);
  const QDecomposition q = decompose_q(env, teacher, mid_state(env, teacher), {4, 4}, builtin_decomposition(), 50, 0.9);
  const FigureData fig = eo_figure_data(q);
  CHECK(fig["kind"] == "stacked_rewards");
  CHECK(fig["names"].size() == 3);
  CHECK(fig["discounted"] == true);
  CHECK(fig["origin_time"].get<double>() == 4000.0);
  REQUIRE(fig["steps"].size() == 50);
  CHECK(fig["steps"][0]["t"].get<double>() == 4000.0);
  CHECK(fig["steps"][49]["t"].get<double>() == 4980.0);
  CHECK(fig["steps"][3]["values"].size() == 3);
  double sum = 0.0;
  for (const auto& s : fig["steps"]) {
    for (const auto& v : s["values"]) sum += v.get<double>();
  }
  CHECK(std::abs(sum - fig["total"].get<double>()) <= 1e-9);
  CHECK(fig["totals"].size() == 3);
}

TEST_CASE("components vanish at the setpoint with a held action") {
  TankEnv env;
  PlantState s = env.initial_state();
  s.h[0] = s.setpoints[0];
  s.h[1] = s.setpoints[1];
  s.prev_action = ControlInput{4.0, 6.0};
  for (double c : component_rewards(env, builtin_decomposition(), s, {4.0, 6.0})) CHECK(c == 0.0);
}

TEST_CASE("totals are non-increasing in the horizon") {
  TankEnv env;
  const TeacherPolicy teacher(default_teacher(), env);
  const PlantState from = mid_state(env, teacher);
  std::vector<double> last(3, 0.0);
  for (std::size_t horizon = 1; horizon <= 60; ++horizon) {
    const QDecomposition q = decompose_q(env, teacher, from, {6, 2}, builtin_decomposition(), horizon, 0.9);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(q.totals[k] <= last[k] + 1e-15);
      last[k] = q.totals[k];
    }
  }
}
