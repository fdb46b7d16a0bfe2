#include "tankxrl/xrl.hpp"

#include <cmath>

#include "tankxrl/error.hpp"
#include "tankxrl/util.hpp"

namespace tankxrl {

std::string tool_name(Task task) {
  switch (task) {
    case Task::FeatureImportance: return "explain_feature_importance";
    case Task::ExpectedOutcome: return "explain_expected_outcome";
    case Task::CfAction: return "cf_action";
    case Task::CfBehavior: return "cf_behavior";
    case Task::CfPolicy: return "cf_policy";
  }
  return "explain_feature_importance";
}

std::optional<Task> task_from_tool(const std::string& name) {
  for (std::size_t i = 0; i < kTaskCount; ++i) {
    const Task t = static_cast<Task>(i);
    if (tool_name(t) == name) return t;
  }
  return std::nullopt;
}

std::string task_label(Task task) {
  switch (task) {
    case Task::FeatureImportance: return "FI";
    case Task::ExpectedOutcome: return "EO";
    case Task::CfAction: return "CF-A";
    case Task::CfBehavior: return "CF-B";
    case Task::CfPolicy: return "CF-P";
  }
  return "FI";
}

Workbench::Workbench(const EnvParams& params, NetworkWeights weights, std::uint64_t seed,
                     std::size_t background_size)
    : env_(params, seed), policy_(std::move(weights), env_) {
  reference_ = env_.rollout(policy_, env_.initial_state(), params.n_steps);
  background_ = background_from_trajectory(reference_, background_size);
  env_hash_ = tankxrl::env_hash(params);
  weights_hash_ = tankxrl::weights_hash(policy_.weights());
}

std::shared_ptr<const Workbench> Workbench::create(const EnvParams& params, NetworkWeights weights,
                                                   std::uint64_t seed, std::size_t background_size) {
  params.validate();
  return std::make_shared<const Workbench>(params, std::move(weights), seed, background_size);
}

nlohmann::json Workbench::policy_info() const {
  const NetworkWeights& w = weights();
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : w.layers) layers.push_back({{"in", l.in}, {"out", l.out}, {"activation", to_string(l.act)}});
  return {{"input_dim", w.input_dim},
          {"output_dim", w.output_dim},
          {"layers", layers},
          {"parameters", w.parameter_count()},
          {"weights_hash", weights_hash_},
          {"env_hash", env_hash_},
          {"features", kFeatureNames},
          {"actions", kActionNames},
          {"reference_return", compensated_sum(reference_.rewards)}};
}

nlohmann::json XrlRequest::arguments() const {
  switch (task) {
    case Task::FeatureImportance: return {{"time", time}};
    case Task::ExpectedOutcome: {
      nlohmann::json j{{"time", time}, {"horizon", horizon}};
      if (action) j["action"] = *action;
      return j;
    }
    case Task::CfAction:
    case Task::CfBehavior: return cf_spec_to_json(cf);
    case Task::CfPolicy: {
      nlohmann::json j = cf_spec_to_json(cf);
      j["description"] = description;
      return j;
    }
  }
  return nlohmann::json::object();
}

std::size_t time_to_step_index(double time, const EnvParams& params, bool allow_end) {
  const double k = time / params.dt;
  const double r = std::round(k);
  if (!std::isfinite(time) || time < 0.0 || std::abs(k - r) > 1e-9) {
    throw IntervalOutOfRange("time " + std::to_string(time) + " s is not a non-negative multiple of " +
                             std::to_string(params.dt) + " s");
  }
  const auto step = static_cast<std::size_t>(r);
  if (step > params.n_steps || (!allow_end && step == params.n_steps)) {
    throw IntervalOutOfRange("time " + std::to_string(time) + " s is past the episode end");
  }
  return step;
}

XrlResult run_feature_importance(const Workbench& wb, double time) {
  const std::size_t step = time_to_step_index(time, wb.params());
  const auto& x = wb.reference().observations[step].scaled;
  XrlResult res;
  res.task = Task::FeatureImportance;
  res.arguments = {{"time", time}};
  res.fi = deepshap(wb.weights(), x, wb.background(), time);
  res.figures.push_back(fi_figure_data(*res.fi, wb.params()));

  nlohmann::json actions = nlohmann::json::array();
  for (std::size_t k = 0; k < res.fi->output_dim; ++k) {
    std::vector<double> row(res.fi->phi.begin() + static_cast<std::ptrdiff_t>(k * res.fi->input_dim),
                            res.fi->phi.begin() + static_cast<std::ptrdiff_t>((k + 1) * res.fi->input_dim));
    const int dom = dominant_feature(*res.fi, k);
    nlohmann::json a{{"name", kActionNames[k]}, {"phi", row}, {"base", res.fi->base_values[k]},
                     {"output", res.fi->output[k]}};
    if (dom >= 0) {
      a["dominant"] = kFeatureNames[static_cast<std::size_t>(dom)];
      a["dominant_value"] = row[static_cast<std::size_t>(dom)];
    } else {
      a["dominant"] = nullptr;
      a["dominant_value"] = 0.0;
    }
    actions.push_back(a);
  }
  res.summary = {{"task", "FI"}, {"time", time}, {"observation", wb.reference().observations[step].values},
                 {"actions", actions}};
  return res;
}

XrlResult run_expected_outcome(const Workbench& wb, double time, std::optional<ControlInput> action,
                               std::size_t horizon, const RewardComponentSpec& spec) {
  if (horizon == 0) throw IntervalOutOfRange("expected-outcome horizon must be >= 1");
  const std::size_t step = time_to_step_index(time, wb.params());
  const PlantState& from = wb.reference().states[step];
  const ControlInput a = action ? *action : wb.reference().actions[step];
  XrlResult res;
  res.task = Task::ExpectedOutcome;
  res.arguments = {{"time", time}, {"horizon", horizon}, {"action", a}};
  res.eo = decompose_q(wb.env(), wb.policy(), from, a, spec, horizon, wb.params().gamma);
  res.figures.push_back(eo_figure_data(*res.eo));

  nlohmann::json totals = nlohmann::json::object();
  std::size_t worst = 0;
  for (std::size_t k = 0; k < res.eo->totals.size(); ++k) {
    totals[res.eo->names[k]] = res.eo->totals[k];
    if (res.eo->totals[k] < res.eo->totals[worst]) worst = k;
  }
  res.summary = {{"task", "EO"},
                 {"time", time},
                 {"action", res.eo->origin_action},
                 {"horizon", horizon},
                 {"gamma", res.eo->gamma},
                 {"names", res.eo->names},
                 {"totals", res.eo->totals},
                 {"totals_by_name", totals},
                 {"total", res.eo->total()},
                 {"dominant_component", res.eo->names[worst]},
                 {"decomposition", spec.source == RewardComponentSpec::Source::Builtin ? "builtin" : "generated"}};
  return res;
}

XrlResult run_counterfactual(const Workbench& wb, const CfSpec& spec) {
  XrlResult res;
  switch (spec.kind) {
    case CfKind::Action: res.task = Task::CfAction; break;
    case CfKind::Behavior: res.task = Task::CfBehavior; break;
    case CfKind::Policy: res.task = Task::CfPolicy; break;
  }
  res.arguments = cf_spec_to_json(spec);
  res.cf = cf_rollout(wb.env(), spec, wb.reference(), wb.policy());
  res.figures.push_back(cf_figure_data(*res.cf));

  const CfResult& r = *res.cf;
  std::vector<double> max_dev(4, 0.0);
  for (std::size_t i = 0; i < r.actual.states.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      max_dev[j] = std::max(max_dev[j], std::abs(r.counterfactual.states[i].h[j] - r.actual.states[i].h[j]));
    }
  }
  std::vector<double> actual_w(r.actual.rewards.begin() + static_cast<std::ptrdiff_t>(r.interval.begin),
                               r.actual.rewards.end());
  std::vector<double> cf_w(r.counterfactual.rewards.begin() + static_cast<std::ptrdiff_t>(r.interval.begin),
                           r.counterfactual.rewards.end());
  res.summary = {{"task", task_label(res.task)},
                 {"cf", res.arguments},
                 {"interval", {spec.t_start, spec.t_end}},
                 {"window_end", r.actual.time_at(r.horizon_end)},
                 {"actual_return", compensated_sum(actual_w)},
                 {"counterfactual_return", compensated_sum(cf_w)},
                 {"cumulative_delta", r.cumulative_delta},
                 {"max_level_deviation", max_dev},
                 {"clipped", r.clipped},
                 {"warnings", r.warnings}};
  return res;
}

XrlResult dispatch(const Workbench& wb, const XrlRequest& request, const RewardComponentSpec& decomposition) {
  switch (request.task) {
    case Task::FeatureImportance: return run_feature_importance(wb, request.time);
    case Task::ExpectedOutcome:
      return run_expected_outcome(wb, request.time, request.action, request.horizon, decomposition);
    case Task::CfAction:
    case Task::CfBehavior:
    case Task::CfPolicy: {
      XrlResult res = run_counterfactual(wb, request.cf);
      if (request.task == Task::CfPolicy) {
        res.arguments["description"] = request.description;
        res.summary["description"] = request.description;
      }
      return res;
    }
  }
  throw ConfigError("unknown task");
}

}  // namespace tankxrl
