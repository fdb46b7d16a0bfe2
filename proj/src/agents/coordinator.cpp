#include "tankxrl/agents/agents.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tankxrl::agents {

namespace {

using nlohmann::json;

const PromptLibrary& library(const PromptLibrary* p) { return p != nullptr ? *p : PromptLibrary::default_library(); }

std::string num(double v, int decimals = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string signed_num(double v, int decimals = 3) { return (v >= 0.0 ? "+" : "") + num(v, decimals); }

std::optional<Task> task_from_label(const std::string& label) {
  for (std::size_t i = 0; i < kTaskCount; ++i) {
    if (task_label(static_cast<Task>(i)) == label) return static_cast<Task>(i);
  }
  return task_from_tool(label);
}

std::string fi_text(const XrlResult& r) {
  const json& s = r.summary;
  std::string out = "At t=" + num(s.at("time").get<double>(), 0) + " s, ";
  std::vector<std::string> parts;
  for (const auto& a : s.at("actions")) {
    const std::string name = a.at("name").get<std::string>();
    if (a.at("dominant").is_null()) {
      parts.push_back("there is no dominant feature for " + name + " (all attributions are zero)");
    } else {
      parts.push_back(a.at("dominant").get<std::string>() + " contributes most to " + name + " (" +
                      signed_num(a.at("dominant_value").get<double>()) + " in scaled action units, base " +
                      num(a.at("base").get<double>()) + ")");
    }
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += i + 1 == parts.size() ? " and " : ", ";
    out += parts[i];
  }
  return out + ".";
}

std::string eo_text(const XrlResult& r) {
  const json& s = r.summary;
  const auto names = s.at("names").get<std::vector<std::string>>();
  const auto totals = s.at("totals").get<std::vector<double>>();
  const auto action = s.at("action").get<std::vector<double>>();
  std::string out = "Taking v1=" + num(action[0], 2) + ", v2=" + num(action[1], 2) + " at t=" +
                    num(s.at("time").get<double>(), 0) + " s and following the agent for " +
                    std::to_string(s.at("horizon").get<std::size_t>()) + " steps gives a discounted return of " +
                    num(s.at("total").get<double>(), 4) + " (gamma " + num(s.at("gamma").get<double>(), 2) + "): ";
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (k > 0) out += ", ";
    out += names[k] + " " + num(totals[k], 4);
  }
  return out + ". The largest cost comes from " + s.at("dominant_component").get<std::string>() + ".";
}

std::string cf_text(const XrlResult& r) {
  const json& s = r.summary;
  const auto iv = s.at("interval").get<std::vector<double>>();
  const double actual = s.at("actual_return").get<double>();
  const double cf = s.at("counterfactual_return").get<double>();
  const auto dev = s.at("max_level_deviation").get<std::vector<double>>();
  std::size_t worst = 0;
  for (std::size_t i = 1; i < dev.size(); ++i) {
    if (dev[i] > dev[worst]) worst = i;
  }
  std::string what;
  switch (r.task) {
    case Task::CfAction: what = "fixed actions"; break;
    case Task::CfBehavior:
      what = s.at("cf").at("mode").get<std::string>() == "opposite" ? "opposite behavior" : "smoothed behavior";
      what += " (alpha " + num(s.at("cf").at("alpha").get<double>(), 2) + ")";
      break;
    default: what = "rule-based policy"; break;
  }
  std::string out = "With the " + what + " from " + num(iv[0], 0) + " to " + num(iv[1], 0) +
                    " s, the return up to t=" + num(s.at("window_end").get<double>(), 0) + " s is " + num(cf, 4) +
                    " against " + num(actual, 4) + " for the agent (change " + signed_num(cf - actual, 4) + "). ";
  out += cf < actual ? "The counterfactual tracks the setpoints worse. " : "The counterfactual tracks the setpoints at least as well. ";
  out += "The largest level deviation is in h" + std::to_string(worst + 1) + " (" + num(dev[worst], 4) + " m).";
  if (s.value("clipped", false)) out += " Some actions were clipped to the pump range.";
  return out;
}

}  // namespace

std::string coordinator_prompt(const EnvParams& params, const CoordinatorOptions& options) {
  const PromptLibrary& prompts = library(options.prompts);
  return prompts.render("coordinator",
                        {{"env_params", env_params_text(params)},
                         {"few_shot", options.few_shot ? prompts.get("coordinator_few_shot") : std::string()}});
}

Coordination coordinate(const std::string& query, const LlmEndpoint& endpoint, const EnvParams& params,
                        const CoordinatorOptions& options) {
  CompletionRequest req;
  req.agent = Role::Coordinator;
  req.system_prompt = coordinator_prompt(params, options);
  req.messages.push_back({"user", query});
  req.tools = coordinator_tools();
  req.seed = options.seed;
  req.purpose = "coordinate";
  const Completion c = endpoint.complete(req);
  if (!c.tool_call) throw OutOfScopeQuery("coordinator selected no tool: " + c.text.value_or(""));
  return {*c.tool_call, validate_tool_call(*c.tool_call, params)};
}

std::vector<LabeledQuery> corpus_from_json(const json& j) {
  std::vector<LabeledQuery> out;
  for (const auto& q : j.at("queries")) {
    LabeledQuery l;
    l.id = q.at("id").get<std::string>();
    l.text = q.at("text").get<std::string>();
    const auto task = task_from_label(q.at("task").get<std::string>());
    if (!task) throw ConfigError("corpus item " + l.id + ": unknown task " + q.at("task").dump());
    l.task = *task;
    l.expected.name = q.at("tool_call").at("name").get<std::string>();
    l.expected.arguments = q.at("tool_call").value("arguments", json::object());
    out.push_back(std::move(l));
  }
  if (out.empty()) throw ConfigError("query corpus is empty");
  return out;
}

std::vector<LabeledQuery> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open query corpus " + path);
  try {
    return corpus_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError("query corpus " + path + ": " + e.what());
  }
}

std::map<std::string, ToolCall> corpus_lookup(const std::vector<LabeledQuery>& corpus) {
  std::map<std::string, ToolCall> table;
  for (const auto& q : corpus) table[q.text] = q.expected;
  return table;
}

double ClassificationReport::accuracy() const {
  const std::size_t n = items * trials;
  return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

double ClassificationReport::mean_accuracy() const {
  if (trial_accuracy.empty()) return 0.0;
  double s = 0.0;
  for (double a : trial_accuracy) s += a;
  return s / static_cast<double>(trial_accuracy.size());
}

double ClassificationReport::stddev_accuracy() const {
  if (trial_accuracy.size() < 2) return 0.0;
  const double m = mean_accuracy();
  double s = 0.0;
  for (double a : trial_accuracy) s += (a - m) * (a - m);
  return std::sqrt(s / static_cast<double>(trial_accuracy.size() - 1));
}

double ClassificationReport::class_accuracy(Task t) const {
  const auto& row = confusion[static_cast<std::size_t>(t)];
  std::size_t n = 0;
  for (std::size_t c : row) n += c;
  return n == 0 ? 0.0 : static_cast<double>(row[static_cast<std::size_t>(t)]) / static_cast<double>(n);
}

json ClassificationReport::to_json() const {
  json per_class = json::object();
  for (std::size_t i = 0; i < kTaskCount; ++i) per_class[task_label(static_cast<Task>(i))] = class_accuracy(static_cast<Task>(i));
  json labels = json::array();
  for (std::size_t i = 0; i < kTaskCount; ++i) labels.push_back(task_label(static_cast<Task>(i)));
  json cols = labels;
  cols.push_back("none");
  json m = json::array();
  for (const auto& row : confusion) m.push_back(row);
  return {{"items", items},
          {"trials", trials},
          {"accuracy", accuracy()},
          {"mean_accuracy", mean_accuracy()},
          {"stddev_accuracy", stddev_accuracy()},
          {"trial_accuracy", trial_accuracy},
          {"per_class_accuracy", per_class},
          {"arguments_matched", arguments_matched},
          {"endpoint_errors", endpoint_errors},
          {"confusion", {{"rows", labels}, {"columns", cols}, {"counts", m}}}};
}

std::string ClassificationReport::table() const {
  std::ostringstream out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-8s", "true\\pred");
  out << buf;
  for (std::size_t c = 0; c < kConfusionCols; ++c) {
    std::snprintf(buf, sizeof(buf), "%7s", c < kTaskCount ? task_label(static_cast<Task>(c)).c_str() : "none");
    out << buf;
  }
  out << "   acc\n";
  for (std::size_t r = 0; r < kTaskCount; ++r) {
    std::snprintf(buf, sizeof(buf), "%-9s", task_label(static_cast<Task>(r)).c_str());
    out << buf;
    for (std::size_t c : confusion[r]) {
      std::snprintf(buf, sizeof(buf), "%7zu", c);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "  %5.1f%%\n", 100.0 * class_accuracy(static_cast<Task>(r)));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "accuracy %.2f%% (mean %.2f +/- %.2f over %zu trials)\n", 100.0 * accuracy(),
                100.0 * mean_accuracy(), 100.0 * stddev_accuracy(), trials);
  out << buf;
  return out.str();
}

ClassificationReport classify_corpus(const std::vector<LabeledQuery>& corpus, const LlmEndpoint& endpoint,
                                     const EnvParams& params, std::size_t trials, std::uint64_t seed,
                                     const CoordinatorOptions& options) {
  if (corpus.empty()) throw ConfigError("query corpus is empty");
  ClassificationReport rep;
  rep.items = corpus.size();
  rep.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    CoordinatorOptions o = options;
    o.seed = seed + t;
    std::size_t correct = 0;
    for (const LabeledQuery& q : corpus) {
      std::size_t col = kTaskCount;
      std::optional<Coordination> got;
      try {
        got = coordinate(q.text, endpoint, params, o);
        col = static_cast<std::size_t>(got->request.task);
      } catch (const EndpointError&) {
        ++rep.endpoint_errors;
      } catch (const OutOfScopeQuery&) {
      } catch (const ArgumentValidationError&) {
      }
      ++rep.confusion[static_cast<std::size_t>(q.task)][col];
      if (col == static_cast<std::size_t>(q.task)) {
        ++correct;
        try {
          const XrlRequest want = validate_tool_call(q.expected, params);
          if (to_tool_call(want).arguments == to_tool_call(got->request).arguments) ++rep.arguments_matched;
        } catch (const Error&) {
        }
      }
    }
    rep.correct += correct;
    rep.trial_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(corpus.size()));
  }
  return rep;
}

std::string template_explanation(const XrlResult& result) {
  switch (result.task) {
    case Task::FeatureImportance: return fi_text(result);
    case Task::ExpectedOutcome: return eo_text(result);
    default: return cf_text(result);
  }
}

Explanation explain(const XrlResult& result, const std::string& query, const LlmEndpoint& endpoint,
                    const EnvParams& params, int max_tokens, const PromptLibrary* prompts_in, std::uint64_t seed) {
  const PromptLibrary& prompts = library(prompts_in);
  const std::string tool = tool_name(result.task);
  Explanation ex;
  ex.template_text = template_explanation(result);

  CompletionRequest req;
  req.agent = Role::Explainer;
  req.system_prompt = prompts.render("explainer", {{"user_query", query},
                                                   {"fn_name", tool},
                                                   {"fn_description", prompts.fn_description(tool)},
                                                   {"env_params", env_params_text(params)},
                                                   {"figure_description", prompts.figure_description(tool)},
                                                   {"max_tokens", std::to_string(max_tokens)}});
  req.messages.push_back({"user", prompts.render("explainer_request", {{"user_query", query},
                                                                      {"summary", ex.template_text},
                                                                      {"data", result.summary.dump()}})});
  req.max_tokens = max_tokens;
  req.seed = seed;
  req.purpose = "explain";
  try {
    const Completion c = endpoint.complete(req);
    if (c.text && !c.text->empty()) {
      ex.text = *c.text;
      return ex;
    }
  } catch (const EndpointError&) {
  }
  ex.text = ex.template_text;
  ex.degraded = true;
  return ex;
}

}  // namespace tankxrl::agents
