#include "tankxrl/agents/generation.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tankxrl/agents/intent.hpp"
#include "tankxrl/agents/tools.hpp"

namespace tankxrl::agents {

namespace {

using nlohmann::json;

constexpr std::array<const char*, kAttemptCategoryCount> kCategoryNames{
    "ParseError", "NameError", "TypeError", "RuntimeError", "IncompleteAssignment", "Hallucination", "Success",
    "Failure"};

std::string fmt(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

const PromptLibrary& library(const GenerationOptions& o) {
  return o.prompts != nullptr ? *o.prompts : PromptLibrary::default_library();
}

struct AttemptOutcome {
  AttemptCategory category = AttemptCategory::Success;
  std::string message;
  std::optional<dsl::Span> span;
};

AttemptOutcome from_dsl(const dsl::DslError& e) {
  return {attempt_category(e.category()), e.what(), e.span()};
}

// Shared bookkeeping of one generation run: logging, debugger calls and the coder
// conversation.
class Loop {
 public:
  Loop(const LlmEndpoint& endpoint, const GenerationOptions& options, std::string env_params, std::string task,
       std::string intent, std::string system_prompt, std::string first_message, std::string refine_template,
       std::string purpose)
      : env_params_(std::move(env_params)),
        endpoint_(endpoint),
        options_(options),
        prompts_(library(options)),
        system_(std::move(system_prompt)),
        first_(std::move(first_message)),
        refine_(std::move(refine_template)),
        purpose_(std::move(purpose)) {
    log_.task = std::move(task);
    log_.intent = std::move(intent);
  }

  std::size_t max_invocations() const { return options_.trial_max + 1; }

  /// Coder invocation `attempt` (1-based).
  Completion code(std::size_t attempt) {
    CompletionRequest req;
    req.agent = Role::Coder;
    req.system_prompt = system_;
    req.messages.push_back({"user", first_});
    if (attempt > 1) {
      req.messages.push_back({"assistant", last_source_});
      req.messages.push_back(
          {"user", render_template(prompts_.get(refine_),
                                   {{"prev_code", last_source_}, {"error_message", last_error_},
                                    {"guidance", last_guidance_}})});
    }
    req.tools.push_back(raise_error_tool());
    req.seed = options_.seed;
    req.attempt = attempt;
    req.purpose = purpose_;
    log_.attempt_count = attempt;
    return endpoint_.complete(req);
  }

  void fail(std::size_t attempt, const std::string& source, const AttemptOutcome& outcome) {
    AttemptRecord rec;
    rec.attempt = attempt;
    rec.source = source;
    rec.category = outcome.category;
    rec.message = outcome.message;
    rec.span = outcome.span;
    last_source_ = source;
    last_error_ = outcome.message;
    last_guidance_.clear();
    if (attempt < max_invocations() && options_.use_debugger) last_guidance_ = debug(source, outcome.message);
    rec.guidance = last_guidance_;
    push(std::move(rec));
  }

  void succeed(std::size_t attempt, const std::string& source, std::string message) {
    AttemptRecord rec;
    rec.attempt = attempt;
    rec.source = source;
    rec.category = AttemptCategory::Success;
    rec.message = std::move(message);
    push(std::move(rec));
    log_.success = true;
  }

  [[noreturn]] void give_up() {
    AttemptRecord rec;
    rec.category = AttemptCategory::Failure;
    rec.message = "Failed after multiple attempts.";
    push(std::move(rec));
    log_.success = false;
    throw GenerationFailure(log_);
  }

  IterationLog& log() { return log_; }

 private:
  std::string debug(const std::string& source, const std::string& error) {
    CompletionRequest req;
    req.agent = Role::Debugger;
    req.system_prompt = prompts_.render("debugger", {{"env_params", env_params_}});
    req.messages.push_back({"user", prompts_.render("debugger_request", {{"error_message", error},
                                                                         {"prev_code", source},
                                                                         {"user_query", log_.intent}})});
    req.seed = options_.seed;
    req.attempt = ++debugger_calls_;
    req.purpose = "debug";
    try {
      const Completion c = endpoint_.complete(req);
      return c.text.value_or("");
    } catch (const EndpointError&) {
      return "";
    }
  }

  void push(AttemptRecord rec) {
    log_.attempts.push_back(std::move(rec));
    if (options_.on_attempt) options_.on_attempt(log_.attempts.back());
  }

  std::string env_params_;
  const LlmEndpoint& endpoint_;
  const GenerationOptions& options_;
  const PromptLibrary& prompts_;
  std::string system_;
  std::string first_;
  std::string refine_;
  std::string purpose_;
  IterationLog log_;
  std::string last_source_;
  std::string last_error_;
  std::string last_guidance_;
  std::size_t debugger_calls_ = 0;
};

std::string coder_error_text(const Completion& c) {
  return c.tool_call->arguments.is_object() && c.tool_call->arguments.contains("message")
             ? c.tool_call->arguments["message"].dump()
             : std::string("the coder declined the request");
}

}  // namespace

std::string to_string(AttemptCategory c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

std::optional<AttemptCategory> attempt_category_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kAttemptCategoryCount; ++i) {
    if (name == kCategoryNames[i]) return static_cast<AttemptCategory>(i);
  }
  return std::nullopt;
}

AttemptCategory attempt_category(dsl::ErrorCategory c) {
  switch (c) {
    case dsl::ErrorCategory::ParseError: return AttemptCategory::ParseError;
    case dsl::ErrorCategory::NameError: return AttemptCategory::NameError;
    case dsl::ErrorCategory::TypeError: return AttemptCategory::TypeError;
    case dsl::ErrorCategory::RuntimeError: return AttemptCategory::RuntimeError;
    case dsl::ErrorCategory::IncompleteAssignment: return AttemptCategory::IncompleteAssignment;
  }
  return AttemptCategory::RuntimeError;
}

json AttemptRecord::to_json() const {
  json j{{"attempt", attempt},
         {"category", to_string(category)},
         {"message", message},
         {"guidance", guidance},
         {"source", source}};
  j["span"] = span ? json{{"line", span->line}, {"col", span->col}} : json(nullptr);
  return j;
}

json IterationLog::to_json() const {
  json list = json::array();
  for (const AttemptRecord& a : attempts) list.push_back(a.to_json());
  return {{"task", task},
          {"intent", intent},
          {"outcome", success ? "Success" : "Failure"},
          {"attempt_count", attempt_count},
          {"attempts", list}};
}

IterationLog IterationLog::from_json(const json& j) {
  IterationLog log;
  log.task = j.value("task", "");
  log.intent = j.value("intent", "");
  log.success = j.value("outcome", "Failure") == "Success";
  log.attempt_count = j.value("attempt_count", std::size_t{0});
  for (const auto& a : j.at("attempts")) {
    AttemptRecord r;
    r.attempt = a.value("attempt", std::size_t{0});
    const auto cat = attempt_category_from_string(a.value("category", ""));
    if (!cat) throw ConfigError("iteration log: unknown category " + a.value("category", ""));
    r.category = *cat;
    r.message = a.value("message", "");
    r.guidance = a.value("guidance", "");
    r.source = a.value("source", "");
    if (a.contains("span") && a["span"].is_object()) {
      r.span = dsl::Span{a["span"].value("line", std::size_t{1}), a["span"].value("col", std::size_t{1})};
    }
    log.attempts.push_back(std::move(r));
  }
  return log;
}

std::vector<AttemptCategory> IterationLog::sequence() const {
  std::vector<AttemptCategory> out;
  out.reserve(attempts.size());
  for (const AttemptRecord& a : attempts) out.push_back(a.category);
  return out;
}

GenerationFailure::GenerationFailure(IterationLog log)
    : Error("GenerationFailure", "Failed to generate code within trial_max (" + std::to_string(log.attempt_count) +
                                     " coder attempts)"),
      log_(std::move(log)) {}

std::string sanitize_code(const std::string& text) {
  std::string s = text;
  const auto fence = s.find("```");
  if (fence != std::string::npos) {
    auto body = s.find('\n', fence);
    body = body == std::string::npos ? s.size() : body + 1;
    const auto close = s.find("```", body);
    s = s.substr(body, close == std::string::npos ? std::string::npos : close - body);
  }
  const auto first = s.find_first_not_of(" \t\r\n");
  const auto last = s.find_last_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  return s.substr(first, last - first + 1);
}

std::string trajectory_summary(const CfResult& r) {
  std::ostringstream out;
  const Trajectory& cf = r.counterfactual;
  out << "interval: " << fmt(r.spec.t_start, 0) << " to " << fmt(r.spec.t_end, 0) << " s (" << r.interval.size()
      << " steps)\n";
  out << "per-step actions over the interval (t, v1, v2, h1, h2, error_h1, error_h2):\n";
  for (std::size_t t = r.interval.begin; t < r.interval.end && t - cf.start_step < cf.actions.size(); ++t) {
    const std::size_t i = t - cf.start_step;
    const auto& o = cf.observations[i].values;
    out << fmt(cf.time_at(i), 0) << " " << fmt(cf.actions[i][0]) << " " << fmt(cf.actions[i][1]) << " "
        << fmt(o[0]) << " " << fmt(o[1]) << " " << fmt(o[4]) << " " << fmt(o[5]) << "\n";
  }
  out << "states after the interval, every 10 steps (t, h1, h2, h3, h4, sp_h1, sp_h2):\n";
  for (std::size_t t = r.interval.end; t <= r.horizon_end && t - cf.start_step < cf.states.size(); t += 10) {
    const std::size_t i = t - cf.start_step;
    const auto& s = cf.states[i];
    out << fmt(cf.time_at(i), 0) << " " << fmt(s.h[0]) << " " << fmt(s.h[1]) << " " << fmt(s.h[2]) << " "
        << fmt(s.h[3]) << " " << fmt(s.setpoints[0]) << " " << fmt(s.setpoints[1]) << "\n";
  }
  out << "cumulative reward change over the window: " << fmt(r.cumulative_delta, 6) << "\n";
  return out.str();
}

FidelityVerdict evaluate_fidelity(const dsl::Program& program, const std::string& intent, const CfResult* result,
                                  const LlmEndpoint& endpoint, const EnvParams& params,
                                  const PromptLibrary& prompts, std::size_t attempt) {
  FidelityVerdict v;
  if (result == nullptr || result->interval.size() == 0 || result->counterfactual.actions.empty()) {
    v.structural = true;
    v.reason = "The trajectory is empty, so it cannot follow the user's intention.";
    return v;
  }
  const auto rule = parse_rule_intent(intent);
  if (rule) {
    const auto violations = structural_violations(*rule, program, *result, params);
    if (!violations.empty()) {
      v.structural = true;
      v.reason = "The trajectory does not faithfully follow the user's intention because " + violations.front() + ".";
      return v;
    }
    if (rule->covers(0) && rule->covers(1)) {
      v.structural = true;
      v.accepted = true;
      v.reason = "structural check passed";
      return v;
    }
  }
  CompletionRequest req;
  req.agent = Role::Evaluator;
  req.system_prompt = prompts.render("evaluator", {{"env_params", env_params_text(params)}});
  req.messages.push_back({"user", prompts.render("evaluator_request", {{"user_query", intent},
                                                                       {"program", dsl::pretty_print(program)},
                                                                       {"trajectory", trajectory_summary(*result)}})});
  req.tools.push_back(raise_error_tool());
  req.attempt = attempt;
  req.purpose = "evaluate";
  req.max_tokens = 300;
  v.consumed_llm = true;
  try {
    const Completion c = endpoint.complete(req);
    if (c.tool_call) {
      const auto& args = c.tool_call->arguments;
      v.reason = args.is_object() && args.contains("message") && args["message"].is_string()
                     ? args["message"].get<std::string>()
                     : std::string("The evaluator rejected the trajectory.");
      return v;
    }
    v.accepted = true;
    v.reason = one_line(c.text.value_or("accepted"));
  } catch (const EndpointError& e) {
    v.reason = std::string("evaluator unavailable: ") + e.what();
  }
  return v;
}

PolicyGeneration generate_policy(const Workbench& wb, const std::string& description, double t_start, double t_end,
                                 const LlmEndpoint& endpoint, const GenerationOptions& options) {
  if (options.trial_max < 1) throw ConfigError("trial_max must be at least 1");
  validate_cf_spec(CfSpec::behavior(t_start, t_end, 1.0), wb.params());
  const PromptLibrary& prompts = library(options);
  const std::string env_params = env_params_text(wb.params());
  const std::string first = prompts.render(
      "coder_policy_request", {{"user_query", one_line(description)}, {"t_start", fmt(t_start, 0)}, {"t_end", fmt(t_end, 0)}});
  Loop loop(endpoint, options, env_params, "cf_policy", description, prompts.render("coder_policy", {{"env_params", env_params}}),
            first, "coder_policy_refine", "policy");

  for (std::size_t attempt = 1; attempt <= loop.max_invocations(); ++attempt) {
    const Completion c = loop.code(attempt);
    if (c.tool_call && c.tool_call->name == "raise_error") {
      throw OutOfScopeQuery("coder declined the policy: " + coder_error_text(c));
    }
    const std::string source = sanitize_code(c.text.value_or(""));
    std::shared_ptr<const dsl::Program> program;
    try {
      program = std::make_shared<const dsl::Program>(dsl::compile(source));
    } catch (const dsl::DslError& e) {
      loop.fail(attempt, source, from_dsl(e));
      continue;
    }
    XrlResult result;
    try {
      result = run_counterfactual(wb, CfSpec::policy(t_start, t_end, program, source));
    } catch (const dsl::DslError& e) {
      loop.fail(attempt, source, from_dsl(e));
      continue;
    } catch (const Error& e) {
      loop.fail(attempt, source, {AttemptCategory::RuntimeError, e.what(), std::nullopt});
      continue;
    }
    const FidelityVerdict verdict =
        evaluate_fidelity(*program, description, &*result.cf, endpoint, wb.params(), prompts, attempt);
    if (!verdict.accepted) {
      loop.fail(attempt, source, {AttemptCategory::Hallucination, verdict.reason, std::nullopt});
      continue;
    }
    loop.succeed(attempt, source, "Code successfully generated. Rollout complete.");
    result.arguments["description"] = description;
    result.summary["description"] = description;
    return {program, source, std::move(result), loop.log()};
  }
  loop.give_up();
}

std::string plant_reward_source() {
  return "reward plant {\n"
         "  -(100 * (h1 - sp_h1) * (h1 - sp_h1) + 100 * (h2 - sp_h2) * (h2 - sp_h2)\n"
         "    + (v1 - prev_v1) * (v1 - prev_v1) + (v2 - prev_v2) * (v2 - prev_v2))\n"
         "}\n";
}

DecompositionGeneration generated_decomposition(const TankEnv& env, const std::string& reward_source_text,
                                                const LlmEndpoint& endpoint, const GenerationOptions& options) {
  if (options.trial_max < 1) throw ConfigError("trial_max must be at least 1");
  const PromptLibrary& prompts = library(options);
  const std::string env_params = env_params_text(env.params());
  Loop loop(endpoint, options, env_params, "reward_decomposition", reward_source_text,
            prompts.render("coder_reward", {{"env_params", env_params}}),
            prompts.render("coder_reward_request", {{"reward_source", reward_source_text}}), "coder_reward_refine",
            "reward");

  for (std::size_t attempt = 1; attempt <= loop.max_invocations(); ++attempt) {
    const Completion c = loop.code(attempt);
    if (c.tool_call && c.tool_call->name == "raise_error") {
      throw OutOfScopeQuery("coder declined the decomposition: " + coder_error_text(c));
    }
    const std::string text = sanitize_code(c.text.value_or(""));
    const auto sep = text.find("\n---\n");
    if (sep == std::string::npos) {
      loop.fail(attempt, text, {AttemptCategory::ParseError, "missing '\\n---\\n' between code and names", std::nullopt});
      continue;
    }
    const std::string source = text.substr(0, sep);
    std::vector<std::string> names;
    try {
      names = json::parse(sanitize_code(text.substr(sep + 5))).get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      loop.fail(attempt, text, {AttemptCategory::ParseError, std::string("component names: ") + e.what(), std::nullopt});
      continue;
    }
    try {
      RewardComponentSpec spec = make_decomposition(source, names);
      fidelity_gate(env, spec, 1000, options.seed);
      loop.succeed(attempt, text, "Decomposition matches the plant reward.");
      return {std::move(spec), loop.log()};
    } catch (const dsl::DslError& e) {
      loop.fail(attempt, text, from_dsl(e));
    } catch (const ShapeMismatch& e) {
      loop.fail(attempt, text, {AttemptCategory::TypeError, e.what(), std::nullopt});
    } catch (const DecompositionInfidelity& e) {
      loop.fail(attempt, text, {AttemptCategory::Hallucination, e.what(), std::nullopt});
    }
  }
  loop.give_up();
}

// ---- transition matrix -------------------------------------------------------

std::string TransitionMatrix::row_name(std::size_t r) { return r == 0 ? "Start" : kCategoryNames[r - 1]; }

std::size_t TransitionMatrix::at(const std::string& from, const std::string& to) const {
  std::size_t r = kRows;
  for (std::size_t i = 0; i < kRows; ++i) {
    if (row_name(i) == from) r = i;
  }
  const auto c = attempt_category_from_string(to);
  if (r == kRows || !c) throw ConfigError("no transition " + from + " -> " + to);
  return counts[r][static_cast<std::size_t>(*c)];
}

std::size_t TransitionMatrix::row_sum(std::size_t r) const {
  std::size_t s = 0;
  for (std::size_t c : counts[r]) s += c;
  return s;
}

std::size_t TransitionMatrix::column_sum(AttemptCategory c) const {
  std::size_t s = 0;
  for (const auto& row : counts) s += row[static_cast<std::size_t>(c)];
  return s;
}

std::size_t TransitionMatrix::total() const {
  std::size_t s = 0;
  for (std::size_t r = 0; r < kRows; ++r) s += row_sum(r);
  return s;
}

json TransitionMatrix::to_json() const {
  json rows = json::array();
  for (std::size_t r = 0; r < kRows; ++r) rows.push_back(row_name(r));
  json cols = json::array();
  for (const char* c : kCategoryNames) cols.push_back(c);
  json m = json::array();
  for (const auto& row : counts) m.push_back(row);
  return {{"rows", rows}, {"columns", cols}, {"counts", m}};
}

std::string TransitionMatrix::table() const {
  std::ostringstream out;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%-22s", "from \\ to");
  out << buf;
  for (const char* c : kCategoryNames) {
    std::snprintf(buf, sizeof(buf), "%8.6s", c);
    out << buf;
  }
  out << "\n";
  for (std::size_t r = 0; r < kRows; ++r) {
    std::snprintf(buf, sizeof(buf), "%-22s", row_name(r).c_str());
    out << buf;
    for (std::size_t c : counts[r]) {
      std::snprintf(buf, sizeof(buf), "%8zu", c);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

TransitionMatrix error_transition_matrix(const std::vector<IterationLog>& logs) {
  TransitionMatrix m;
  for (const IterationLog& log : logs) {
    std::size_t from = 0;
    for (const AttemptRecord& a : log.attempts) {
      const auto to = static_cast<std::size_t>(a.category);
      ++m.counts[from][to];
      if (a.category == AttemptCategory::Success || a.category == AttemptCategory::Failure) break;
      from = to + 1;
    }
  }
  return m;
}

// ---- campaign ----------------------------------------------------------------

std::size_t CampaignReport::failures() const {
  std::size_t n = 0;
  for (const auto& q : logs) {
    for (const auto& l : q) n += l.success ? 0 : 1;
  }
  return n;
}

std::size_t CampaignReport::total_attempts() const {
  std::size_t n = 0;
  for (const auto& q : logs) {
    for (const auto& l : q) n += l.attempt_count;
  }
  return n;
}

json CampaignReport::to_json() const {
  json qs = json::array();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    json trials_j = json::array();
    for (const auto& l : logs[q]) {
      json seq = json::array();
      for (AttemptCategory c : l.sequence()) seq.push_back(to_string(c));
      trials_j.push_back({{"outcome", l.success ? "Success" : "Failure"},
                          {"attempt_count", l.attempt_count},
                          {"sequence", seq}});
    }
    qs.push_back({{"id", queries[q].id}, {"description", queries[q].description}, {"trials", trials_j}});
  }
  return {{"queries", qs},
          {"trials", trials},
          {"failures", failures()},
          {"total_attempts", total_attempts()},
          {"transition_matrix", matrix.to_json()}};
}

std::string CampaignReport::table() const {
  std::ostringstream out;
  out << "query   failures  attempts\n";
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::size_t f = 0;
    std::size_t a = 0;
    for (const auto& l : logs[q]) {
      f += l.success ? 0 : 1;
      a += l.attempt_count;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-8s%8zu%10zu\n", queries[q].id.c_str(), f, a);
    out << buf;
  }
  out << "total failures " << failures() << " of " << queries.size() * trials << ", coder attempts "
      << total_attempts() << "\n\n";
  out << matrix.table();
  return out.str();
}

CampaignReport run_cfp_campaign(const Workbench& wb, const std::vector<CampaignQuery>& queries, std::size_t trials,
                                const EndpointFactory& endpoints, const GenerationOptions& options) {
  CampaignReport rep;
  rep.queries = queries;
  rep.trials = trials;
  rep.logs.resize(queries.size());
  std::vector<IterationLog> all;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t t = 0; t < trials; ++t) {
      const auto endpoint = endpoints(q, t);
      GenerationOptions o = options;
      o.seed = options.seed + q * trials + t;
      try {
        rep.logs[q].push_back(
            generate_policy(wb, queries[q].description, queries[q].t_start, queries[q].t_end, *endpoint, o).log);
      } catch (const GenerationFailure& f) {
        rep.logs[q].push_back(f.log());
      }
      all.push_back(rep.logs[q].back());
    }
  }
  rep.matrix = error_transition_matrix(all);
  return rep;
}

ScriptedCampaign ScriptedCampaign::from_json(const json& j) {
  ScriptedCampaign c;
  for (const auto& [k, v] : j.at("catalogue").items()) {
    if (!attempt_category_from_string(k)) throw ConfigError("campaign catalogue: unknown category " + k);
    c.catalogue[k] = v.get<std::string>();
  }
  for (const auto& q : j.at("queries")) {
    CampaignQuery cq;
    cq.id = q.at("id").get<std::string>();
    cq.description = q.at("description").get<std::string>();
    cq.t_start = q.value("t_start", 4000.0);
    cq.t_end = q.value("t_end", 4200.0);
    c.queries.push_back(cq);
    c.solutions.push_back(q.at("solution").get<std::string>());
    std::vector<std::vector<std::string>> plans;
    for (const auto& p : q.at("plans")) {
      auto seq = p.get<std::vector<std::string>>();
      if (seq.empty() || (seq.back() != "Success" && seq.back() != "Failure")) {
        throw ConfigError("campaign " + cq.id + ": every plan must end in Success or Failure");
      }
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        if (c.catalogue.count(seq[i]) == 0) throw ConfigError("campaign " + cq.id + ": no program for " + seq[i]);
      }
      plans.push_back(std::move(seq));
    }
    c.plans.push_back(std::move(plans));
  }
  if (c.queries.empty()) throw ConfigError("campaign has no queries");
  return c;
}

ScriptedCampaign ScriptedCampaign::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open campaign file " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError("campaign file " + path + ": " + e.what());
  }
}

std::size_t ScriptedCampaign::trials() const {
  std::size_t n = plans.empty() ? 0 : plans.front().size();
  for (const auto& p : plans) n = std::min(n, p.size());
  return n;
}

std::shared_ptr<const LlmEndpoint> ScriptedCampaign::endpoint(std::size_t query, std::size_t trial) const {
  ScriptedEndpoint ep;
  const auto& plan = plans.at(query).at(trial);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string& cat = plan[i];
    if (cat == "Failure") break;
    ep.add_text(Role::Coder, i + 1, cat == "Success" ? solutions[query] : catalogue.at(cat));
    if (cat == "Hallucination") {
      ep.add_tool(Role::Evaluator, i + 1,
                  ToolCall{"raise_error",
                           {{"message", "The trajectory does not faithfully follow the user's intention."}}});
    }
  }
  ep.add_text(Role::Evaluator, std::nullopt, "ACCEPT");
  ep.add_text(Role::Debugger, std::nullopt, "Check the reported error against the policy grammar and fix it.");
  return std::make_shared<ScriptedEndpoint>(std::move(ep));
}

}  // namespace tankxrl::agents
