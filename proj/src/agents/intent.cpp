#include "tankxrl/agents/intent.hpp"

#include <charconv>
#include <cmath>
#include <regex>

namespace tankxrl::agents {

namespace {

const std::string kNum = R"((-?\d+(?:\.\d+)?))";

double to_double(const std::string& s) { return std::stod(s); }

std::string format_value(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::size_t pump_index(const std::string& v) { return v == "v1" ? 0 : 1; }

bool contains(const std::string& text, const char* needle) { return text.find(needle) != std::string::npos; }

bool contains_any(const std::string& text, std::initializer_list<const char*> needles) {
  for (const char* n : needles) {
    if (contains(text, n)) return true;
  }
  return false;
}

// Condition subject: error forms first so "error of h1" is not read as h1.
const std::string kCond =
    R"((?:the\s+)?(?:tracking\s+)?(?:error\s+(?:of|in|for|on)\s+(?:tank\s+)?(h[12])|(h[12])\s+error|err(?:or)?_(h[12])|(?:level\s+(?:of\s+)?(?:tank\s+)?)?(h[1-4])))";
const std::string kOp =
    R"((<=|>=|<|>|is\s+below|is\s+above|is\s+less\s+than|is\s+greater\s+than|below|above|less\s+than|greater\s+than|exceeds|drops\s+below|rises\s+above|is\s+negative|is\s+positive))";

const std::regex& rule_regex() {
  static const std::regex re(R"(\b(v[12])\s*(?:=|to|at)\s*)" + kNum +
                             R"(\s*(?:v\b|volts?\b)?\s*,?\s*(?:whenever|when|if|while)\s+)" + kCond + R"(\s*)" +
                             kOp + R"(\s*)" + kNum + "?");
  return re;
}

std::optional<PumpRule> rule_from_match(const std::smatch& m) {
  PumpRule r;
  r.value_true = to_double(m[2].str());
  if (m[3].matched) {
    r.cond_var = m[3].str() == "h1" ? dsl::Var::ErrH1 : dsl::Var::ErrH2;
  } else if (m[4].matched) {
    r.cond_var = m[4].str() == "h1" ? dsl::Var::ErrH1 : dsl::Var::ErrH2;
  } else if (m[5].matched) {
    r.cond_var = m[5].str() == "h1" ? dsl::Var::ErrH1 : dsl::Var::ErrH2;
  } else {
    r.cond_var = static_cast<dsl::Var>(m[6].str()[1] - '1');
  }
  const std::string op = m[7].str();
  if (op == "is negative") {
    r.op = dsl::BinaryOp::Lt;
    r.threshold = 0.0;
    return r;
  }
  if (op == "is positive") {
    r.op = dsl::BinaryOp::Gt;
    r.threshold = 0.0;
    return r;
  }
  if (!m[8].matched) return std::nullopt;
  r.threshold = to_double(m[8].str());
  if (op == "<=") {
    r.op = dsl::BinaryOp::Le;
  } else if (op == ">=") {
    r.op = dsl::BinaryOp::Ge;
  } else if (op == "<" || contains_any(op, {"below", "less"})) {
    r.op = dsl::BinaryOp::Lt;
  } else {
    r.op = dsl::BinaryOp::Gt;
  }
  return r;
}

// "and v1 = 1.0 otherwise" / "otherwise v1 = 1.0" / "else 1.0".
std::optional<double> else_value(const std::string& tail, const std::string& pump) {
  static const std::regex after(R"((?:otherwise|else)\s*,?\s*(?:set\s+)?(?:(v[12])\s*(?:=|to|at)\s*)?)" + kNum);
  static const std::regex before(R"(\b(v[12])\s*(?:=|to|at)\s*)" + kNum + R"(\s*(?:v\b|volts?\b)?\s*(?:otherwise|else))");
  std::smatch a;
  std::smatch b;
  const bool ha = std::regex_search(tail, a, after) && (!a[1].matched || a[1].str() == pump);
  const bool hb = std::regex_search(tail, b, before) && b[1].str() == pump;
  if (ha && (!hb || a.position(0) <= b.position(0))) return to_double(a[2].str());
  if (hb) return to_double(b[2].str());
  return std::nullopt;
}

bool condition_holds(const PumpRule& r, double x) {
  switch (r.op) {
    case dsl::BinaryOp::Lt: return x < r.threshold;
    case dsl::BinaryOp::Le: return x <= r.threshold;
    case dsl::BinaryOp::Gt: return x > r.threshold;
    case dsl::BinaryOp::Ge: return x >= r.threshold;
    default: return false;
  }
}

double observed(dsl::Var v, const Observation& obs) {
  switch (v) {
    case dsl::Var::H1: return obs.values[0];
    case dsl::Var::H2: return obs.values[1];
    case dsl::Var::H3: return obs.values[2];
    case dsl::Var::H4: return obs.values[3];
    case dsl::Var::ErrH1: return obs.values[4];
    case dsl::Var::ErrH2: return obs.values[5];
    default: return 0.0;
  }
}

}  // namespace

std::string normalize_text(const std::string& text) {
  static const std::vector<std::pair<std::string, std::string>> kFolds{
      {"\xCE\xB1", "alpha"}, {"\xE2\x80\x93", "-"},  {"\xE2\x80\x94", "-"},  {"\xE2\x88\x92", "-"},
      {"\xE2\x89\xA4", "<="}, {"\xE2\x89\xA5", ">="}, {"\xE2\x80\x98", "'"}, {"\xE2\x80\x99", "'"},
      {"\xE2\x80\x9C", "\""}, {"\xE2\x80\x9D", "\""}, {"\\alpha", "alpha"}, {"\\le", "<="},
      {"\\ge", ">="}};
  std::string s = text;
  for (const auto& [from, to] : kFolds) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
      s.replace(pos, from.size(), to);
    }
  }
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '$' || c == '{' || c == '}' || c == '\\') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  static const std::regex sub(R"(\b([vh])_([0-9]))");
  out = std::regex_replace(out, sub, "$1$2");
  static const std::regex ws(R"(\s+)");
  out = std::regex_replace(out, ws, " ");
  while (!out.empty() && out.front() == ' ') out.erase(out.begin());
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool RuleIntent::empty() const {
  return !rules[0] && !rules[1] && !constants[0] && !constants[1];
}

std::optional<RuleIntent> parse_rule_intent(const std::string& text) {
  const std::string s = normalize_text(text);
  RuleIntent intent;
  std::vector<std::pair<std::smatch, std::size_t>> matches;  // match, absolute offset
  for (auto it = std::sregex_iterator(s.begin(), s.end(), rule_regex()); it != std::sregex_iterator(); ++it) {
    matches.emplace_back(*it, static_cast<std::size_t>(it->position(0)));
  }
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const auto& m = matches[i].first;
    auto rule = rule_from_match(m);
    if (!rule) continue;
    const std::string pump = m[1].str();
    const std::size_t tail_begin = matches[i].second + static_cast<std::size_t>(m.length(0));
    const std::size_t tail_end = i + 1 < matches.size() ? matches[i + 1].second : s.size();
    rule->value_else = else_value(s.substr(tail_begin, tail_end - tail_begin), pump);
    const std::size_t p = pump_index(pump);
    if (!intent.rules[p]) intent.rules[p] = rule;
  }
  static const std::regex constant(R"(\b(?:keep|hold|set|fix|leave)\s+(?:pump\s+)?(v[12])\s*(?:=|to|at|constant\s+at|fixed\s+at)\s*)" +
                                   kNum + R"((?!\d|\.\d)(?!\s*(?:v\b|volts?\b)?\s*,?\s*(?:whenever|when|if|while)\b))");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), constant); it != std::sregex_iterator(); ++it) {
    const std::size_t p = pump_index((*it)[1].str());
    if (!intent.rules[p] && !intent.constants[p]) intent.constants[p] = to_double((*it)[2].str());
  }
  if (intent.empty()) return std::nullopt;
  return intent;
}

std::string intent_program(const RuleIntent& intent, const std::string& name) {
  std::string out = "policy " + name + " {\n";
  for (std::size_t p = 0; p < 2; ++p) {
    const std::string target = p == 0 ? "v1" : "v2";
    const std::string prev = p == 0 ? "prev_v1" : "prev_v2";
    if (const auto& r = intent.rules[p]) {
      out += "  if " + std::string(dsl::var_name(r->cond_var)) + " " + std::string(dsl::to_string(r->op)) + " " +
             format_value(r->threshold) + " then\n";
      out += "    " + target + " = " + format_value(r->value_true) + "\n";
      out += "  else\n";
      out += "    " + target + " = " + (r->value_else ? format_value(*r->value_else) : prev) + "\n";
      out += "  end\n";
    } else if (intent.constants[p]) {
      out += "  " + target + " = " + format_value(*intent.constants[p]) + "\n";
    } else {
      out += "  " + target + " = " + prev + "\n";
    }
  }
  out += "}\n";
  return out;
}

std::vector<std::string> structural_violations(const RuleIntent& intent, const dsl::Program& program,
                                               const CfResult& result, const EnvParams& params) {
  std::vector<std::string> out;
  const Trajectory& traj = result.counterfactual;
  if (result.interval.size() == 0 || traj.actions.empty()) {
    out.push_back("the counterfactual trajectory is empty");
    return out;
  }
  for (std::size_t p = 0; p < 2; ++p) {
    const auto& r = intent.rules[p];
    if (r && program.referenced_vars.count(r->cond_var) == 0) {
      out.push_back("the program never reads " + std::string(dsl::var_name(r->cond_var)) + ", which the rule for v" +
                    std::to_string(p + 1) + " depends on");
    }
  }
  for (std::size_t p = 0; p < 2; ++p) {
    if (!intent.covers(p)) continue;
    const auto& r = intent.rules[p];
    std::size_t mismatches = 0;
    std::string first;
    for (std::size_t t = result.interval.begin; t < result.interval.end; ++t) {
      if (t < traj.start_step || t - traj.start_step >= traj.actions.size()) {
        out.push_back("the counterfactual trajectory does not cover the interval");
        return out;
      }
      const std::size_t i = t - traj.start_step;
      std::optional<double> expected;
      if (r) {
        const bool cond = condition_holds(*r, observed(r->cond_var, traj.observations[i]));
        expected = cond ? std::optional<double>(r->value_true) : r->value_else;
      } else {
        expected = intent.constants[p];
      }
      if (!expected) continue;
      const double want = std::clamp(*expected, params.action_low[p], params.action_high[p]);
      const double got = traj.actions[i][p];
      if (std::abs(got - want) > 1e-9) {
        if (mismatches == 0) {
          first = "at t=" + format_value(traj.time_at(i)) + " v" + std::to_string(p + 1) + " was " +
                  format_value(got) + " instead of " + format_value(want);
        }
        ++mismatches;
      }
    }
    if (mismatches > 0) {
      out.push_back("v" + std::to_string(p + 1) + " did not follow the requested rule in " +
                    std::to_string(mismatches) + " of " + std::to_string(result.interval.size()) + " steps (" +
                    first + ")");
    }
  }
  return out;
}

std::optional<double> extract_time(const std::string& s) {
  static const std::vector<std::regex> patterns{
      std::regex(R"(\bt\s*=\s*)" + kNum),
      std::regex(R"(\b(?:at|time|timestep|time step)\s+(?:t\s*)?)" + kNum),
      std::regex(kNum + R"(\s*(?:s\b|sec\b|secs\b|seconds\b))"),
  };
  for (const auto& re : patterns) {
    std::smatch m;
    if (std::regex_search(s, m, re)) return to_double(m[1].str());
  }
  return std::nullopt;
}

std::optional<Interval> extract_interval(const std::string& s) {
  static const std::vector<std::regex> patterns{
      std::regex(R"((?:from|between)\s+(?:t\s*=\s*)?(?:time\s+)?)" + kNum +
                 R"(\s*(?:s\b|sec\b|seconds\b)?\s*(?:to|and|until|till|through|-)\s*(?:t\s*=\s*)?)" + kNum),
      std::regex(R"((?:t\s*=\s*)?)" + kNum + R"(\s*(?:s\b|sec\b)?\s*(?:-|to)\s*(?:t\s*=\s*)?)" + kNum +
                 R"(\s*(?:s\b|sec\b|secs\b|seconds\b))"),
      std::regex(R"(\[\s*)" + kNum + R"(\s*,\s*)" + kNum + R"(\s*\])"),
  };
  for (const auto& re : patterns) {
    std::smatch m;
    if (std::regex_search(s, m, re)) {
      const double a = to_double(m[1].str());
      const double b = to_double(m[2].str());
      if (a < b) return Interval{a, b};
    }
  }
  return std::nullopt;
}

std::array<std::optional<double>, 2> extract_actions(const std::string& s) {
  std::array<std::optional<double>, 2> out{};
  static const std::regex both(R"(\b(?:v1\s+and\s+v2|both\s+pumps|both\s+actions)\s*(?:=|to|at|of)\s*)" + kNum);
  static const std::regex one(R"(\bv([12])(?:\s*(?:action|pump|voltage|is|was|fixed|held|kept|set))*\s*(?:=|to|at|of|:)\s*)" + kNum);
  std::smatch m;
  if (std::regex_search(s, m, both)) out[0] = out[1] = to_double(m[1].str());
  for (auto it = std::sregex_iterator(s.begin(), s.end(), one); it != std::sregex_iterator(); ++it) {
    const std::size_t p = (*it)[1].str() == "1" ? 0 : 1;
    if (!out[p]) out[p] = to_double((*it)[2].str());
  }
  return out;
}

std::optional<double> extract_alpha(const std::string& s) {
  static const std::regex re(R"(\balpha\s*(?:=|of|:|is|were|was)?\s*)" + kNum);
  std::smatch m;
  if (std::regex_search(s, m, re)) return to_double(m[1].str());
  return std::nullopt;
}

const std::vector<AlphaEntry>& alpha_table() {
  static const std::vector<AlphaEntry> table{
      {"opposite", -1.0, BehaviorMode::Opposite}, {"reverse", -1.0, BehaviorMode::Opposite},
      {"conservative", 0.3, BehaviorMode::Smooth}, {"calm", 0.3, BehaviorMode::Smooth},
      {"cautious", 0.3, BehaviorMode::Smooth},     {"gentle", 0.3, BehaviorMode::Smooth},
      {"steady", 0.5, BehaviorMode::Smooth},       {"smoother", 0.5, BehaviorMode::Smooth},
      {"aggressive", 2.0, BehaviorMode::Smooth},   {"bold", 2.0, BehaviorMode::Smooth},
  };
  return table;
}

ToolCall heuristic_tool_call(const std::string& query) {
  const std::string s = normalize_text(query);
  auto error = [](const std::string& msg) { return ToolCall{"raise_error", {{"message", msg}}}; };

  if (contains_any(s, {"retrain", "re-train", "train a new", "train the agent", "fine-tune", "finetune",
                       "new reward", "hyperparameter", "learning rate", "weather", "joke", "poem", "stock price",
                       "recipe", "translate"})) {
    return error("the query is outside the supported explanation tools");
  }
  const auto interval = extract_interval(s);
  const auto actions = extract_actions(s);
  const auto alpha = extract_alpha(s);

  if (interval) {
    const nlohmann::json span{{"t_start", interval->start}, {"t_end", interval->end}};
    if (contains_any(s, {"whenever", "otherwise", "controller", "replace", "policy", "on-off", "on/off",
                         "bang-bang", "rule", "pid", "mpc", "switch"})) {
      nlohmann::json args = span;
      args["description"] = query;
      return {"cf_policy", args};
    }
    if (actions[0] || actions[1]) {
      nlohmann::json args = span;
      if (actions[0]) args["v1"] = *actions[0];
      if (actions[1]) args["v2"] = *actions[1];
      return {"cf_action", args};
    }
    const AlphaEntry* term = nullptr;
    for (const AlphaEntry& e : alpha_table()) {
      if (contains(s, e.term)) {
        term = &e;
        break;
      }
    }
    if (alpha || term) {
      double a = alpha ? *alpha : term->alpha;
      BehaviorMode mode = term != nullptr ? term->mode : BehaviorMode::Smooth;
      if (a < 0.0) mode = BehaviorMode::Opposite;
      nlohmann::json args = span;
      args["alpha"] = a;
      args["mode"] = to_string(mode);
      return {"cf_behavior", args};
    }
  }

  const auto time = extract_time(s);
  if (contains_any(s, {"long run", "long-run", "achieve", "expect", "outcome", "future", "goal", "trying to",
                       "aiming", "in the end", "decompos"})) {
    if (!time) return error("expected-outcome queries need a time");
    nlohmann::json args{{"time", *time}};
    if (actions[0] && actions[1]) args["action"] = {*actions[0], *actions[1]};
    static const std::regex horizon(R"(\b(?:next|over|for)\s+(\d+)\s+steps\b)");
    std::smatch m;
    if (std::regex_search(s, m, horizon)) args["horizon"] = std::stoul(m[1].str());
    return {"explain_expected_outcome", args};
  }
  if (contains_any(s, {"contribut", "important", "importance", "influence", "feature", "state variable", "shap",
                       "affect", "driv", "which variable", "attribut"})) {
    if (!time) return error("feature-importance queries need a time");
    return {"explain_feature_importance", {{"time", *time}}};
  }
  return error("could not match the query to an explanation tool");
}

}  // namespace tankxrl::agents
