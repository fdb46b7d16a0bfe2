#include <doctest.h>

#include <mutex>

#include "support/workbench.hpp"
#include "tankxrl/agents/agents.hpp"
#include "tankxrl/agents/intent.hpp"
#include "tankxrl/error.hpp"

using namespace tankxrl;
using namespace tankxrl::agents;
using nlohmann::json;
using tankxrl::testing::bundled_workbench;
using tankxrl::testing::source_path;

namespace {

const char* kOnOffQuery =
    "Replace the RL policy with an on-off controller such that v1 = 8.0 whenever the error of h1 < 0.0, and "
    "v1 = 1.0 otherwise; and similarly, v2 = 8.0 whenever the error of h2 < 0.0, and v2 = 1.0 otherwise.";

const char* kOnOff =
    "policy cf_policy {\n  if error_h1 < 0 then\n    v1 = 8\n  else\n    v1 = 1\n  end\n"
    "  if error_h2 < 0 then\n    v2 = 8\n  else\n    v2 = 1\n  end\n}\n";

// One broken program per error category.
const std::vector<std::pair<AttemptCategory, std::string>> kBroken{
    {AttemptCategory::ParseError, "policy p {\n  v1 = = 3\n  v2 = 1\n}"},
    {AttemptCategory::NameError, "policy p {\n  v1 = h5 + 1\n  v2 = 1\n}"},
    {AttemptCategory::TypeError, "policy p {\n  v1 = h1 < 0.2\n  v2 = 1\n}"},
    {AttemptCategory::RuntimeError, "policy p {\n  v1 = 1 / (h1 - h1)\n  v2 = 1\n}"},
    {AttemptCategory::IncompleteAssignment, "policy p {\n  if error_h1 < 0 then\n    v1 = 8\n  end\n  v2 = 1\n}"},
    {AttemptCategory::Hallucination, "policy p {\n  v1 = 5\n  v2 = 5\n}"},
};

// Delegates to another endpoint and keeps every request.
class Spy : public LlmEndpoint {
 public:
  explicit Spy(const LlmEndpoint& inner) : inner_(inner) {}
  Completion complete(const CompletionRequest& request) const override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(request);
    }
    return inner_.complete(request);
  }
  std::string name() const override { return "spy"; }
  std::vector<CompletionRequest> of(Role role) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<CompletionRequest> out;
    for (const auto& r : requests_) {
      if (r.agent == role) out.push_back(r);
    }
    return out;
  }

 private:
  const LlmEndpoint& inner_;
  mutable std::mutex mu_;
  mutable std::vector<CompletionRequest> requests_;
};

ScriptedEndpoint with_defaults(ScriptedEndpoint ep) {
  ep.add_text(Role::Evaluator, std::nullopt, "ACCEPT");
  ep.add_text(Role::Debugger, std::nullopt, "Look at the error line.");
  return ep;
}

IterationLog log_of(std::vector<AttemptCategory> seq) {
  IterationLog log;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    AttemptRecord r;
    r.attempt = seq[i] == AttemptCategory::Failure ? 0 : i + 1;
    r.category = seq[i];
    log.attempts.push_back(r);
  }
  log.success = !seq.empty() && seq.back() == AttemptCategory::Success;
  log.attempt_count = log.success ? seq.size() : seq.size() - 1;
  return log;
}

// Frozen output of tools/oracles/cfp_transition_matrix.py on data/cfp_campaign.json.
constexpr std::array<std::array<std::size_t, 8>, 7> kCampaignMatrix{{
    {9, 6, 2, 1, 4, 15, 33, 0},
    {3, 1, 2, 0, 0, 7, 4, 1},
    {0, 0, 2, 2, 0, 2, 6, 0},
    {1, 4, 2, 1, 0, 1, 5, 0},
    {2, 0, 1, 0, 0, 1, 4, 0},
    {0, 1, 1, 1, 0, 1, 3, 0},
    {3, 0, 4, 3, 3, 7, 13, 1},
}};

}  // namespace

// ---- sanitize -----------------------------------------------------------------------

TEST_CASE("sanitize_code strips fences and surrounding prose") {
  CHECK(sanitize_code("  policy p { v1 = 1 v2 = 1 }\n\n") == "policy p { v1 = 1 v2 = 1 }");
  CHECK(sanitize_code("Here you go:\n```dsl\npolicy p { v1 = 1 v2 = 1 }\n```\nThanks") ==
        "policy p { v1 = 1 v2 = 1 }");
  CHECK(sanitize_code("```\npolicy p { v1 = 1 v2 = 1 }") == "policy p { v1 = 1 v2 = 1 }");
  CHECK(sanitize_code("") == "");
  CHECK(sanitize_code(" \n\t") == "");
}

// ---- generation loop ------------------------------------------------------------------

TEST_CASE("generation succeeds at attempt k+1 after k failures") {
  const Workbench& wb = bundled_workbench();
  for (std::size_t k = 0; k <= 10; ++k) {
    CAPTURE(k);
    ScriptedEndpoint ep;
    std::vector<AttemptCategory> want;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& [cat, src] = kBroken[i % kBroken.size()];
      ep.add_text(Role::Coder, i + 1, src);
      want.push_back(cat);
    }
    ep.add_text(Role::Coder, k + 1, kOnOff);
    ep = with_defaults(ep);
    const PolicyGeneration g = generate_policy(wb, kOnOffQuery, 4000, 4200, ep);
    want.push_back(AttemptCategory::Success);
    CHECK(g.log.success);
    CHECK(g.log.attempt_count == k + 1);
    CHECK(g.log.sequence() == want);
    CHECK(ep.calls(Role::Coder) == k + 1);
    CHECK(ep.calls(Role::Debugger) == k);
    CHECK(g.log.attempts.back().attempt == k + 1);
    CHECK(g.result.task == Task::CfPolicy);
    CHECK(g.result.arguments.at("description") == kOnOffQuery);
  }
}

TEST_CASE("generation gives up after trial_max refinements") {
  const Workbench& wb = bundled_workbench();
  ScriptedEndpoint ep;
  ep.add_text(Role::Coder, std::nullopt, kBroken[0].second);
  ep = with_defaults(ep);
  std::vector<AttemptCategory> seen;
  GenerationOptions o;
  o.on_attempt = [&](const AttemptRecord& r) { seen.push_back(r.category); };
  try {
    generate_policy(wb, kOnOffQuery, 4000, 4200, ep, o);
    FAIL("expected GenerationFailure");
  } catch (const GenerationFailure& f) {
    const IterationLog& log = f.log();
    CHECK_FALSE(log.success);
    CHECK(log.attempt_count == 11);
    REQUIRE(log.attempts.size() == 12);
    CHECK(log.attempts.back().category == AttemptCategory::Failure);
    CHECK(log.attempts.back().attempt == 0);
    CHECK(log.attempts.back().message == "Failed after multiple attempts.");
    CHECK(log.attempts[10].attempt == 11);
    CHECK(log.attempts[10].guidance.empty());
    CHECK(log.attempts[9].guidance == "Look at the error line.");
    CHECK(std::string(f.code()) == "GenerationFailure");
    CHECK(seen == log.sequence());
  }
  CHECK(ep.calls(Role::Coder) == 11);
  CHECK(ep.calls(Role::Debugger) == 10);

  GenerationOptions small;
  small.trial_max = 2;
  ScriptedEndpoint again = with_defaults(ScriptedEndpoint{}.add_text(Role::Coder, std::nullopt, kBroken[1].second));
  CHECK_THROWS_AS(generate_policy(wb, kOnOffQuery, 4000, 4200, again, small), GenerationFailure);
  CHECK(again.calls(Role::Coder) == 3);
  small.trial_max = 0;
  CHECK_THROWS_AS(generate_policy(wb, kOnOffQuery, 4000, 4200, again, small), ConfigError);
}

TEST_CASE("refinement requests carry the previous code, error and guidance") {
  const Workbench& wb = bundled_workbench();
  ScriptedEndpoint script;
  script.add_text(Role::Coder, 1, kBroken[0].second).add_text(Role::Coder, 2, kOnOff);
  script.add_text(Role::Debugger, 1, "Remove the second '='.");
  script = with_defaults(script);
  const Spy spy(script);
  const PolicyGeneration g = generate_policy(wb, kOnOffQuery, 4000, 4200, spy);
  CHECK(g.log.sequence() == std::vector{AttemptCategory::ParseError, AttemptCategory::Success});

  const auto coder = spy.of(Role::Coder);
  REQUIRE(coder.size() == 2);
  CHECK(coder[0].messages.size() == 1);
  CHECK(coder[0].messages[0].content.rfind(kOnOffQuery, 0) == 0);
  CHECK(coder[0].purpose == "policy");
  REQUIRE(coder[1].messages.size() == 3);
  CHECK(coder[1].messages[0].content == coder[0].messages[0].content);
  CHECK(coder[1].messages[1].role == "assistant");
  CHECK(coder[1].messages[1].content == sanitize_code(kBroken[0].second));
  CHECK(coder[1].messages[2].content.find("Remove the second '='.") != std::string::npos);
  CHECK(coder[1].messages[2].content.find(g.log.attempts[0].message) != std::string::npos);
  CHECK(coder[1].attempt == 2);

  const auto dbg = spy.of(Role::Debugger);
  REQUIRE(dbg.size() == 1);
  CHECK(dbg[0].messages[0].content.rfind("Error: " + g.log.attempts[0].message, 0) == 0);
  CHECK(g.log.attempts[0].span.has_value());
  CHECK(g.log.attempts[0].guidance == "Remove the second '='.");
}

TEST_CASE("parse error, hallucination, then success") {
  const Workbench& wb = bundled_workbench();
  ScriptedEndpoint ep;
  ep.add_text(Role::Coder, 1, kBroken[0].second);
  ep.add_text(Role::Coder, 2, "policy p {\n  if error_h1 < 0 then\n    v1 = 8\n  else\n    v1 = 1\n  end\n  v2 = 8\n}");
  ep.add_text(Role::Coder, 3, "```\n" + std::string(kOnOff) + "```");
  ep = with_defaults(ep);
  const Spy spy(ep);
  const PolicyGeneration g = generate_policy(wb, kOnOffQuery, 4000, 4200, spy);
  CHECK(g.log.sequence() ==
        std::vector{AttemptCategory::ParseError, AttemptCategory::Hallucination, AttemptCategory::Success});
  CHECK(g.log.attempts[1].message.rfind(
            "The trajectory does not faithfully follow the user's intention because", 0) == 0);
  CHECK(spy.of(Role::Evaluator).empty());
  CHECK(g.source == sanitize_code(kOnOff));

  const TransitionMatrix m = error_transition_matrix({g.log});
  CHECK(m.at("Start", "ParseError") == 1);
  CHECK(m.at("ParseError", "Hallucination") == 1);
  CHECK(m.at("Hallucination", "Success") == 1);
  CHECK(m.total() == 3);
}

TEST_CASE("mock coder writes the on-off policy on the first try") {
  const Workbench& wb = bundled_workbench();
  const HeuristicEndpoint mock;
  const Spy spy(mock);
  const PolicyGeneration g = generate_policy(wb, kOnOffQuery, 4000, 4200, spy);
  CHECK(g.log.attempt_count == 1);
  CHECK(g.log.sequence() == std::vector{AttemptCategory::Success});
  CHECK(spy.of(Role::Evaluator).empty());
  CHECK(dsl::structurally_equal(*g.program, dsl::compile(kOnOff)));

  const CfResult& r = *g.result.cf;
  const Trajectory& cf = r.counterfactual;
  REQUIRE(r.interval.size() == 10);
  for (std::size_t t = r.interval.begin; t < r.interval.end; ++t) {
    CAPTURE(t);
    const std::size_t i = t - cf.start_step;
    const auto& obs = cf.observations[i].values;
    CHECK(cf.actions[i][0] == (obs[4] < 0.0 ? 8.0 : 1.0));
    CHECK(cf.actions[i][1] == (obs[5] < 0.0 ? 8.0 : 1.0));
  }
}

TEST_CASE("coder refusals and debugger outages") {
  const Workbench& wb = bundled_workbench();
  CHECK_THROWS_AS(generate_policy(wb, "Use a PID controller with kp = 2", 4000, 4200, HeuristicEndpoint{}),
                  OutOfScopeQuery);
  CHECK_THROWS_AS(generate_policy(wb, "Be nicer to the pumps", 4000, 4200, HeuristicEndpoint{}), OutOfScopeQuery);
  CHECK_THROWS_AS(generate_policy(wb, kOnOffQuery, 4000, 4210, HeuristicEndpoint{}), IntervalOutOfRange);

  ScriptedEndpoint ep;
  ep.add_text(Role::Coder, 1, kBroken[2].second).add_text(Role::Coder, 2, kOnOff);
  ep.add_error(Role::Debugger, std::nullopt, "timeout");
  const PolicyGeneration g = generate_policy(wb, kOnOffQuery, 4000, 4200, ep);
  CHECK(g.log.success);
  CHECK(g.log.attempts[0].guidance.empty());

  ScriptedEndpoint quiet;
  quiet.add_text(Role::Coder, 1, kBroken[2].second).add_text(Role::Coder, 2, kOnOff);
  GenerationOptions o;
  o.use_debugger = false;
  CHECK(generate_policy(wb, kOnOffQuery, 4000, 4200, quiet, o).log.success);
  CHECK(quiet.calls(Role::Debugger) == 0);

  ScriptedEndpoint dead;
  dead.add_error(Role::Coder, std::nullopt, "connection reset");
  CHECK_THROWS_AS(generate_policy(wb, kOnOffQuery, 4000, 4200, dead), EndpointError);
}

// ---- fidelity ------------------------------------------------------------------------------

TEST_CASE("evaluate_fidelity") {
  const Workbench& wb = bundled_workbench();
  const PromptLibrary& prompts = PromptLibrary::default_library();
  const auto program = [](const std::string& src) { return std::make_shared<const dsl::Program>(dsl::compile(src)); };
  const auto run = [&](const std::shared_ptr<const dsl::Program>& p) {
    return *run_counterfactual(wb, CfSpec::policy(4000, 4200, p)).cf;
  };
  ScriptedEndpoint accept;
  accept.add_text(Role::Evaluator, std::nullopt, "The trajectory\nmatches.");

  SUBCASE("empty trajectory") {
    const auto p = program(kOnOff);
    const FidelityVerdict v = evaluate_fidelity(*p, kOnOffQuery, nullptr, accept, wb.params(), prompts);
    CHECK_FALSE(v.accepted);
    CHECK(v.structural);
    CHECK(accept.calls(Role::Evaluator) == 0);
  }
  SUBCASE("on-off accepted structurally") {
    const auto p = program(kOnOff);
    const CfResult r = run(p);
    const FidelityVerdict v = evaluate_fidelity(*p, kOnOffQuery, &r, accept, wb.params(), prompts);
    CHECK(v.accepted);
    CHECK(v.structural);
    CHECK_FALSE(v.consumed_llm);
  }
  SUBCASE("ignoring error_h2 is a hallucination") {
    const auto p = program("policy p { if error_h1 < 0 then v1 = 8 else v1 = 1 end  if error_h1 < 0 then v2 = 8 else v2 = 1 end }");
    const CfResult r = run(p);
    const FidelityVerdict v = evaluate_fidelity(*p, kOnOffQuery, &r, accept, wb.params(), prompts);
    CHECK_FALSE(v.accepted);
    CHECK(v.structural);
    CHECK(v.reason.rfind("The trajectory does not faithfully follow the user's intention because", 0) == 0);
    CHECK(v.reason.find("error_h2") != std::string::npos);
  }
  SUBCASE("free-text intent goes to the evaluator") {
    const auto p = program("policy p { v1 = prev_v1 v2 = prev_v2 }");
    const CfResult r = run(p);
    const std::string intent = "Freeze both pumps at their last voltages.";
    const Spy spy(accept);
    const FidelityVerdict v = evaluate_fidelity(*p, intent, &r, spy, wb.params(), prompts, 3);
    CHECK(v.accepted);
    CHECK(v.consumed_llm);
    CHECK_FALSE(v.structural);
    CHECK(v.reason == "The trajectory matches.");
    const auto reqs = spy.of(Role::Evaluator);
    REQUIRE(reqs.size() == 1);
    CHECK(reqs[0].attempt == 3);
    CHECK(reqs[0].messages[0].content.find(trajectory_summary(r)) != std::string::npos);

    ScriptedEndpoint reject;
    reject.add_tool(Role::Evaluator, std::nullopt, ToolCall{"raise_error", {{"message", "v2 moves"}}});
    const FidelityVerdict no = evaluate_fidelity(*p, intent, &r, reject, wb.params(), prompts);
    CHECK_FALSE(no.accepted);
    CHECK(no.reason == "v2 moves");

    ScriptedEndpoint down;
    down.add_error(Role::Evaluator, std::nullopt, "503");
    const FidelityVerdict off = evaluate_fidelity(*p, intent, &r, down, wb.params(), prompts);
    CHECK_FALSE(off.accepted);
    CHECK(off.reason.rfind("evaluator unavailable", 0) == 0);
  }
  SUBCASE("partial intent checks the stated pump and asks about the other") {
    const std::string intent = "v1 = 9.0 whenever h1 is below 0.15, and v1 = 1.0 otherwise, v2 free.";
    const auto good = program("policy p { if h1 < 0.15 then v1 = 9 else v1 = 1 end v2 = prev_v2 }");
    const CfResult r = run(good);
    const FidelityVerdict v = evaluate_fidelity(*good, intent, &r, accept, wb.params(), prompts);
    CHECK(v.accepted);
    CHECK(v.consumed_llm);
    const auto bad = program("policy p { v1 = 9 v2 = prev_v2 }");
    const CfResult rb = run(bad);
    CHECK_FALSE(evaluate_fidelity(*bad, intent, &rb, accept, wb.params(), prompts).accepted);
  }
}

TEST_CASE("trajectory summary lists every interval step") {
  const Workbench& wb = bundled_workbench();
  const auto p = std::make_shared<const dsl::Program>(dsl::compile(kOnOff));
  const CfResult r = *run_counterfactual(wb, CfSpec::policy(4000, 4200, p)).cf;
  const std::string s = trajectory_summary(r);
  CHECK(s.find("interval: 4000 to 4200 s (10 steps)") != std::string::npos);
  CHECK(s.find("\n4180 ") != std::string::npos);
  CHECK(s.find("\n4200 ") != std::string::npos);
}

// ---- transition matrix -------------------------------------------------------------------------

TEST_CASE("transition matrix: counting rules") {
  CHECK(error_transition_matrix({}).total() == 0);

  const auto m = error_transition_matrix({log_of({AttemptCategory::NameError, AttemptCategory::NameError,
                                                  AttemptCategory::TypeError, AttemptCategory::Success}),
                                          log_of({AttemptCategory::Success})});
  CHECK(m.at("Start", "NameError") == 1);
  CHECK(m.at("Start", "Success") == 1);
  CHECK(m.at("NameError", "NameError") == 1);
  CHECK(m.at("NameError", "TypeError") == 1);
  CHECK(m.at("TypeError", "Success") == 1);
  CHECK(m.total() == 5);
  CHECK_THROWS_AS(m.at("Success", "Start"), ConfigError);

  std::vector<AttemptCategory> fail(11, AttemptCategory::Hallucination);
  fail.push_back(AttemptCategory::Failure);
  const auto f = error_transition_matrix({log_of(fail)});
  CHECK(f.at("Start", "Hallucination") == 1);
  CHECK(f.at("Hallucination", "Hallucination") == 10);
  CHECK(f.at("Hallucination", "Failure") == 1);
  CHECK(f.total() == 12);

  const json j = m.to_json();
  CHECK(j.at("rows").size() == 7);
  CHECK(j.at("columns").size() == 8);
  CHECK(j.at("rows")[0] == "Start");
  CHECK(m.table().find("Start") != std::string::npos);
}

TEST_CASE("transition matrix: flow conservation") {
  std::vector<IterationLog> logs;
  for (std::size_t k = 0; k < 12; ++k) {
    std::vector<AttemptCategory> seq;
    for (std::size_t i = 0; i < k % 5; ++i) seq.push_back(static_cast<AttemptCategory>((k + i) % 6));
    seq.push_back(k % 4 == 3 ? AttemptCategory::Failure : AttemptCategory::Success);
    logs.push_back(log_of(seq));
  }
  const TransitionMatrix m = error_transition_matrix(logs);
  CHECK(m.row_sum(0) == logs.size());
  CHECK(m.column_sum(AttemptCategory::Success) + m.column_sum(AttemptCategory::Failure) == logs.size());
  for (std::size_t c = 0; c < 6; ++c) {
    CAPTURE(c);
    CHECK(m.column_sum(static_cast<AttemptCategory>(c)) == m.row_sum(c + 1));
  }
}

TEST_CASE("iteration log json round trip") {
  IterationLog log = log_of({AttemptCategory::ParseError, AttemptCategory::Success});
  log.task = "cf_policy";
  log.intent = kOnOffQuery;
  log.attempts[0].span = dsl::Span{2, 8};
  log.attempts[0].message = "expected expression";
  const IterationLog back = IterationLog::from_json(log.to_json());
  CHECK(back.to_json() == log.to_json());
  CHECK(back.attempts[0].span == dsl::Span{2, 8});
  CHECK_THROWS_AS(IterationLog::from_json(json{{"attempts", {{{"category", "Oops"}}}}}), ConfigError);
}

// ---- campaign -------------------------------------------------------------------------------------

TEST_CASE("scripted campaign reproduces the frozen transition matrix") {
  const Workbench& wb = bundled_workbench();
  const ScriptedCampaign c = ScriptedCampaign::load(source_path("data/cfp_campaign.json"));
  REQUIRE(c.queries.size() == 10);
  REQUIRE(c.trials() == 7);
  const CampaignReport rep =
      run_cfp_campaign(wb, c.queries, c.trials(), [&](std::size_t q, std::size_t t) { return c.endpoint(q, t); });
  for (std::size_t q = 0; q < c.queries.size(); ++q) {
    for (std::size_t t = 0; t < c.trials(); ++t) {
      CAPTURE(c.queries[q].id);
      CAPTURE(t);
      std::vector<std::string> got;
      for (AttemptCategory a : rep.logs[q][t].sequence()) got.push_back(to_string(a));
      CHECK(got == c.plans[q][t]);
    }
  }
  for (std::size_t r = 0; r < TransitionMatrix::kRows; ++r) {
    CAPTURE(TransitionMatrix::row_name(r));
    for (std::size_t col = 0; col < kAttemptCategoryCount; ++col) CHECK(rep.matrix.counts[r][col] == kCampaignMatrix[r][col]);
  }
  CHECK(rep.failures() == 2);
  CHECK(rep.matrix.at("Start", "Success") == 33);
  CHECK(rep.to_json().at("transition_matrix").at("counts")[0][6] == 33);
  CHECK(rep.table().find("total failures 2 of 70") != std::string::npos);
}

TEST_CASE("scripted campaign file validation") {
  const json base = {{"catalogue", {{"ParseError", "policy p { v1 = = 1 }"}}},
                     {"queries",
                      {{{"id", "x"}, {"description", "d"}, {"solution", "policy p { v1 = 1 v2 = 1 }"},
                        {"plans", json::array({json::array({"ParseError", "Success"})})}}}}};
  const ScriptedCampaign ok = ScriptedCampaign::from_json(base);
  CHECK(ok.trials() == 1);
  CHECK(ok.queries[0].t_start == 4000.0);

  json open_ended = base;
  open_ended["queries"][0]["plans"] = json::array({json::array({"ParseError"})});
  CHECK_THROWS_AS(ScriptedCampaign::from_json(open_ended), ConfigError);
  json missing = base;
  missing["queries"][0]["plans"] = json::array({json::array({"NameError", "Success"})});
  CHECK_THROWS_AS(ScriptedCampaign::from_json(missing), ConfigError);
  json unknown = base;
  unknown["catalogue"]["Typo"] = "x";
  CHECK_THROWS_AS(ScriptedCampaign::from_json(unknown), ConfigError);
  CHECK_THROWS_AS(ScriptedCampaign::load("/nonexistent.json"), IoError);
}

TEST_CASE("campaign seeds differ per query and trial") {
  const Workbench& wb = bundled_workbench();
  std::vector<std::uint64_t> seeds;
  std::mutex mu;
  class SeedSpy : public LlmEndpoint {
   public:
    SeedSpy(std::vector<std::uint64_t>& s, std::mutex& m) : s_(s), m_(m) {}
    Completion complete(const CompletionRequest& r) const override {
      std::lock_guard<std::mutex> lock(m_);
      s_.push_back(r.seed);
      return HeuristicEndpoint{}.complete(r);
    }
    std::string name() const override { return "seeds"; }

   private:
    std::vector<std::uint64_t>& s_;
    std::mutex& m_;
  };
  GenerationOptions o;
  o.seed = 100;
  const CampaignReport rep = run_cfp_campaign(wb, {{"a", kOnOffQuery, 4000, 4200}, {"b", kOnOffQuery, 1000, 1200}}, 3,
                                              [&](std::size_t, std::size_t) {
                                                return std::make_shared<SeedSpy>(seeds, mu);
                                              },
                                              o);
  CHECK(rep.failures() == 0);
  CHECK(seeds == std::vector<std::uint64_t>{100, 101, 102, 103, 104, 105});
}

// ---- generated reward decomposition -------------------------------------------------------------------

TEST_CASE("generated decomposition") {
  const TankEnv env{EnvParams{}};
  SUBCASE("mock coder reproduces the builtin split") {
    const DecompositionGeneration g = generated_decomposition(env, plant_reward_source(), HeuristicEndpoint{});
    CHECK(g.log.attempt_count == 1);
    CHECK(g.spec.names == builtin_decomposition().names);
    CHECK(g.spec.source == RewardComponentSpec::Source::Generated);
    CHECK(g.log.task == "reward_decomposition");
  }
  SUBCASE("errors map to categories, then success") {
    const RewardComponentSpec b = builtin_decomposition();
    const std::string good = dsl::pretty_print(b.program) + "\n---\n" + json(b.names).dump();
    ScriptedEndpoint ep;
    ep.add_text(Role::Coder, 1, dsl::pretty_print(b.program));
    ep.add_text(Role::Coder, 2, dsl::pretty_print(b.program) + "\n---\n[\"a\", ");
    ep.add_text(Role::Coder, 3, dsl::pretty_print(b.program) + "\n---\n[\"only\"]");
    ep.add_text(Role::Coder, 4,
                "reward r { -(h1 - sp_h1) * (h1 - sp_h1), -(h2 - sp_h2) * (h2 - sp_h2) }\n---\n[\"a\", \"b\"]");
    ep.add_text(Role::Coder, 5, "reward r { h9, h1 }\n---\n[\"a\", \"b\"]");
    ep.add_text(Role::Coder, 6, "```\n" + good + "\n```");
    ep = with_defaults(ep);
    const DecompositionGeneration g = generated_decomposition(env, plant_reward_source(), ep);
    CHECK(g.log.sequence() == std::vector{AttemptCategory::ParseError, AttemptCategory::ParseError,
                                          AttemptCategory::TypeError, AttemptCategory::Hallucination,
                                          AttemptCategory::NameError, AttemptCategory::Success});
    CHECK(ep.calls(Role::Evaluator) == 0);
  }
  SUBCASE("persistent infidelity fails") {
    ScriptedEndpoint ep;
    ep.add_text(Role::Coder, std::nullopt, "reward r { -h1, -h2 }\n---\n[\"a\", \"b\"]");
    GenerationOptions o;
    o.trial_max = 3;
    try {
      generated_decomposition(env, plant_reward_source(), with_defaults(ep), o);
      FAIL("expected GenerationFailure");
    } catch (const GenerationFailure& f) {
      CHECK(f.log().attempt_count == 4);
      CHECK(f.log().attempts.back().category == AttemptCategory::Failure);
    }
  }
}
