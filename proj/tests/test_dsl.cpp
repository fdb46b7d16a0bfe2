#include <doctest.h>

#include "support/random_programs.hpp"
#include "tankxrl/dsl.hpp"

using namespace tankxrl;
using namespace tankxrl::dsl;

namespace {

const char* kOnOff =
    "policy onoff { if error_h1 < 0.0 then v1 = 8.0 else v1 = 1.0 end  "
    "if error_h2 < 0.0 then v2 = 8.0 else v2 = 1.0 end }";

DslError error_of(const std::string& src) {
  try {
    compile(src);
  } catch (const DslError& e) {
    return e;
  }
  FAIL("expected a DslError for: " << src);
  return DslError(ErrorCategory::ParseError, "", {});
}

EvalContext ctx_with(std::initializer_list<std::pair<Var, double>> values) {
  EvalContext ctx;
  for (auto [v, x] : values) ctx[v] = x;
  return ctx;
}

}  // namespace

TEST_CASE("on-off program parses, checks and evaluates") {
  const Program p = compile(kOnOff);
  CHECK(p.name == "onoff");
  CHECK(p.rules.size() == 2);
  CHECK(p.referenced_vars == std::set<Var>{Var::ErrH1, Var::ErrH2});

  CHECK(evaluate(p, ctx_with({{Var::ErrH1, -0.1}, {Var::ErrH2, 0.1}})) == ControlInput{8.0, 1.0});
  CHECK(evaluate(p, ctx_with({{Var::ErrH1, 0.1}, {Var::ErrH2, -0.1}})) == ControlInput{1.0, 8.0});
  CHECK(evaluate(p, ctx_with({{Var::ErrH1, 0.0}, {Var::ErrH2, 0.0}})) == ControlInput{1.0, 1.0});
}

TEST_CASE("name errors carry the span") {
  const DslError e = error_of("policy p { v1 = h9 v2 = 1 }");
  CHECK(e.category() == ErrorCategory::NameError);
  CHECK(e.detail().find("h9") != std::string::npos);
  CHECK(e.span() == Span{1, 17});

  const DslError multi = error_of("policy p {\n  v1 = 1\n  v2 = foo + 2\n}");
  CHECK(multi.category() == ErrorCategory::NameError);
  CHECK(multi.span() == Span{3, 8});

  CHECK(error_of("policy p { v1 = sqrt(2) v2 = 1 }").category() == ErrorCategory::NameError);
  CHECK(error_of("policy p { v1 = min v2 = 1 }").category() == ErrorCategory::NameError);
  CHECK(error_of("policy p { v3 = 1 v1 = 1 v2 = 1 }").category() == ErrorCategory::NameError);

  const nlohmann::json j = e.to_json();
  CHECK(j["category"] == "NameError");
  CHECK(j["line"] == 1);
  CHECK(j["col"] == 17);
  CHECK(j["message"].get<std::string>().find("h9") != std::string::npos);
}

TEST_CASE("parse errors") {
  for (const char* src : {
           "policy { v1 = 1 v2 = 1 }",
           "policy p v1 = 1 v2 = 1",
           "policy p { v1 = 1 v2 = 1",
           "policy p { }",
           "policy p { v1 = 1 v2 = 1 } extra",
           "policy p { v1 = (1 v2 = 1 }",
           "policy p { v1 = 1 + v2 = 1 }",
           "policy p { if h1 < 1 v1 = 1 end v2 = 1 }",
           "policy p { if h1 < 1 then else v1 = 1 end v2 = 1 }",
           "policy p { if h1 < 1 then v1 = 1 v2 = 1 }",
           "policy p { v1 = 1 < 2 < 3 v2 = 1 }",
           "policy p { v1 = 1 v2 = 1 ; }",
           "policy p { v1 = 1e v2 = 1 }",
           "policy p { v1 = 2x v2 = 1 }",
           "policy p { h1 = 1 v1 = 1 v2 = 1 }",
           "policy p { v1 = min() v2 = 1 }",
           "policy p { v1 = then v2 = 1 }",
           "while x { }",
       }) {
    CAPTURE(src);
    CHECK(error_of(src).category() == ErrorCategory::ParseError);
  }
  const DslError e = error_of("policy p {\n  v1 = 1 $ 2\n  v2 = 1\n}");
  CHECK(e.category() == ErrorCategory::ParseError);
  CHECK(e.span() == Span{2, 10});
}

TEST_CASE("type errors") {
  for (const char* src : {
           "policy p { v1 = (h1 < 0.2) v2 = 1 }",
           "policy p { if h1 then v1 = 1 else v1 = 2 end v2 = 1 }",
           "policy p { v1 = not h1 v2 = 1 }",
           "policy p { v1 = h1 + (h2 < 1) v2 = 1 }",
           "policy p { if h1 < 1 and 2 then v1 = 1 else v1 = 2 end v2 = 1 }",
           "policy p { v1 = -(h1 < 1) v2 = 1 }",
           "policy p { v1 = abs(1, 2) v2 = 1 }",
           "policy p { v1 = clip(1, 2) v2 = 1 }",
           "policy p { v1 = min(1) v2 = 1 }",
           "policy p { v1 = max(1, h1 > 2) v2 = 1 }",
       }) {
    CAPTURE(src);
    CHECK(error_of(src).category() == ErrorCategory::TypeError);
  }
  const DslError e = error_of("policy p { v1 = (h1 < 0.2) v2 = 1 }");
  CHECK(e.span().col == 21);
}

TEST_CASE("all-paths assignment") {
  CHECK(error_of("policy p { v1 = 5.0 }").category() == ErrorCategory::IncompleteAssignment);
  CHECK_NOTHROW(compile("policy p { if h1 < 0.2 then v1 = 1 v2 = 2 else v1 = 3 v2 = 4 end }"));
  CHECK(error_of("policy p { if h1 < 0.2 then v1 = 1 end v2 = 2 }").category() ==
        ErrorCategory::IncompleteAssignment);
  CHECK(error_of("policy p { if h1 < 0.2 then v1 = 1 v2 = 1 elif h2 < 0.1 then v1 = 2 else v2 = 3 end }")
            .category() == ErrorCategory::IncompleteAssignment);
  CHECK_NOTHROW(compile(
      "policy p { v2 = 0 if h1 < 0.2 then v1 = 1 elif h2 < 0.1 then v1 = 2 else v1 = 3 end }"));
  CHECK_NOTHROW(compile("policy p { if h1 < 1 then v1 = 1 else v1 = 2 end if h2 < 1 then v2 = v1 else v2 = 0 end }"));

  const DslError read = error_of("policy p { v1 = v2 + 1 v2 = 1 }");
  CHECK(read.category() == ErrorCategory::IncompleteAssignment);
  CHECK(read.span() == Span{1, 17});
  CHECK(error_of("policy p { if h1 < 1 then v1 = 1 end v2 = v1 v1 = 0 }").category() ==
        ErrorCategory::IncompleteAssignment);
  CHECK(error_of("policy p { if v1 < 1 then v1 = 1 else v1 = 2 end v2 = 1 }").category() ==
        ErrorCategory::IncompleteAssignment);
}

TEST_CASE("runtime errors and clipping") {
  const Program div = compile("policy p { v1 = 1/ (h1 - h1) v2 = 1 }");
  try {
    evaluate(div, ctx_with({{Var::H1, 0.3}}));
    FAIL("expected RuntimeError");
  } catch (const DslError& e) {
    CHECK(e.category() == ErrorCategory::RuntimeError);
    CHECK(e.detail().find("division by zero") != std::string::npos);
  }
  const Program big = compile("policy p { v1 = 1e300 * 1e300 v2 = 1 }");
  CHECK_THROWS_AS(evaluate(big, {}), DslError);
  CHECK(evaluate(compile("policy p { v1 = clip(20, 0.1, 10) v2 = 0.05 }"), {}) == ControlInput{10, 0.1});
  CHECK(evaluate(compile("policy p { v1 = -3 v2 = 42 }"), {}) == ControlInput{0.1, 10});
  const Program bad_clip = compile("policy p { v1 = clip(1, 5, 2) v2 = 1 }");
  CHECK_THROWS_AS(evaluate(bad_clip, {}), DslError);
}

TEST_CASE("semantics: precedence, later assignments and elif order") {
  auto v1_of = [](const std::string& expr, EvalContext ctx = {}) {
    return evaluate(compile("policy p { v1 = " + expr + " v2 = 1 }"), ctx)[0];
  };
  CHECK(v1_of("1 + 2 * 3") == 7.0);
  CHECK(v1_of("(1 + 2) * 3") == 9.0);
  CHECK(v1_of("8 - 4 - 2") == 2.0);
  CHECK(v1_of("8 / 4 / 2") == 1.0);
  CHECK(v1_of("--3") == 3.0);
  CHECK(v1_of("-2 * -3") == 6.0);
  CHECK(v1_of("max(1, 9, 3)") == 9.0);
  CHECK(v1_of("min(4, 2, 7)") == 2.0);
  CHECK(v1_of("abs(-4)") == 4.0);
  CHECK(v1_of(".5 + 1.5e0") == 2.0);
  CHECK(v1_of("prev_v1 + sp_h1", ctx_with({{Var::PrevV1, 3.0}, {Var::SpH1, 0.25}})) == 3.25);

  const Program later = compile("policy p { v1 = 2 v2 = 3 v1 = v2 + 1 }");
  CHECK(evaluate(later, {}) == ControlInput{4, 3});

  const Program arms = compile(
      "policy p {\n"
      "  # first true arm wins\n"
      "  if h1 > 0.5 then v1 = 1\n"
      "  elif h1 > 0.3 then v1 = 2\n"
      "  elif h1 > 0.1 then v1 = 3\n"
      "  else v1 = 4\n"
      "  end\n"
      "  v2 = 5\n"
      "}");
  CHECK(evaluate(arms, ctx_with({{Var::H1, 0.6}}))[0] == 1);
  CHECK(evaluate(arms, ctx_with({{Var::H1, 0.4}}))[0] == 2);
  CHECK(evaluate(arms, ctx_with({{Var::H1, 0.2}}))[0] == 3);
  CHECK(evaluate(arms, ctx_with({{Var::H1, 0.0}}))[0] == 4);

  const Program logic = compile(
      "policy p { if not (h1 < 0.2) and (h2 > 0.1 or h3 == 0) then v1 = 9 else v1 = 1 end v2 = 1 }");
  CHECK(evaluate(logic, ctx_with({{Var::H1, 0.3}, {Var::H2, 0.2}}))[0] == 9);
  CHECK(evaluate(logic, ctx_with({{Var::H1, 0.1}, {Var::H2, 0.2}}))[0] == 1);
  CHECK(evaluate(logic, ctx_with({{Var::H1, 0.3}, {Var::H2, 0.0}, {Var::H3, 0.0}}))[0] == 9);
  CHECK(evaluate(logic, ctx_with({{Var::H1, 0.3}, {Var::H2, 0.0}, {Var::H3, 0.1}}))[0] == 1);
}

TEST_CASE("pretty printing") {
  const Program p = compile(kOnOff);
  const std::string text = pretty_print(p);
  CHECK(text ==
        "policy onoff {\n"
        "  if error_h1 < 0 then\n"
        "    v1 = 8\n"
        "  else\n"
        "    v1 = 1\n"
        "  end\n"
        "  if error_h2 < 0 then\n"
        "    v2 = 8\n"
        "  else\n"
        "    v2 = 1\n"
        "  end\n"
        "}\n");
  CHECK(structurally_equal(compile(text), p));
  CHECK(pretty_print(parse(text)) == text);

  const Program commented = compile("policy c { # header\n v1 = 1 # one\n v2 = (2) # two\n}");
  CHECK(pretty_print(commented) == "policy c {\n  v1 = 1\n  v2 = 2\n}\n");

  CHECK(to_source(*compile("policy p { v1 = (1 - (2 - 3)) * -(h1 + 1) v2 = 1 }").rules[0].value) ==
        "(1 - (2 - 3)) * -(h1 + 1)");
  CHECK(to_source(*compile("policy p { if not (h1 < 1 or h2 < 1) and h3 >= 0 then v1 = 1 else v1 = 1 end v2 = 1 }")
                       .rules[0]
                       .branches[0]
                       .cond) == "not (h1 < 1 or h2 < 1) and h3 >= 0");
}

TEST_CASE("round trip on generated programs") {
  testing::ProgramGenerator gen(2024);
  for (int i = 0; i < 500; ++i) {
    const Program p = gen.program("g" + std::to_string(i));
    const std::string text = pretty_print(p);
    CAPTURE(text);
    const Program back = compile(text);
    REQUIRE(structurally_equal(back, p));
    CHECK(pretty_print(back) == text);
  }
}

TEST_CASE("sandbox and termination on generated programs") {
  testing::ProgramGenerator gen(77);
  std::size_t runtime_errors = 0;
  for (int i = 0; i < 500; ++i) {
    const Program p = compile(pretty_print(gen.program()));
    const std::string before = pretty_print(p);
    const EvalContext ctx = gen.context();
    const EvalContext copy = ctx;
    try {
      EvalStats stats;
      const ControlInput u = evaluate(p, ctx, &stats);
      CHECK(stats.statements_executed <= statement_count(p));
      CHECK(u[0] >= 0.1);
      CHECK(u[0] <= 10.0);
      CHECK(u[1] >= 0.1);
      CHECK(u[1] <= 10.0);
      CHECK(evaluate(p, ctx) == u);
    } catch (const DslError& e) {
      CHECK(e.category() == ErrorCategory::RuntimeError);
      ++runtime_errors;
    }
    CHECK(ctx.values == copy.values);
    CHECK(pretty_print(p) == before);
  }
  MESSAGE("runtime errors: " << runtime_errors << " / 500");
}

TEST_CASE("reward programs") {
  const RewardProgram r = compile_reward("reward split { -100 * (h1 - sp_h1) * (h1 - sp_h1), -(v1 - prev_v1), }");
  CHECK(r.terms.size() == 2);
  CHECK(r.referenced_vars.count(Var::V1) == 1);
  ExprContext ctx;
  ctx[Var::H1] = 0.5;
  ctx[Var::SpH1] = 0.4;
  ctx[Var::V1] = 0.3;
  ctx[Var::PrevV1] = 0.1;
  const auto values = evaluate_terms(r, ctx);
  CHECK(values[0] == doctest::Approx(-1.0));
  CHECK(values[1] == doctest::Approx(-0.2));
  CHECK(structurally_equal(compile_reward(pretty_print(r)), r));

  auto reward_error = [](const std::string& src) {
    try {
      compile_reward(src);
    } catch (const DslError& e) {
      return e.category();
    }
    FAIL("expected error");
    return ErrorCategory::ParseError;
  };
  CHECK(reward_error("reward r { }") == ErrorCategory::ParseError);
  CHECK(reward_error("reward r { h1 < 1, h2 }") == ErrorCategory::TypeError);
  CHECK(reward_error("reward r { h5 }") == ErrorCategory::NameError);
  CHECK(reward_error("policy r { h1 }") == ErrorCategory::ParseError);
}

TEST_CASE("variable names") {
  for (std::size_t i = 0; i < kVarCount; ++i) {
    const Var v = static_cast<Var>(i);
    CHECK(var_from_name(var_name(v)) == v);
  }
  CHECK(!var_from_name("h5").has_value());
}
