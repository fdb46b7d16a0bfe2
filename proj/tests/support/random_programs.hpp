#pragma once

// Seeded generator of well-typed policy programs for round-trip and sandbox
// properties. Every program assigns v1 and v2 first, so later reads of the
// action variables are always definitely assigned.

#include <string>

#include "tankxrl/dsl.hpp"
#include "tankxrl/util.hpp"

namespace tankxrl::testing {

class ProgramGenerator {
 public:
  explicit ProgramGenerator(std::uint64_t seed) : rng_(seed) {}

  dsl::Program program(const std::string& name = "gen") {
    dsl::Program p;
    p.name = name;
    inputs_only_ = true;
    p.rules.push_back(assign(0, 0));
    p.rules.push_back(assign(1, 0));
    inputs_only_ = false;
    const std::size_t extra = pick(5);
    for (std::size_t i = 0; i < extra; ++i) p.rules.push_back(stmt(0));
    return p;
  }

  dsl::ExprPtr numeric(int depth) {
    const std::size_t choice = depth >= 3 ? pick(2) : pick(8);
    switch (choice) {
      case 0: return dsl::make_number(literal());
      case 1: return dsl::make_var(static_cast<dsl::Var>(pick(inputs_only_ ? dsl::kInputVarCount : dsl::kVarCount)));
      case 2: return dsl::make_unary(dsl::UnaryOp::Neg, numeric(depth + 1));
      case 3:
      case 4: {
        static constexpr dsl::BinaryOp ops[] = {dsl::BinaryOp::Add, dsl::BinaryOp::Sub, dsl::BinaryOp::Mul,
                                                dsl::BinaryOp::Div};
        return dsl::make_binary(ops[pick(4)], numeric(depth + 1), numeric(depth + 1));
      }
      case 5: {
        std::vector<dsl::ExprPtr> args;
        const std::size_t n = 2 + pick(2);
        for (std::size_t i = 0; i < n; ++i) args.push_back(numeric(depth + 1));
        return dsl::make_call(pick(2) ? dsl::Builtin::Min : dsl::Builtin::Max, std::move(args));
      }
      case 6: return dsl::make_call(dsl::Builtin::Abs, {numeric(depth + 1)});
      default: {
        const double lo = literal();
        return dsl::make_call(dsl::Builtin::Clip,
                              {numeric(depth + 1), dsl::make_number(lo), dsl::make_number(lo + 10.0)});
      }
    }
  }

  dsl::ExprPtr boolean(int depth) {
    const std::size_t choice = depth >= 3 ? 0 : pick(4);
    switch (choice) {
      case 0: {
        static constexpr dsl::BinaryOp ops[] = {dsl::BinaryOp::Lt, dsl::BinaryOp::Le, dsl::BinaryOp::Gt,
                                                dsl::BinaryOp::Ge, dsl::BinaryOp::Eq, dsl::BinaryOp::Ne};
        return dsl::make_binary(ops[pick(6)], numeric(depth + 1), numeric(depth + 1));
      }
      case 1: return dsl::make_binary(dsl::BinaryOp::And, boolean(depth + 1), boolean(depth + 1));
      case 2: return dsl::make_binary(dsl::BinaryOp::Or, boolean(depth + 1), boolean(depth + 1));
      default: return dsl::make_unary(dsl::UnaryOp::Not, boolean(depth + 1));
    }
  }

  /// Random input values in roughly physical ranges.
  dsl::EvalContext context() {
    dsl::EvalContext ctx;
    for (std::size_t i = 0; i < 4; ++i) ctx.values[i] = rng_.uniform(0.0, 0.6);
    for (std::size_t i = 4; i < 6; ++i) ctx.values[i] = rng_.uniform(-0.5, 0.5);
    for (std::size_t i = 6; i < 8; ++i) ctx.values[i] = rng_.uniform(0.1, 0.5);
    for (std::size_t i = 8; i < 10; ++i) ctx.values[i] = rng_.uniform(0.1, 10.0);
    return ctx;
  }

 private:
  Rng rng_;
  bool inputs_only_ = false;

  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_.next() % n); }

  double literal() {
    switch (pick(5)) {
      case 0: return static_cast<double>(pick(11));
      case 1: return static_cast<double>(pick(1000)) / 100.0;
      case 2: return rng_.uniform(0.0, 10.0);
      case 3: return rng_.uniform(0.0, 1.0) * 1e-7;
      default: return rng_.uniform(0.0, 1e6);
    }
  }

  dsl::Stmt assign(std::size_t target, int depth) {
    dsl::Stmt s;
    s.kind = dsl::Stmt::Kind::Assign;
    s.target = target;
    s.value = numeric(depth);
    return s;
  }

  std::vector<dsl::Stmt> body(int depth) {
    std::vector<dsl::Stmt> out;
    const std::size_t n = 1 + pick(2);
    for (std::size_t i = 0; i < n; ++i) out.push_back(stmt(depth + 1));
    return out;
  }

  dsl::Stmt stmt(int depth) {
    if (depth >= 2 || pick(3) != 0) return assign(pick(2), 0);
    dsl::Stmt s;
    s.kind = dsl::Stmt::Kind::If;
    const std::size_t arms = 1 + pick(3);
    for (std::size_t i = 0; i < arms; ++i) s.branches.push_back({boolean(0), body(depth)});
    if (pick(2)) s.else_body = body(depth);
    return s;
  }
};

}  // namespace tankxrl::testing
