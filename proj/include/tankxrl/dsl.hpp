#pragma once

// Rule-based counterfactual policy language.
//
//   program   := "policy" IDENT "{" stmt+ "}"
//   stmt      := assign | ifblock
//   assign    := ("v1" | "v2") "=" expr
//   ifblock   := "if" expr "then" stmt+ ("elif" expr "then" stmt+)* ("else" stmt+)? "end"
//   reward    := "reward" IDENT "{" expr ("," expr)* ","? "}"
//   expr      := or
//   or        := and ("or" and)*
//   and       := not ("and" not)*
//   not       := "not" not | cmp
//   cmp       := add (("<" | "<=" | ">" | ">=" | "==" | "!=") add)?
//   add       := mul (("+" | "-") mul)*
//   mul       := unary (("*" | "/") unary)*
//   unary     := "-" unary | primary
//   primary   := NUMBER | VAR | BUILTIN "(" expr ("," expr)* ")" | "(" expr ")"
//
// VAR is one of h1..h4, error_h1, error_h2, sp_h1, sp_h2, prev_v1, prev_v2,
// v1, v2. BUILTIN is one of min, max, abs, clip. "#" starts a comment that
// runs to the end of the line.

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tankxrl/env.hpp"
#include "tankxrl/error.hpp"

namespace tankxrl::dsl {

enum class ErrorCategory { ParseError, NameError, TypeError, RuntimeError, IncompleteAssignment };

std::string_view to_string(ErrorCategory c);

struct Span {
  std::size_t line = 1;
  std::size_t col = 1;
  bool operator==(const Span&) const = default;
};

class DslError : public Error {
 public:
  DslError(ErrorCategory category, const std::string& message, Span span);

  ErrorCategory category() const { return category_; }
  const Span& span() const { return span_; }
  const std::string& detail() const { return detail_; }
  /// {category, message, line, col}
  nlohmann::json to_json() const;

 private:
  ErrorCategory category_;
  Span span_;
  std::string detail_;
};

enum class Var : std::size_t { H1, H2, H3, H4, ErrH1, ErrH2, SpH1, SpH2, PrevV1, PrevV2, V1, V2 };
inline constexpr std::size_t kVarCount = 12;
/// Variables a context supplies; v1/v2 are produced by the program itself.
inline constexpr std::size_t kInputVarCount = 10;

std::string_view var_name(Var v);
std::optional<Var> var_from_name(std::string_view name);

enum class UnaryOp { Neg, Not };
enum class BinaryOp { Add, Sub, Mul, Div, Lt, Le, Gt, Ge, Eq, Ne, And, Or };
enum class Builtin { Min, Max, Abs, Clip };

std::string_view to_string(BinaryOp op);
std::string_view to_string(Builtin fn);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Number, Variable, Unary, Binary, Call };
  Kind kind = Kind::Number;
  double number = 0.0;
  Var var = Var::H1;
  UnaryOp unary = UnaryOp::Neg;
  BinaryOp binary = BinaryOp::Add;
  Builtin fn = Builtin::Min;
  std::vector<ExprPtr> args;  // operand(s) / call arguments
  Span span;
};

ExprPtr make_number(double v, Span span = {});
ExprPtr make_var(Var v, Span span = {});
ExprPtr make_unary(UnaryOp op, ExprPtr operand, Span span = {});
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs, Span span = {});
ExprPtr make_call(Builtin fn, std::vector<ExprPtr> args, Span span = {});

struct Stmt;

struct Branch {
  ExprPtr cond;
  std::vector<Stmt> body;
};

struct Stmt {
  enum class Kind { Assign, If };
  Kind kind = Kind::Assign;
  std::size_t target = 0;  // 0 -> v1, 1 -> v2
  ExprPtr value;
  std::vector<Branch> branches;  // if + elif arms
  std::optional<std::vector<Stmt>> else_body;
  Span span;
};

struct Program {
  std::string name;
  std::vector<Stmt> rules;
  /// Variables read by any expression (assignment targets are not reads).
  std::set<Var> referenced_vars;
};

/// Component list of a decomposed reward.
struct RewardProgram {
  std::string name;
  std::vector<ExprPtr> terms;
  std::set<Var> referenced_vars;
};

/// Lexing, syntax and name resolution. Throws DslError (ParseError, NameError).
Program parse(std::string_view source);
RewardProgram parse_reward(std::string_view source);

/// Type rules and definite assignment of v1/v2 on every control path.
/// Throws DslError (TypeError, IncompleteAssignment).
void typecheck(const Program& program);
void typecheck(const RewardProgram& program);

/// parse + typecheck.
Program compile(std::string_view source);
RewardProgram compile_reward(std::string_view source);

/// Values of the ten input variables, indexed by Var, plus the clip box.
struct EvalContext {
  std::array<double, kInputVarCount> values{};
  Vec2 action_low{0.1, 0.1};
  Vec2 action_high{10.0, 10.0};

  double& operator[](Var v) { return values[static_cast<std::size_t>(v)]; }
  double operator[](Var v) const { return values[static_cast<std::size_t>(v)]; }
};

struct EvalStats {
  std::size_t statements_executed = 0;
};

/// Runs the rules top to bottom; later assignments win. The result is clipped
/// to the action box. Throws DslError(RuntimeError) on division by zero or a
/// non-finite intermediate.
ControlInput evaluate(const Program& program, const EvalContext& ctx, EvalStats* stats = nullptr);

/// Expression values with v1/v2 readable (reward components).
struct ExprContext {
  std::array<double, kVarCount> values{};
  double& operator[](Var v) { return values[static_cast<std::size_t>(v)]; }
  double operator[](Var v) const { return values[static_cast<std::size_t>(v)]; }
};

double evaluate_numeric(const Expr& expr, const ExprContext& ctx);
std::vector<double> evaluate_terms(const RewardProgram& program, const ExprContext& ctx);

std::string to_source(const Expr& expr);
std::string pretty_print(const Program& program);
std::string pretty_print(const RewardProgram& program);

bool structurally_equal(const Expr& a, const Expr& b);
bool structurally_equal(const Program& a, const Program& b);
bool structurally_equal(const RewardProgram& a, const RewardProgram& b);

/// Total number of statements; an upper bound on statements executed.
std::size_t statement_count(const Program& program);

}  // namespace tankxrl::dsl
