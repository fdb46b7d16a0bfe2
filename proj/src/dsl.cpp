#include "tankxrl/dsl.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>

namespace tankxrl::dsl {

namespace {

constexpr std::array<std::string_view, kVarCount> kVarNames{
    "h1", "h2", "h3", "h4", "error_h1", "error_h2", "sp_h1", "sp_h2", "prev_v1", "prev_v2", "v1", "v2"};

std::string format_message(ErrorCategory c, const std::string& msg, Span s) {
  return std::string(to_string(c)) + " at " + std::to_string(s.line) + ":" + std::to_string(s.col) + ": " + msg;
}

// ---------------------------------------------------------------- lexer

enum class Tok {
  Ident,
  Number,
  LBrace,
  RBrace,
  LParen,
  RParen,
  Comma,
  Assign,
  Plus,
  Minus,
  Star,
  Slash,
  Lt,
  Le,
  Gt,
  Ge,
  EqEq,
  Ne,
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  Span span;
};

std::string describe(const Token& t) {
  if (t.kind == Tok::End) return "end of input";
  return "'" + t.text + "'";
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  std::size_t line = 1;
  std::size_t col = 1;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };

  while (i < src.size()) {
    const char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    Token t;
    t.span = {line, col};
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && is_ident(src[j])) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
      out.push_back(std::move(t));
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < src.size() && is_digit(src[i + 1]))) {
      std::size_t j = i;
      while (j < src.size() && is_digit(src[j])) ++j;
      if (j < src.size() && src[j] == '.') {
        ++j;
        while (j < src.size() && is_digit(src[j])) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && is_digit(src[k])) {
          while (k < src.size() && is_digit(src[k])) ++k;
          j = k;
        } else {
          throw DslError(ErrorCategory::ParseError, "malformed exponent in number literal", t.span);
        }
      }
      if (j < src.size() && is_ident_start(src[j])) {
        throw DslError(ErrorCategory::ParseError, "malformed number literal", t.span);
      }
      t.kind = Tok::Number;
      t.text = std::string(src.substr(i, j - i));
      const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
      if (res.ec != std::errc() || !std::isfinite(t.number)) {
        throw DslError(ErrorCategory::ParseError, "number literal out of range", t.span);
      }
      advance(j - i);
      out.push_back(std::move(t));
      continue;
    }
    auto two = [&](char a, char b) { return c == a && i + 1 < src.size() && src[i + 1] == b; };
    std::size_t len = 1;
    if (two('<', '=')) {
      t.kind = Tok::Le, len = 2;
    } else if (two('>', '=')) {
      t.kind = Tok::Ge, len = 2;
    } else if (two('=', '=')) {
      t.kind = Tok::EqEq, len = 2;
    } else if (two('!', '=')) {
      t.kind = Tok::Ne, len = 2;
    } else {
      switch (c) {
        case '{': t.kind = Tok::LBrace; break;
        case '}': t.kind = Tok::RBrace; break;
        case '(': t.kind = Tok::LParen; break;
        case ')': t.kind = Tok::RParen; break;
        case ',': t.kind = Tok::Comma; break;
        case '=': t.kind = Tok::Assign; break;
        case '+': t.kind = Tok::Plus; break;
        case '-': t.kind = Tok::Minus; break;
        case '*': t.kind = Tok::Star; break;
        case '/': t.kind = Tok::Slash; break;
        case '<': t.kind = Tok::Lt; break;
        case '>': t.kind = Tok::Gt; break;
        default: {
          char shown[8];
          if (std::isprint(static_cast<unsigned char>(c))) {
            std::snprintf(shown, sizeof(shown), "%c", c);
          } else {
            std::snprintf(shown, sizeof(shown), "\\x%02x", static_cast<unsigned char>(c));
          }
          throw DslError(ErrorCategory::ParseError, std::string("unexpected character '") + shown + "'", t.span);
        }
      }
    }
    t.text = std::string(src.substr(i, len));
    advance(len);
    out.push_back(std::move(t));
  }
  Token end;
  end.span = {line, col};
  out.push_back(end);
  return out;
}

// ---------------------------------------------------------------- parser

bool is_keyword(const std::string& s) {
  static const std::set<std::string> kw{"policy", "reward", "if", "then", "elif", "else", "end", "and", "or", "not"};
  return kw.count(s) > 0;
}

std::optional<Builtin> builtin_from_name(std::string_view s) {
  if (s == "min") return Builtin::Min;
  if (s == "max") return Builtin::Max;
  if (s == "abs") return Builtin::Abs;
  if (s == "clip") return Builtin::Clip;
  return std::nullopt;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(lex(src)) {}

  Program program() {
    Program p;
    expect_keyword("policy");
    p.name = expect_name("policy name");
    expect(Tok::LBrace, "'{'");
    p.rules = block({});
    if (p.rules.empty()) fail("a policy needs at least one statement", peek().span);
    expect(Tok::RBrace, "'}'");
    expect_end();
    p.referenced_vars = std::move(refs_);
    return p;
  }

  RewardProgram reward() {
    RewardProgram p;
    expect_keyword("reward");
    p.name = expect_name("reward name");
    expect(Tok::LBrace, "'{'");
    if (peek().kind == Tok::RBrace) fail("a reward needs at least one component", peek().span);
    p.terms.push_back(expr());
    while (accept(Tok::Comma)) {
      if (peek().kind == Tok::RBrace) break;
      p.terms.push_back(expr());
    }
    expect(Tok::RBrace, "',' or '}'");
    expect_end();
    p.referenced_vars = std::move(refs_);
    return p;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::set<Var> refs_;

  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  const Token& take() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  [[noreturn]] static void fail(const std::string& msg, Span s) { throw DslError(ErrorCategory::ParseError, msg, s); }

  bool at_keyword(std::string_view kw) const { return peek().kind == Tok::Ident && peek().text == kw; }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    take();
    return true;
  }
  void expect(Tok k, const std::string& what) {
    if (peek().kind != k) fail("expected " + what + ", found " + describe(peek()), peek().span);
    take();
  }
  void expect_keyword(std::string_view kw) {
    if (!at_keyword(kw)) fail("expected '" + std::string(kw) + "', found " + describe(peek()), peek().span);
    take();
  }
  std::string expect_name(const std::string& what) {
    const Token& t = peek();
    if (t.kind != Tok::Ident || is_keyword(t.text)) fail("expected " + what + ", found " + describe(t), t.span);
    return take().text;
  }
  void expect_end() {
    if (peek().kind != Tok::End) fail("unexpected " + describe(peek()) + " after closing '}'", peek().span);
  }

  // Parses statements until one of the terminators (or '}').
  std::vector<Stmt> block(std::initializer_list<std::string_view> terminators) {
    std::vector<Stmt> out;
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::RBrace || t.kind == Tok::End) break;
      if (t.kind == Tok::Ident &&
          std::find(terminators.begin(), terminators.end(), std::string_view(t.text)) != terminators.end()) {
        break;
      }
      out.push_back(statement());
    }
    return out;
  }

  Stmt statement() {
    const Token& t = peek();
    if (t.kind != Tok::Ident) fail("expected a statement, found " + describe(t), t.span);
    if (t.text == "if") return if_block();
    if (is_keyword(t.text)) fail("unexpected keyword '" + t.text + "'", t.span);

    Stmt s;
    s.kind = Stmt::Kind::Assign;
    s.span = t.span;
    const Token name = take();
    if (peek().kind != Tok::Assign) fail("expected '=' after '" + name.text + "', found " + describe(peek()), peek().span);
    if (name.text == "v1") {
      s.target = 0;
    } else if (name.text == "v2") {
      s.target = 1;
    } else if (var_from_name(name.text) || builtin_from_name(name.text)) {
      fail("'" + name.text + "' is read-only; only v1 and v2 can be assigned", name.span);
    } else {
      throw DslError(ErrorCategory::NameError, "unknown variable '" + name.text + "'", name.span);
    }
    take();
    s.value = expr();
    return s;
  }

  Stmt if_block() {
    Stmt s;
    s.kind = Stmt::Kind::If;
    s.span = peek().span;
    take();  // if
    for (;;) {
      Branch b;
      b.cond = expr();
      expect_keyword("then");
      const Span body_span = peek().span;
      b.body = block({"elif", "else", "end"});
      if (b.body.empty()) fail("expected at least one statement after 'then'", body_span);
      s.branches.push_back(std::move(b));
      if (at_keyword("elif")) {
        take();
        continue;
      }
      break;
    }
    if (at_keyword("else")) {
      take();
      const Span body_span = peek().span;
      s.else_body = block({"end"});
      if (s.else_body->empty()) fail("expected at least one statement after 'else'", body_span);
    }
    expect_keyword("end");
    return s;
  }

  ExprPtr expr() { return or_expr(); }

  ExprPtr or_expr() {
    ExprPtr lhs = and_expr();
    while (at_keyword("or")) {
      const Span sp = take().span;
      lhs = make_binary(BinaryOp::Or, lhs, and_expr(), sp);
    }
    return lhs;
  }

  ExprPtr and_expr() {
    ExprPtr lhs = not_expr();
    while (at_keyword("and")) {
      const Span sp = take().span;
      lhs = make_binary(BinaryOp::And, lhs, not_expr(), sp);
    }
    return lhs;
  }

  ExprPtr not_expr() {
    if (at_keyword("not")) {
      const Span sp = take().span;
      return make_unary(UnaryOp::Not, not_expr(), sp);
    }
    return cmp_expr();
  }

  static std::optional<BinaryOp> cmp_op(Tok k) {
    switch (k) {
      case Tok::Lt: return BinaryOp::Lt;
      case Tok::Le: return BinaryOp::Le;
      case Tok::Gt: return BinaryOp::Gt;
      case Tok::Ge: return BinaryOp::Ge;
      case Tok::EqEq: return BinaryOp::Eq;
      case Tok::Ne: return BinaryOp::Ne;
      default: return std::nullopt;
    }
  }

  ExprPtr cmp_expr() {
    ExprPtr lhs = add_expr();
    if (auto op = cmp_op(peek().kind)) {
      const Span sp = take().span;
      lhs = make_binary(*op, lhs, add_expr(), sp);
      if (cmp_op(peek().kind)) fail("comparisons cannot be chained; combine them with 'and'", peek().span);
    }
    return lhs;
  }

  ExprPtr add_expr() {
    ExprPtr lhs = mul_expr();
    for (;;) {
      if (peek().kind == Tok::Plus) {
        const Span sp = take().span;
        lhs = make_binary(BinaryOp::Add, lhs, mul_expr(), sp);
      } else if (peek().kind == Tok::Minus) {
        const Span sp = take().span;
        lhs = make_binary(BinaryOp::Sub, lhs, mul_expr(), sp);
      } else {
        return lhs;
      }
    }
  }

  ExprPtr mul_expr() {
    ExprPtr lhs = unary_expr();
    for (;;) {
      if (peek().kind == Tok::Star) {
        const Span sp = take().span;
        lhs = make_binary(BinaryOp::Mul, lhs, unary_expr(), sp);
      } else if (peek().kind == Tok::Slash) {
        const Span sp = take().span;
        lhs = make_binary(BinaryOp::Div, lhs, unary_expr(), sp);
      } else {
        return lhs;
      }
    }
  }

  ExprPtr unary_expr() {
    if (peek().kind == Tok::Minus) {
      const Span sp = take().span;
      return make_unary(UnaryOp::Neg, unary_expr(), sp);
    }
    return primary();
  }

  ExprPtr primary() {
    const Token& t = peek();
    if (t.kind == Tok::Number) {
      const Token n = take();
      return make_number(n.number, n.span);
    }
    if (t.kind == Tok::LParen) {
      take();
      ExprPtr e = expr();
      expect(Tok::RParen, "')'");
      return e;
    }
    if (t.kind != Tok::Ident) fail("expected an expression, found " + describe(t), t.span);
    if (is_keyword(t.text)) fail("expected an expression, found keyword '" + t.text + "'", t.span);
    const Token name = take();
    if (peek().kind == Tok::LParen) {
      const auto fn = builtin_from_name(name.text);
      if (!fn) throw DslError(ErrorCategory::NameError, "unknown function '" + name.text + "'", name.span);
      take();
      std::vector<ExprPtr> args;
      if (peek().kind == Tok::RParen) fail("'" + name.text + "' needs arguments", peek().span);
      args.push_back(expr());
      while (accept(Tok::Comma)) args.push_back(expr());
      expect(Tok::RParen, "',' or ')'");
      return make_call(*fn, std::move(args), name.span);
    }
    const auto v = var_from_name(name.text);
    if (!v) {
      if (builtin_from_name(name.text)) {
        throw DslError(ErrorCategory::NameError, "'" + name.text + "' is a function and must be called", name.span);
      }
      throw DslError(ErrorCategory::NameError, "unknown variable '" + name.text + "'", name.span);
    }
    refs_.insert(*v);
    return make_var(*v, name.span);
  }
};

// ---------------------------------------------------------------- typecheck

enum class Type { Number, Bool };

std::string_view type_name(Type t) { return t == Type::Number ? "number" : "boolean"; }

using Assigned = std::array<bool, 2>;

struct Checker {
  bool track_assignment = true;
  Assigned assigned{false, false};

  [[noreturn]] static void type_error(const std::string& msg, Span s) {
    throw DslError(ErrorCategory::TypeError, msg, s);
  }

  void want(const Expr& e, Type expected, const std::string& where) {
    const Type got = infer(e);
    if (got != expected) {
      type_error(where + " must be a " + std::string(type_name(expected)) + ", got a " + std::string(type_name(got)),
                 e.span);
    }
  }

  Type infer(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::Number: return Type::Number;
      case Expr::Kind::Variable:
        if (track_assignment && (e.var == Var::V1 || e.var == Var::V2)) {
          const std::size_t idx = e.var == Var::V1 ? 0 : 1;
          if (!assigned[idx]) {
            throw DslError(ErrorCategory::IncompleteAssignment,
                           "'" + std::string(var_name(e.var)) + "' is read before it is assigned on every path",
                           e.span);
          }
        }
        return Type::Number;
      case Expr::Kind::Unary:
        if (e.unary == UnaryOp::Neg) {
          want(*e.args[0], Type::Number, "operand of unary '-'");
          return Type::Number;
        }
        want(*e.args[0], Type::Bool, "operand of 'not'");
        return Type::Bool;
      case Expr::Kind::Binary: {
        const std::string op = "'" + std::string(to_string(e.binary)) + "'";
        switch (e.binary) {
          case BinaryOp::Add:
          case BinaryOp::Sub:
          case BinaryOp::Mul:
          case BinaryOp::Div:
            want(*e.args[0], Type::Number, "left operand of " + op);
            want(*e.args[1], Type::Number, "right operand of " + op);
            return Type::Number;
          case BinaryOp::And:
          case BinaryOp::Or:
            want(*e.args[0], Type::Bool, "left operand of " + op);
            want(*e.args[1], Type::Bool, "right operand of " + op);
            return Type::Bool;
          default:
            want(*e.args[0], Type::Number, "left operand of " + op);
            want(*e.args[1], Type::Number, "right operand of " + op);
            return Type::Bool;
        }
      }
      case Expr::Kind::Call: {
        const std::string name(to_string(e.fn));
        const std::size_t n = e.args.size();
        const bool ok = (e.fn == Builtin::Abs && n == 1) || (e.fn == Builtin::Clip && n == 3) ||
                        ((e.fn == Builtin::Min || e.fn == Builtin::Max) && n >= 2);
        if (!ok) {
          const char* arity = e.fn == Builtin::Abs ? "1 argument" : e.fn == Builtin::Clip ? "3 arguments"
                                                                                         : "at least 2 arguments";
          type_error("'" + name + "' takes " + arity + ", got " + std::to_string(n), e.span);
        }
        for (std::size_t i = 0; i < n; ++i) {
          want(*e.args[i], Type::Number, "argument " + std::to_string(i + 1) + " of '" + name + "'");
        }
        return Type::Number;
      }
    }
    return Type::Number;
  }

  void stmts(const std::vector<Stmt>& body) {
    for (const Stmt& s : body) stmt(s);
  }

  void stmt(const Stmt& s) {
    if (s.kind == Stmt::Kind::Assign) {
      want(*s.value, Type::Number, std::string("value assigned to ") + (s.target == 0 ? "v1" : "v2"));
      assigned[s.target] = true;
      return;
    }
    const Assigned before = assigned;
    Assigned all{true, true};
    for (const Branch& b : s.branches) {
      assigned = before;
      want(*b.cond, Type::Bool, "condition");
      // Conditions are evaluated in sequence, so later arms still start from `before`.
      stmts(b.body);
      for (std::size_t i = 0; i < 2; ++i) all[i] = all[i] && assigned[i];
    }
    if (s.else_body) {
      assigned = before;
      stmts(*s.else_body);
      for (std::size_t i = 0; i < 2; ++i) all[i] = all[i] && assigned[i];
    } else {
      all = before;
    }
    assigned = all;
  }
};

// ---------------------------------------------------------------- evaluation

struct Value {
  double num = 0.0;
  bool boolean = false;
};

class Evaluator {
 public:
  explicit Evaluator(const std::array<double, kVarCount>& vars) : vars_(vars) {}

  double num(const Expr& e) { return eval(e).num; }
  bool cond(const Expr& e) { return eval(e).boolean; }

  std::array<double, kVarCount> vars_;
  std::size_t executed = 0;

  void run(const std::vector<Stmt>& body) {
    for (const Stmt& s : body) {
      ++executed;
      if (s.kind == Stmt::Kind::Assign) {
        vars_[static_cast<std::size_t>(s.target == 0 ? Var::V1 : Var::V2)] = num(*s.value);
        continue;
      }
      bool taken = false;
      for (const Branch& b : s.branches) {
        if (cond(*b.cond)) {
          run(b.body);
          taken = true;
          break;
        }
      }
      if (!taken && s.else_body) run(*s.else_body);
    }
  }

 private:
  static double finite(double v, Span s) {
    if (!std::isfinite(v)) throw DslError(ErrorCategory::RuntimeError, "expression produced a non-finite value", s);
    return v;
  }

  Value eval(const Expr& e) {
    Value out;
    switch (e.kind) {
      case Expr::Kind::Number: out.num = e.number; break;
      case Expr::Kind::Variable: out.num = finite(vars_[static_cast<std::size_t>(e.var)], e.span); break;
      case Expr::Kind::Unary:
        if (e.unary == UnaryOp::Neg) {
          out.num = -num(*e.args[0]);
        } else {
          out.boolean = !cond(*e.args[0]);
        }
        break;
      case Expr::Kind::Binary: {
        if (e.binary == BinaryOp::And) {
          out.boolean = cond(*e.args[0]) && cond(*e.args[1]);
          break;
        }
        if (e.binary == BinaryOp::Or) {
          out.boolean = cond(*e.args[0]) || cond(*e.args[1]);
          break;
        }
        const double a = num(*e.args[0]);
        const double b = num(*e.args[1]);
        switch (e.binary) {
          case BinaryOp::Add: out.num = finite(a + b, e.span); break;
          case BinaryOp::Sub: out.num = finite(a - b, e.span); break;
          case BinaryOp::Mul: out.num = finite(a * b, e.span); break;
          case BinaryOp::Div:
            if (b == 0.0) throw DslError(ErrorCategory::RuntimeError, "division by zero", e.span);
            out.num = finite(a / b, e.span);
            break;
          case BinaryOp::Lt: out.boolean = a < b; break;
          case BinaryOp::Le: out.boolean = a <= b; break;
          case BinaryOp::Gt: out.boolean = a > b; break;
          case BinaryOp::Ge: out.boolean = a >= b; break;
          case BinaryOp::Eq: out.boolean = a == b; break;
          case BinaryOp::Ne: out.boolean = a != b; break;
          default: break;
        }
        break;
      }
      case Expr::Kind::Call: {
        std::vector<double> a;
        a.reserve(e.args.size());
        for (const auto& arg : e.args) a.push_back(num(*arg));
        switch (e.fn) {
          case Builtin::Min: out.num = *std::min_element(a.begin(), a.end()); break;
          case Builtin::Max: out.num = *std::max_element(a.begin(), a.end()); break;
          case Builtin::Abs: out.num = std::abs(a[0]); break;
          case Builtin::Clip:
            if (a[1] > a[2]) {
              throw DslError(ErrorCategory::RuntimeError, "clip lower bound exceeds upper bound", e.span);
            }
            out.num = std::clamp(a[0], a[1], a[2]);
            break;
        }
        break;
      }
    }
    return out;
  }
};

// ---------------------------------------------------------------- printing

int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Number:
    case Expr::Kind::Variable:
    case Expr::Kind::Call: return 8;
    case Expr::Kind::Unary: return e.unary == UnaryOp::Neg ? 7 : 3;
    case Expr::Kind::Binary:
      switch (e.binary) {
        case BinaryOp::Or: return 1;
        case BinaryOp::And: return 2;
        case BinaryOp::Add:
        case BinaryOp::Sub: return 5;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 6;
        default: return 4;
      }
  }
  return 8;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void emit(const Expr& e, int min_prec, std::string& out) {
  const int p = precedence(e);
  const bool paren = p < min_prec;
  if (paren) out += '(';
  switch (e.kind) {
    case Expr::Kind::Number:
      if (e.number < 0.0 || (e.number == 0.0 && std::signbit(e.number))) {
        // Built programmatically; the parser only produces non-negative literals.
        out += "(-" + format_number(-e.number) + ")";
      } else {
        out += format_number(e.number);
      }
      break;
    case Expr::Kind::Variable: out += var_name(e.var); break;
    case Expr::Kind::Unary:
      if (e.unary == UnaryOp::Neg) {
        out += '-';
        emit(*e.args[0], 7, out);
      } else {
        out += "not ";
        emit(*e.args[0], 3, out);
      }
      break;
    case Expr::Kind::Binary: {
      const bool cmp = p == 4;
      emit(*e.args[0], cmp ? 5 : p, out);
      out += ' ';
      out += to_string(e.binary);
      out += ' ';
      emit(*e.args[1], p + 1, out);
      break;
    }
    case Expr::Kind::Call:
      out += to_string(e.fn);
      out += '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        emit(*e.args[i], 0, out);
      }
      out += ')';
      break;
  }
  if (paren) out += ')';
}

void emit_block(const std::vector<Stmt>& body, int depth, std::string& out) {
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  for (const Stmt& s : body) {
    if (s.kind == Stmt::Kind::Assign) {
      out += indent + (s.target == 0 ? "v1" : "v2") + " = " + to_source(*s.value) + "\n";
      continue;
    }
    for (std::size_t i = 0; i < s.branches.size(); ++i) {
      out += indent + (i == 0 ? "if " : "elif ") + to_source(*s.branches[i].cond) + " then\n";
      emit_block(s.branches[i].body, depth + 1, out);
    }
    if (s.else_body) {
      out += indent + "else\n";
      emit_block(*s.else_body, depth + 1, out);
    }
    out += indent + "end\n";
  }
}

bool stmts_equal(const std::vector<Stmt>& a, const std::vector<Stmt>& b);

bool stmt_equal(const Stmt& a, const Stmt& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == Stmt::Kind::Assign) return a.target == b.target && structurally_equal(*a.value, *b.value);
  if (a.branches.size() != b.branches.size() || a.else_body.has_value() != b.else_body.has_value()) return false;
  for (std::size_t i = 0; i < a.branches.size(); ++i) {
    if (!structurally_equal(*a.branches[i].cond, *b.branches[i].cond)) return false;
    if (!stmts_equal(a.branches[i].body, b.branches[i].body)) return false;
  }
  return !a.else_body || stmts_equal(*a.else_body, *b.else_body);
}

bool stmts_equal(const std::vector<Stmt>& a, const std::vector<Stmt>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!stmt_equal(a[i], b[i])) return false;
  }
  return true;
}

std::size_t count_stmts(const std::vector<Stmt>& body) {
  std::size_t n = 0;
  for (const Stmt& s : body) {
    ++n;
    if (s.kind == Stmt::Kind::If) {
      for (const Branch& b : s.branches) n += count_stmts(b.body);
      if (s.else_body) n += count_stmts(*s.else_body);
    }
  }
  return n;
}

}  // namespace

std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::ParseError: return "ParseError";
    case ErrorCategory::NameError: return "NameError";
    case ErrorCategory::TypeError: return "TypeError";
    case ErrorCategory::RuntimeError: return "RuntimeError";
    case ErrorCategory::IncompleteAssignment: return "IncompleteAssignment";
  }
  return "ParseError";
}

DslError::DslError(ErrorCategory category, const std::string& message, Span span)
    : Error(std::string(to_string(category)), format_message(category, message, span)),
      category_(category),
      span_(span),
      detail_(message) {}

nlohmann::json DslError::to_json() const {
  return {{"category", std::string(to_string(category_))}, {"message", detail_}, {"line", span_.line},
          {"col", span_.col}};
}

std::string_view var_name(Var v) { return kVarNames[static_cast<std::size_t>(v)]; }

std::optional<Var> var_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kVarCount; ++i) {
    if (kVarNames[i] == name) return static_cast<Var>(i);
  }
  return std::nullopt;
}

std::string_view to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::And: return "and";
    case BinaryOp::Or: return "or";
  }
  return "?";
}

std::string_view to_string(Builtin fn) {
  switch (fn) {
    case Builtin::Min: return "min";
    case Builtin::Max: return "max";
    case Builtin::Abs: return "abs";
    case Builtin::Clip: return "clip";
  }
  return "?";
}

ExprPtr make_number(double v, Span span) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Number;
  e->number = v;
  e->span = span;
  return e;
}

ExprPtr make_var(Var v, Span span) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Variable;
  e->var = v;
  e->span = span;
  return e;
}

ExprPtr make_unary(UnaryOp op, ExprPtr operand, Span span) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Unary;
  e->unary = op;
  e->args.push_back(std::move(operand));
  e->span = span;
  return e;
}

ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs, Span span) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Binary;
  e->binary = op;
  e->args.push_back(std::move(lhs));
  e->args.push_back(std::move(rhs));
  e->span = span;
  return e;
}

ExprPtr make_call(Builtin fn, std::vector<ExprPtr> args, Span span) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Call;
  e->fn = fn;
  e->args = std::move(args);
  e->span = span;
  return e;
}

Program parse(std::string_view source) { return Parser(source).program(); }

RewardProgram parse_reward(std::string_view source) { return Parser(source).reward(); }

void typecheck(const Program& program) {
  Checker c;
  c.stmts(program.rules);
  for (std::size_t i = 0; i < 2; ++i) {
    if (!c.assigned[i]) {
      Span end_span{1, 1};
      if (!program.rules.empty()) end_span = program.rules.back().span;
      throw DslError(ErrorCategory::IncompleteAssignment,
                     std::string(i == 0 ? "v1" : "v2") + " is not assigned on every control path", end_span);
    }
  }
}

void typecheck(const RewardProgram& program) {
  Checker c;
  c.track_assignment = false;
  for (std::size_t i = 0; i < program.terms.size(); ++i) {
    c.want(*program.terms[i], Type::Number, "reward component " + std::to_string(i + 1));
  }
}

Program compile(std::string_view source) {
  Program p = parse(source);
  typecheck(p);
  return p;
}

RewardProgram compile_reward(std::string_view source) {
  RewardProgram p = parse_reward(source);
  typecheck(p);
  return p;
}

ControlInput evaluate(const Program& program, const EvalContext& ctx, EvalStats* stats) {
  std::array<double, kVarCount> vars{};
  std::copy(ctx.values.begin(), ctx.values.end(), vars.begin());
  vars[static_cast<std::size_t>(Var::V1)] = std::numeric_limits<double>::quiet_NaN();
  vars[static_cast<std::size_t>(Var::V2)] = std::numeric_limits<double>::quiet_NaN();
  Evaluator ev(vars);
  ev.run(program.rules);
  if (stats) stats->statements_executed += ev.executed;
  ControlInput u{ev.vars_[static_cast<std::size_t>(Var::V1)], ev.vars_[static_cast<std::size_t>(Var::V2)]};
  for (std::size_t i = 0; i < 2; ++i) {
    if (!std::isfinite(u[i])) {
      throw DslError(ErrorCategory::RuntimeError, std::string(i == 0 ? "v1" : "v2") + " was not assigned a value",
                     Span{});
    }
    u[i] = std::clamp(u[i], ctx.action_low[i], ctx.action_high[i]);
  }
  return u;
}

double evaluate_numeric(const Expr& expr, const ExprContext& ctx) {
  Evaluator ev(ctx.values);
  return ev.num(expr);
}

std::vector<double> evaluate_terms(const RewardProgram& program, const ExprContext& ctx) {
  Evaluator ev(ctx.values);
  std::vector<double> out;
  out.reserve(program.terms.size());
  for (const auto& t : program.terms) out.push_back(ev.num(*t));
  return out;
}

std::string to_source(const Expr& expr) {
  std::string out;
  emit(expr, 0, out);
  return out;
}

std::string pretty_print(const Program& program) {
  std::string out = "policy " + program.name + " {\n";
  emit_block(program.rules, 1, out);
  out += "}\n";
  return out;
}

std::string pretty_print(const RewardProgram& program) {
  std::string out = "reward " + program.name + " {\n";
  for (std::size_t i = 0; i < program.terms.size(); ++i) {
    out += "  " + to_source(*program.terms[i]) + (i + 1 < program.terms.size() ? ",\n" : "\n");
  }
  out += "}\n";
  return out;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case Expr::Kind::Number:
      if (a.number != b.number) return false;
      break;
    case Expr::Kind::Variable:
      if (a.var != b.var) return false;
      break;
    case Expr::Kind::Unary:
      if (a.unary != b.unary) return false;
      break;
    case Expr::Kind::Binary:
      if (a.binary != b.binary) return false;
      break;
    case Expr::Kind::Call:
      if (a.fn != b.fn) return false;
      break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!structurally_equal(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

bool structurally_equal(const Program& a, const Program& b) {
  return a.name == b.name && stmts_equal(a.rules, b.rules);
}

bool structurally_equal(const RewardProgram& a, const RewardProgram& b) {
  if (a.name != b.name || a.terms.size() != b.terms.size()) return false;
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    if (!structurally_equal(*a.terms[i], *b.terms[i])) return false;
  }
  return true;
}

std::size_t statement_count(const Program& program) { return count_stmts(program.rules); }

}  // namespace tankxrl::dsl
