#include "scmcf/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "scmcf/domain.hpp"
#include "scmcf/error.hpp"

namespace scmcf {

struct Expression::Node {
  Op op = Op::Const;
  double value = 0.0;
  std::string name;
  std::vector<Expression> args;
};

namespace {

bool truthy(double x) { return x != 0.0; }

double apply(Op op, double a, double b, double c) {
  switch (op) {
    case Op::Neg: return -a;
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::And: return (truthy(a) && truthy(b)) ? 1.0 : 0.0;
    case Op::Or: return (truthy(a) || truthy(b)) ? 1.0 : 0.0;
    case Op::Not: return truthy(a) ? 0.0 : 1.0;
    case Op::Eq: return std::abs(a - b) <= kValueTolerance ? 1.0 : 0.0;
    case Op::Ge: return a >= b - kValueTolerance ? 1.0 : 0.0;
    case Op::Gt: return a > b + kValueTolerance ? 1.0 : 0.0;
    case Op::Ite: return truthy(a) ? b : c;
    case Op::Max: return std::max(a, b);
    case Op::Min: return std::min(a, b);
    case Op::Const:
    case Op::Var: break;
  }
  return 0.0;
}

std::size_t arity(Op op) {
  switch (op) {
    case Op::Const:
    case Op::Var: return 0;
    case Op::Neg:
    case Op::Not: return 1;
    case Op::Ite: return 3;
    default: return 2;
  }
}

}  // namespace

Expression::Expression() : Expression(constant(0.0)) {}

Expression::Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expression Expression::constant(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = value;
  return Expression(std::move(n));
}

Expression Expression::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->name = std::move(name);
  return Expression(std::move(n));
}

Expression Expression::unary(Op op, Expression arg) {
  if (arity(op) != 1) throw Error(ErrorKind::ValidationError, "operator is not unary");
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = {std::move(arg)};
  return Expression(std::move(n));
}

Expression Expression::binary(Op op, Expression lhs, Expression rhs) {
  if (arity(op) != 2) throw Error(ErrorKind::ValidationError, "operator is not binary");
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = {std::move(lhs), std::move(rhs)};
  return Expression(std::move(n));
}

Expression Expression::ite(Expression cond, Expression then_branch, Expression else_branch) {
  auto n = std::make_shared<Node>();
  n->op = Op::Ite;
  n->args = {std::move(cond), std::move(then_branch), std::move(else_branch)};
  return Expression(std::move(n));
}

Op Expression::op() const noexcept { return node_->op; }
double Expression::value() const noexcept { return node_->value; }
const std::string& Expression::name() const noexcept { return node_->name; }
std::span<const Expression> Expression::args() const noexcept { return node_->args; }

std::vector<std::string> Expression::variables() const {
  std::vector<std::string> out;
  std::function<void(const Expression&)> walk = [&](const Expression& e) {
    if (e.op() == Op::Var) {
      if (std::find(out.begin(), out.end(), e.name()) == out.end()) out.push_back(e.name());
      return;
    }
    for (const auto& a : e.args()) walk(a);
  };
  walk(*this);
  return out;
}

double Expression::evaluate(const std::function<double(const std::string&)>& lookup) const {
  switch (op()) {
    case Op::Const: return value();
    case Op::Var: return lookup(name());
    default: break;
  }
  double a = args()[0].evaluate(lookup);
  double b = args().size() > 1 ? args()[1].evaluate(lookup) : 0.0;
  double c = args().size() > 2 ? args()[2].evaluate(lookup) : 0.0;
  return apply(op(), a, b, c);
}

bool Expression::operator==(const Expression& other) const {
  if (node_ == other.node_) return true;
  if (op() != other.op()) return false;
  if (op() == Op::Const) return value() == other.value();
  if (op() == Op::Var) return name() == other.name();
  auto lhs = args();
  auto rhs = other.args();
  return std::equal(lhs.begin(), lhs.end(), rhs.begin(), rhs.end());
}

Expression operator+(Expression lhs, Expression rhs) {
  return Expression::binary(Op::Add, std::move(lhs), std::move(rhs));
}
Expression operator-(Expression lhs, Expression rhs) {
  return Expression::binary(Op::Sub, std::move(lhs), std::move(rhs));
}
Expression operator*(Expression lhs, Expression rhs) {
  return Expression::binary(Op::Mul, std::move(lhs), std::move(rhs));
}
Expression operator-(Expression arg) { return Expression::unary(Op::Neg, std::move(arg)); }

// ---------------------------------------------------------------------------
// printing

namespace {

// Binding strength; higher binds tighter. Binary operators are left
// associative, so a right operand of equal precedence needs parentheses.
int precedence(Op op) {
  switch (op) {
    case Op::Or: return 1;
    case Op::And: return 2;
    case Op::Eq:
    case Op::Ge:
    case Op::Gt: return 3;
    case Op::Add:
    case Op::Sub: return 4;
    case Op::Mul: return 5;
    case Op::Neg:
    case Op::Not: return 6;
    default: return 7;
  }
}

std::string_view symbol(Op op) {
  switch (op) {
    case Op::Or: return " | ";
    case Op::And: return " & ";
    case Op::Eq: return " == ";
    case Op::Ge: return " >= ";
    case Op::Gt: return " > ";
    case Op::Add: return " + ";
    case Op::Sub: return " - ";
    case Op::Mul: return " * ";
    default: return "";
  }
}

void print(const Expression& e, std::string& out) {
  switch (e.op()) {
    case Op::Const: out += format_number(e.value()); return;
    case Op::Var: out += e.name(); return;
    case Op::Ite:
    case Op::Max:
    case Op::Min: {
      out += e.op() == Op::Ite ? "ite(" : e.op() == Op::Max ? "max(" : "min(";
      for (std::size_t i = 0; i < e.args().size(); ++i) {
        if (i) out += ", ";
        print(e.args()[i], out);
      }
      out += ")";
      return;
    }
    case Op::Neg:
    case Op::Not: {
      out += e.op() == Op::Neg ? "-" : "!";
      const auto& a = e.args()[0];
      // The parser folds `-2` into a literal, so negation of a literal keeps
      // its parentheses.
      bool wrap = precedence(a.op()) < precedence(e.op()) ||
                  (e.op() == Op::Neg && a.op() == Op::Const && a.value() >= 0);
      if (wrap) out += "(";
      print(a, out);
      if (wrap) out += ")";
      return;
    }
    default: break;
  }
  int p = precedence(e.op());
  const auto& lhs = e.args()[0];
  const auto& rhs = e.args()[1];
  bool wrap_l = precedence(lhs.op()) < p;
  bool wrap_r = precedence(rhs.op()) <= p;
  if (wrap_l) out += "(";
  print(lhs, out);
  if (wrap_l) out += ")";
  out += symbol(e.op());
  if (wrap_r) out += "(";
  print(rhs, out);
  if (wrap_r) out += ")";
}

}  // namespace

std::string to_string(const Expression& expr) {
  std::string out;
  print(expr, out);
  return out;
}

// ---------------------------------------------------------------------------
// compiled form

CompiledExpression::CompiledExpression(
    const Expression& expr, const std::function<std::size_t(const std::string&)>& slot_of) {
  emit(expr, slot_of);
  std::size_t depth = 0;
  for (const auto& ins : code_) {
    std::size_t n = arity(ins.op);
    depth = depth + 1 - n;
    max_depth_ = std::max(max_depth_, depth + n);
  }
}

void CompiledExpression::emit(const Expression& expr,
                              const std::function<std::size_t(const std::string&)>& slot_of) {
  for (const auto& a : expr.args()) emit(a, slot_of);
  Instr ins{expr.op(), 0, 0.0};
  if (expr.op() == Op::Const) ins.value = expr.value();
  if (expr.op() == Op::Var) ins.slot = static_cast<std::uint32_t>(slot_of(expr.name()));
  code_.push_back(ins);
}

double CompiledExpression::evaluate(std::span<const double> slots) const {
  // Law expressions are shallow; a fixed stack avoids allocation per call.
  constexpr std::size_t kInline = 32;
  double inline_stack[kInline] = {};
  std::vector<double> heap;
  double* stack = inline_stack;
  if (max_depth_ > kInline) {
    heap.resize(max_depth_);
    stack = heap.data();
  }
  std::size_t top = 0;
  for (const auto& ins : code_) {
    switch (ins.op) {
      case Op::Const: stack[top++] = ins.value; break;
      case Op::Var: stack[top++] = slots[ins.slot]; break;
      case Op::Neg:
      case Op::Not: stack[top - 1] = apply(ins.op, stack[top - 1], 0.0, 0.0); break;
      case Op::Ite:
        stack[top - 3] = apply(ins.op, stack[top - 3], stack[top - 2], stack[top - 1]);
        top -= 2;
        break;
      default:
        stack[top - 2] = apply(ins.op, stack[top - 2], stack[top - 1], 0.0);
        top -= 1;
        break;
    }
  }
  return stack[0];
}

// ---------------------------------------------------------------------------
// affine extraction

double AffineForm::coefficient(const std::string& name) const {
  for (const auto& [n, c] : coefficients) {
    if (n == name) return c;
  }
  return 0.0;
}

namespace {

void add_scaled(AffineForm& into, const AffineForm& from, double scale) {
  into.constant += scale * from.constant;
  for (const auto& [name, c] : from.coefficients) {
    auto it = std::find_if(into.coefficients.begin(), into.coefficients.end(),
                           [&](const auto& p) { return p.first == name; });
    if (it == into.coefficients.end()) {
      into.coefficients.emplace_back(name, scale * c);
    } else {
      it->second += scale * c;
    }
  }
}

}  // namespace

std::optional<AffineForm> affine_form(const Expression& expr) {
  AffineForm out;
  switch (expr.op()) {
    case Op::Const: out.constant = expr.value(); return out;
    case Op::Var: out.coefficients.emplace_back(expr.name(), 1.0); return out;
    case Op::Neg: {
      auto a = affine_form(expr.args()[0]);
      if (!a) return std::nullopt;
      add_scaled(out, *a, -1.0);
      return out;
    }
    case Op::Add:
    case Op::Sub: {
      auto a = affine_form(expr.args()[0]);
      auto b = affine_form(expr.args()[1]);
      if (!a || !b) return std::nullopt;
      add_scaled(out, *a, 1.0);
      add_scaled(out, *b, expr.op() == Op::Add ? 1.0 : -1.0);
      return out;
    }
    case Op::Mul: {
      auto a = affine_form(expr.args()[0]);
      auto b = affine_form(expr.args()[1]);
      if (!a || !b) return std::nullopt;
      if (a->coefficients.empty()) {
        add_scaled(out, *b, a->constant);
        return out;
      }
      if (b->coefficients.empty()) {
        add_scaled(out, *a, b->constant);
        return out;
      }
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// parsing

namespace {

class ExpressionParser {
 public:
  ExpressionParser(std::string_view text, int line, int column)
      : text_(text), line_(line), column_(column) {}

  Expression parse() {
    Expression e = parse_or();
    skip_space();
    if (pos_ < text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const {
    int line = line_;
    int col = column_;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::ParseError,
                "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + message);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(std::string_view tok) {
    skip_space();
    if (text_.substr(pos_, tok.size()) != tok) return false;
    // Keep `>` from swallowing the first half of `>=`, and `=` from `==`.
    if (tok.size() == 1 && pos_ + 1 < text_.size() && text_[pos_ + 1] == '=' &&
        (tok == ">" || tok == "<" || tok == "!")) {
      return false;
    }
    pos_ += tok.size();
    return true;
  }

  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }

  Expression parse_or() {
    Expression lhs = parse_and();
    while (accept("|")) lhs = Expression::binary(Op::Or, lhs, parse_and());
    return lhs;
  }

  Expression parse_and() {
    Expression lhs = parse_cmp();
    while (accept("&")) lhs = Expression::binary(Op::And, lhs, parse_cmp());
    return lhs;
  }

  Expression parse_cmp() {
    Expression lhs = parse_add();
    for (;;) {
      if (accept("==")) {
        lhs = Expression::binary(Op::Eq, lhs, parse_add());
      } else if (accept("!=")) {
        lhs = Expression::unary(Op::Not, Expression::binary(Op::Eq, lhs, parse_add()));
      } else if (accept(">=")) {
        lhs = Expression::binary(Op::Ge, lhs, parse_add());
      } else if (accept("<=")) {
        lhs = Expression::binary(Op::Ge, parse_add(), lhs);
      } else if (accept(">")) {
        lhs = Expression::binary(Op::Gt, lhs, parse_add());
      } else if (accept("<")) {
        lhs = Expression::binary(Op::Gt, parse_add(), lhs);
      } else {
        return lhs;
      }
    }
  }

  Expression parse_add() {
    Expression lhs = parse_mul();
    for (;;) {
      if (accept("+")) {
        lhs = Expression::binary(Op::Add, lhs, parse_mul());
      } else if (accept("-")) {
        lhs = Expression::binary(Op::Sub, lhs, parse_mul());
      } else {
        return lhs;
      }
    }
  }

  Expression parse_mul() {
    Expression lhs = parse_unary();
    while (accept("*")) lhs = Expression::binary(Op::Mul, lhs, parse_unary());
    return lhs;
  }

  Expression parse_unary() {
    skip_space();
    if (accept("-")) {
      if (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                                  text_[pos_] == '.')) {
        return Expression::constant(-parse_number());
      }
      return Expression::unary(Op::Neg, parse_unary());
    }
    if (accept("!")) return Expression::unary(Op::Not, parse_unary());
    return parse_primary();
  }

  double parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits();
      } else {
        pos_ = save;
      }
    }
    double value = 0.0;
    std::string_view tok = text_.substr(start, pos_ - start);
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      pos_ = start;
      fail("malformed number '" + std::string(tok) + "'");
    }
    return value;
  }

  std::string parse_identifier() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_identifier_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  Expression parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return Expression::constant(parse_number());
    }
    if (accept("(")) {
      Expression e = parse_or();
      expect(")");
      return e;
    }
    if (!is_identifier_start(c)) fail("unexpected '" + std::string(1, c) + "'");
    std::size_t name_pos = pos_;
    std::string name = parse_identifier();
    if (name == "true") return Expression::constant(1.0);
    if (name == "false") return Expression::constant(0.0);
    if (name == "ite" || name == "max" || name == "min") {
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '(') {
        expect("(");
        std::vector<Expression> args{parse_or()};
        while (accept(",")) args.push_back(parse_or());
        expect(")");
        std::size_t want = name == "ite" ? 3 : 2;
        if (args.size() != want) {
          pos_ = name_pos;
          fail(name + " takes " + std::to_string(want) + " arguments, got " +
               std::to_string(args.size()));
        }
        if (name == "ite") return Expression::ite(args[0], args[1], args[2]);
        return Expression::binary(name == "max" ? Op::Max : Op::Min, args[0], args[1]);
      }
    }
    return Expression::variable(std::move(name));
  }

  std::string_view text_;
  int line_;
  int column_;
  std::size_t pos_ = 0;
};

}  // namespace

bool is_identifier_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_identifier_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

Expression parse_expression(std::string_view text, int line, int column) {
  return ExpressionParser(text, line, column).parse();
}

}  // namespace scmcf
