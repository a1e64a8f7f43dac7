#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scmcf {

/// Node kinds of the structural-law expression language. Booleans are the
/// numbers 0 and 1; logical operators treat any nonzero value as true.
enum class Op : std::uint8_t {
  Const,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  And,
  Or,
  Not,
  Eq,
  Ge,
  Gt,
  Ite,
  Max,
  Min,
};

/// Immutable expression tree. Copies share nodes.
class Expression {
 public:
  Expression();  // the constant 0

  static Expression constant(double value);
  static Expression variable(std::string name);
  static Expression unary(Op op, Expression arg);
  static Expression binary(Op op, Expression lhs, Expression rhs);
  static Expression ite(Expression cond, Expression then_branch, Expression else_branch);

  Op op() const noexcept;
  double value() const noexcept;
  const std::string& name() const noexcept;
  std::span<const Expression> args() const noexcept;

  /// Distinct referenced variable names in first-appearance order.
  std::vector<std::string> variables() const;

  double evaluate(const std::function<double(const std::string&)>& lookup) const;

  bool operator==(const Expression& other) const;

 private:
  struct Node;
  explicit Expression(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

Expression operator+(Expression lhs, Expression rhs);
Expression operator-(Expression lhs, Expression rhs);
Expression operator*(Expression lhs, Expression rhs);
Expression operator-(Expression arg);

/// Infix rendering with the minimal parentheses needed to parse back to the
/// same tree.
std::string to_string(const Expression& expr);

bool is_identifier_start(char c);
bool is_identifier_char(char c);

/// Parses the infix syntax produced by to_string. Also accepts `<`, `<=`, `!=`
/// (rewritten to the core operators), `true`/`false`, and `max`/`min`/`ite`
/// calls. `line` and `column` locate `text` inside a larger document for
/// ParseError messages.
Expression parse_expression(std::string_view text, int line = 1, int column = 1);

/// Flat postfix program over numbered slots; the hot path for solving.
class CompiledExpression {
 public:
  CompiledExpression() = default;
  CompiledExpression(const Expression& expr,
                     const std::function<std::size_t(const std::string&)>& slot_of);

  double evaluate(std::span<const double> slots) const;

 private:
  struct Instr {
    Op op;
    std::uint32_t slot;
    double value;
  };
  void emit(const Expression& expr, const std::function<std::size_t(const std::string&)>& slot_of);

  std::vector<Instr> code_;
  std::size_t max_depth_ = 0;
};

/// constant + sum(coefficient * variable), coefficients merged per name in
/// first-appearance order.
struct AffineForm {
  double constant = 0.0;
  std::vector<std::pair<std::string, double>> coefficients;

  double coefficient(const std::string& name) const;
};

/// Affine form of `expr`, or nullopt if the expression is not affine
/// (products of two non-constants, logic, comparisons, ite, max/min).
std::optional<AffineForm> affine_form(const Expression& expr);

}  // namespace scmcf
