#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "scmcf/error.hpp"
#include "scmcf/expression.hpp"

using namespace scmcf;

namespace {

double eval(const std::string& text, std::map<std::string, double> env = {}) {
  return parse_expression(text).evaluate([&](const std::string& n) { return env.at(n); });
}

Expression random_expression(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 14);
  static const char* names[] = {"a", "b", "U_c"};
  switch (pick(rng)) {
    case 0: {
      static const double consts[] = {0, 1, 2, -3, 0.5, -0.25, 1e-7, 12345.678};
      return Expression::constant(consts[rng() % 8]);
    }
    case 1: return Expression::variable(names[rng() % 3]);
    case 2: return Expression::unary(Op::Neg, random_expression(rng, depth - 1));
    case 3: return Expression::unary(Op::Not, random_expression(rng, depth - 1));
    case 4:
      return Expression::ite(random_expression(rng, depth - 1), random_expression(rng, depth - 1),
                             random_expression(rng, depth - 1));
    default: {
      static const Op ops[] = {Op::Add, Op::Sub, Op::Mul, Op::And, Op::Or,
                               Op::Eq,  Op::Ge,  Op::Gt,  Op::Max, Op::Min};
      return Expression::binary(ops[rng() % 10], random_expression(rng, depth - 1),
                                random_expression(rng, depth - 1));
    }
  }
}

}  // namespace

TEST(Expression, ArithmeticAndLogic) {
  EXPECT_EQ(eval("1 + 2 * 3"), 7);
  EXPECT_EQ(eval("(1 + 2) * 3"), 9);
  EXPECT_EQ(eval("5 - 2 - 1"), 2);
  EXPECT_EQ(eval("-2 * 3"), -6);
  EXPECT_EQ(eval("!0 & 1"), 1);
  EXPECT_EQ(eval("0 | 0"), 0);
  EXPECT_EQ(eval("ite(a > 1, 10, 20)", {{"a", 2}}), 10);
  EXPECT_EQ(eval("ite(a > 1, 10, 20)", {{"a", 1}}), 20);
  EXPECT_EQ(eval("max(a, 3) + min(a, 3)", {{"a", 7}}), 10);
  EXPECT_EQ(eval("a >= 2", {{"a", 2}}), 1);
  EXPECT_EQ(eval("a < 2", {{"a", 2}}), 0);
  EXPECT_EQ(eval("a <= 2", {{"a", 2}}), 1);
  EXPECT_EQ(eval("a != 2", {{"a", 2}}), 0);
  EXPECT_EQ(eval("true | false"), 1);
  EXPECT_EQ(eval("1.5e2"), 150);
}

TEST(Expression, VariablesInFirstAppearanceOrder) {
  auto e = parse_expression("X + Y * X + U_Z");
  EXPECT_EQ(e.variables(), (std::vector<std::string>{"X", "Y", "U_Z"}));
}

TEST(Expression, PrintsMinimalParentheses) {
  EXPECT_EQ(to_string(parse_expression("a - (b - c)")), "a - (b - c)");
  EXPECT_EQ(to_string(parse_expression("(a - b) - c")), "a - b - c");
  EXPECT_EQ(to_string(parse_expression("-(a + b)")), "-(a + b)");
  EXPECT_EQ(to_string(parse_expression("-(2)")), "-(2)");
  EXPECT_EQ(to_string(parse_expression("-2")), "-2");
  EXPECT_EQ(to_string(parse_expression("A|B")), "A | B");
  EXPECT_EQ(to_string(parse_expression("!(a == b)")), "!(a == b)");
}

TEST(Expression, RandomRoundTrip) {
  std::mt19937 rng(7);
  for (int i = 0; i < 2000; ++i) {
    Expression e = random_expression(rng, 5);
    std::string text = to_string(e);
    Expression back = parse_expression(text);
    ASSERT_TRUE(back == e) << text << " reparsed as " << to_string(back);
    ASSERT_EQ(to_string(back), text);
  }
}

TEST(Expression, CompiledMatchesTreeWalk) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> val(-3, 3);
  for (int i = 0; i < 500; ++i) {
    Expression e = random_expression(rng, 6);
    std::vector<std::string> slots{"a", "b", "U_c"};
    CompiledExpression c(e, [&](const std::string& n) {
      return static_cast<std::size_t>(std::find(slots.begin(), slots.end(), n) - slots.begin());
    });
    for (int k = 0; k < 5; ++k) {
      std::vector<double> env{std::round(val(rng)), val(rng), std::round(val(rng))};
      double tree = e.evaluate([&](const std::string& n) {
        return env[std::find(slots.begin(), slots.end(), n) - slots.begin()];
      });
      ASSERT_EQ(c.evaluate(env), tree) << to_string(e);
    }
  }
}

TEST(Expression, AffineForm) {
  auto f = affine_form(parse_expression("2 * (X + U_Y) - 3 * X + 4"));
  ASSERT_TRUE(f);
  EXPECT_EQ(f->constant, 4);
  EXPECT_EQ(f->coefficient("X"), -1);
  EXPECT_EQ(f->coefficient("U_Y"), 2);
  EXPECT_FALSE(affine_form(parse_expression("X * U_Y")));
  EXPECT_FALSE(affine_form(parse_expression("max(X, 0)")));
  EXPECT_TRUE(affine_form(parse_expression("-(X - 1) * 3")));
}

TEST(Expression, ParseErrorsCarryLocation) {
  try {
    parse_expression("X + * Y", 4, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 4, column 14"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_expression("ite(a, b)"), Error);
  EXPECT_THROW(parse_expression("(a + b"), Error);
  EXPECT_THROW(parse_expression("a b"), Error);
}
