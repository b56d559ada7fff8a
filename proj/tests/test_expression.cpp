#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support.hpp"
#include "tractor/expression.hpp"
#include "tractor/jet.hpp"

using namespace tractor;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("parse and evaluate") {
  Expression e = parse_expression("4/(1+x1^2+x2^2)^2");
  std::vector<double> o{0.0, 0.0};
  CHECK(e(o) == 4.0);
  std::vector<double> p{1.0, 1.0};
  CHECK_THAT(e(p), WithinAbs(4.0 / 9, 1e-15));
  CHECK_THAT(parse_expression("-x1^2")(std::vector<double>{3.0}), WithinAbs(-9, 0));
  CHECK_THAT(parse_expression("2^-1 + pi")(std::vector<double>{}), WithinAbs(0.5 + M_PI, 1e-15));
  CHECK_THAT(parse_expression("(x1-2)^3")(std::vector<double>{0.0}), WithinAbs(-8, 0));
}

TEST_CASE("syntax errors carry offsets") {
  try {
    parse_expression("sin(x1)*");
    FAIL("expected syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.offset() == 8);
  }
  try {
    parse_expression("1 + (x2");
    FAIL("expected syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.offset() == 7);
  }
  CHECK_THROWS_AS(parse_expression("foo(x1)"), Error);
  CHECK_THROWS_AS(parse_expression("x4", 3), Error);
  CHECK_THROWS_AS(parse_expression("x0"), Error);
}

TEST_CASE("pretty print round trip") {
  for (const char* src : {"4/(1+x1^2+x2^2)^2", "-x1^-2*sin(x2)/exp(x3)", "sqrt(1+x1)-log(2+cos(x2))", "1e-3*x1",
                          "2^3^2", "--x1"}) {
    Expression e = parse_expression(src);
    Expression r = parse_expression(e.str());
    CHECK(e == r);
    CHECK(r.str() == e.str());
  }
}

TEST_CASE("Taylor mode derivatives") {
  Expression e = parse_expression("x1^3");
  std::vector<Jet3> x{Jet3::variable(2.0, 1.0)};
  Jet3 v = e.eval<Jet3>(x);
  CHECK(v.derivative(1) == 12.0);
  CHECK(v.derivative(2) == 12.0);
  CHECK(v.derivative(3) == 6.0);
}

TEST_CASE("jet arithmetic matches finite differences") {
  Expression e = parse_expression("exp(sin(x1))*sqrt(2+x1)/(1+x1^2)^1.5 + log(3+cos(x1))^x1");
  for (int trial = 0; trial < 20; ++trial) {
    const double x0 = testing::uniform(-1, 1);
    Jet3 v = e.eval<Jet3>(std::vector<Jet3>{Jet3::variable(x0, 1.0)});
    auto f = [&](double t) { return e(std::vector<double>{t}); };
    const double h = 1e-3;
    const double d1 = (f(x0 + h) - f(x0 - h)) / (2 * h);
    const double d2 = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / (h * h);
    const double d3 = (f(x0 + 2 * h) - 2 * f(x0 + h) + 2 * f(x0 - h) - f(x0 - 2 * h)) / (2 * h * h * h);
    CHECK_THAT(v.value(), WithinAbs(f(x0), 1e-14));
    CHECK_THAT(v.derivative(1), WithinAbs(d1, 1e-5));
    CHECK_THAT(v.derivative(2), WithinAbs(d2, 1e-4));
    CHECK_THAT(v.derivative(3), WithinAbs(d3, 1e-3));
  }
}

TEST_CASE("evaluation domain errors") {
  CHECK_THROWS_AS(parse_expression("log(x1)")(std::vector<double>{-1.0}), Error);
  CHECK_THROWS_AS(parse_expression("1/x1")(std::vector<double>{0.0}), Error);
  CHECK_THROWS_AS(parse_expression("x2")(std::vector<double>{0.0}), Error);
}
