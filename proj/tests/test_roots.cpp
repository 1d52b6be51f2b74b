#include <cmath>
#include <utility>

#include <gtest/gtest.h>

#include "risksharing/roots.hpp"
#include "test_support.hpp"

using namespace risksharing;

TEST(SolveExpLinear, ZeroRightSideGivesZero) { EXPECT_EQ(solve_exp_linear(1.0, 1.0, 0.0), 0.0); }

TEST(SolveExpLinear, ConstructedInversePoint) {
  // alpha = 2, beta = 1, t = log 2: 2 * (2 - 1) + log 2.
  EXPECT_NEAR(solve_exp_linear(2.0, 1.0, 2.0 + std::log(2.0)), std::log(2.0), 1e-15);
}

TEST(SolveExpLinear, ResidualOverWideRange) {
  testing_support::Gen gen(3);
  for (int trial = 0; trial < 500; ++trial) {
    const double alpha = std::exp(gen.uniform(-6.0, 6.0));
    const double beta = std::exp(gen.uniform(-6.0, 6.0));
    const double a = gen.uniform(-1.0, 1.0) * std::exp(gen.uniform(-10.0, 12.0));
    const double t = solve_exp_linear(alpha, beta, a);
    const double lhs = alpha * std::expm1(t) + beta * t;
    EXPECT_LE(std::abs(lhs - a), 1e-13 * (1.0 + std::abs(a))) << alpha << " " << beta << " " << a;
  }
}

TEST(SolveExpLinear, MonotoneInRightSide) {
  double prev = solve_exp_linear(1.0, 0.5, -50.0);
  for (double a = -49.0; a <= 50.0; a += 1.0) {
    const double t = solve_exp_linear(1.0, 0.5, a);
    EXPECT_GT(t, prev);
    prev = t;
  }
}

TEST(SolveExpLinear, RejectsNonPositiveCoefficients) {
  EXPECT_THROW(solve_exp_linear(0.0, 1.0, 1.0), ContractError);
  EXPECT_THROW(solve_exp_linear(1.0, -1.0, 1.0), ContractError);
}

TEST(SafeguardedNewton, FindsCubeRoot) {
  auto fdf = [](double x) { return std::pair{x * x * x - 2.0, 3.0 * x * x}; };
  const NewtonResult r = safeguarded_newton(fdf, Bracket{0.0, 4.0}, 1e-15, 200);
  EXPECT_NEAR(r.x, std::cbrt(2.0), 1e-14);
}

TEST(SafeguardedNewton, SurvivesFlatDerivative) {
  // f' vanishes at 0, Newton from the midpoint would jump out of the bracket.
  auto fdf = [](double x) { return std::pair{std::atan(x - 0.3), 1.0 / (1.0 + (x - 0.3) * (x - 0.3))}; };
  const NewtonResult r = safeguarded_newton(fdf, Bracket{-50.0, 20.0}, 1e-15, 300);
  EXPECT_NEAR(r.x, 0.3, 1e-13);
}

TEST(ExpandBracket, GrowsUntilSignChange) {
  auto f = [](double x) { return x - 37.5; };
  const Bracket b = expand_bracket(f, 0.0, 1e6);
  EXPECT_LT(f(b.lo), 0.0);
  EXPECT_GT(f(b.hi), 0.0);
}

TEST(ExpandBracket, ThrowsPastLimit) {
  EXPECT_THROW(expand_bracket([](double x) { return x - 1e7; }, 0.0, 1e6), SolverError);
  EXPECT_THROW(expand_bracket([](double) { return -1.0; }, 0.0, 1e3), SolverError);
}

TEST(Toms748Root, MatchesClosedForm) {
  auto f = [](double x) { return std::exp(x) - 3.0; };
  EXPECT_NEAR(toms748_root(f, Bracket{-5.0, 5.0}), std::log(3.0), 1e-15);
}

TEST(Toms748Root, RejectsBracketWithoutSignChange) {
  EXPECT_THROW(toms748_root([](double x) { return x + 10.0; }, Bracket{0.0, 1.0}), SolverError);
}

TEST(BisectIncreasing, ReachesAdjacentDoubles) {
  auto f = [](double x) { return x * x - 2.0; };
  const double r = bisect_increasing(f, Bracket{0.0, 2.0});
  EXPECT_NEAR(r, std::sqrt(2.0), 4e-16);
}

TEST(BisectIncreasing, IsDeterministic) {
  auto f = [](double x) { return std::sinh(x) - 0.7; };
  EXPECT_EQ(bisect_increasing(f, Bracket{-3.0, 3.0}), bisect_increasing(f, Bracket{-3.0, 3.0}));
}
