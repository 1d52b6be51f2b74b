#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "risksharing/limits.hpp"
#include "test_support.hpp"

using namespace risksharing;

namespace {

const Measure kP0 = Measure::from_weights({0.6, 0.4});
const Agent kAgent1{1.0, Measure::from_weights({0.5, 0.5})};

}  // namespace

TEST(LimitingArrowDebreu, EqualBeliefsMeansNoTrade) {
  const LimitingArrowDebreu lad = limiting_arrow_debreu(kAgent1.beliefs, kAgent1);
  EXPECT_EQ(lad.security.sup_norm(), 0.0);
  EXPECT_EQ(lad.gain_agent0, 0.0);
  EXPECT_EQ(lad.gain_agent1, 0.0);
}

TEST(LimitingArrowDebreu, TwoStateHandValue) {
  const double h = 0.6 * std::log(1.2) + 0.4 * std::log(0.8);
  EXPECT_NEAR(h, 0.02014, 1e-5);
  const LimitingArrowDebreu lad = limiting_arrow_debreu(kP0, kAgent1);
  EXPECT_NEAR(lad.security[0], std::log(1.2) - h, 1e-15);
  EXPECT_NEAR(lad.security[1], std::log(0.8) - h, 1e-15);
  EXPECT_NEAR(lad.gain_agent1, h, 1e-15);
}

TEST(LimitingArrowDebreu, FiniteToleranceApproaches) {
  const LimitingArrowDebreu lad = limiting_arrow_debreu(kP0, kAgent1);
  const ArrowDebreuEquilibrium ad = solve_arrow_debreu(Market({Agent{1e4, kP0}, kAgent1}));
  EXPECT_LE(sup_distance(ad.securities[0], lad.security), 1e-3);
}

TEST(LimitingNash, EqualBeliefsMeansNoTrade) {
  const LimitingNash ln = limiting_nash(kAgent1.beliefs, kAgent1);
  EXPECT_EQ(ln.z, 0.0);
  EXPECT_EQ(ln.security.sup_norm(), 0.0);
  const LimitingGains g = limiting_gains(kAgent1.beliefs, kAgent1);
  EXPECT_EQ(g.gain_agent0, 0.0);
  EXPECT_EQ(g.loss_agent1, 0.0);
}

TEST(LimitingNash, RootAndAccounting) {
  const LimitingNash ln = limiting_nash(kP0, kAgent1);
  EXPECT_LE(std::abs(ln.root_residual), 1e-12);
  EXPECT_LE(limiting_accounting_residual(kP0, kAgent1, ln), 1e-12);
  EXPECT_GT(ln.security.min(), -kAgent1.delta);
  EXPECT_NEAR(expect(ln.pricing, ln.security), 0.0, 1e-14);
  // C(z) solves C + delta_1 log(1 + C/delta_1) = z + C* per state.
  const LimitingArrowDebreu lad = limiting_arrow_debreu(kP0, kAgent1);
  for (std::size_t s = 0; s < 2; ++s) {
    const double c = ln.security[s];
    EXPECT_NEAR(c + std::log1p(c), ln.z + lad.security[s], 1e-14);
  }
}

TEST(LimitingNash, RootFunctionIsDecreasing) {
  const LimitingArrowDebreu lad = limiting_arrow_debreu(kP0, kAgent1);
  double prev = limiting_root_function(kP0, 1.0, -2.0, lad.security);
  for (double z = -1.9; z < 2.0; z += 0.1) {
    const double v = limiting_root_function(kP0, 1.0, z, lad.security);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(LimitingNash, FiniteToleranceRoutesApproach) {
  const LimitingNash ln = limiting_nash(kP0, kAgent1);
  const Market m({Agent{1e5, kP0}, kAgent1});
  const ArrowDebreuEquilibrium ad = solve_arrow_debreu(m);
  const NashEquilibrium eq = solve_nash(m, ad);
  EXPECT_LE(sup_distance(eq.securities[0], ln.security), 1e-3);
  const BestResponse br = solve_best_response(m, 0, truthful_others(m, 0));
  EXPECT_LE(sup_distance(br.security, ln.security), 1e-3);
  const LimitingGains g = limiting_gains(kP0, kAgent1, ln);
  EXPECT_NEAR(eq.agent_values[0] - ad.agent_gains[0], g.gain_agent0, 1e-2);
  EXPECT_NEAR(eq.agent_values[1] - ad.agent_gains[1], g.loss_agent1, 1e-2);
}

TEST(LimitReport, ConvergesMonotonically) {
  const LimitReport rep = limit_report(kP0, kAgent1, default_limit_deltas());
  ASSERT_EQ(rep.convergence_table.size(), 4u);
  for (std::size_t k = 1; k < rep.convergence_table.size(); ++k) {
    const LimitConvergenceRow& a = rep.convergence_table[k - 1];
    const LimitConvergenceRow& b = rep.convergence_table[k];
    EXPECT_LT(b.ad_distance, a.ad_distance);
    EXPECT_LT(b.nash_distance, a.nash_distance);
    EXPECT_LT(b.best_response_distance, a.best_response_distance);
  }
  const LimitConvergenceRow& last = rep.convergence_table.back();
  EXPECT_LE(last.ad_distance, 1e-3);
  EXPECT_LE(last.nash_distance, 1e-3);
  EXPECT_LE(last.gain_gap0, 1e-2);
  EXPECT_LE(last.gain_gap1, 1e-2);
}

TEST(LimitingGains, PropertiesOnRandomInstances) {
  testing_support::Gen gen(70);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = gen.integer(2, 30);
    const Measure p0 = gen.measure(n);
    const Agent a1{gen.delta(), gen.measure(n)};
    const LimitingNash ln = limiting_nash(p0, a1);
    const LimitingGains g = limiting_gains(p0, a1, ln);
    EXPECT_GE(g.gain_agent0, 0.0);
    EXPECT_LE(g.loss_agent1, 1e-15);
    EXPECT_LE(std::abs(ln.root_residual), 1e-10);
    EXPECT_LE(limiting_accounting_residual(p0, a1, ln), 1e-10 * std::max(1.0, a1.delta));
  }
}

TEST(BothLimit, EqualTiltsMeanNoTrade) {
  const Measure p = Measure::uniform(2);
  const RandomVariable xi({1.0, -1.0});
  const std::vector<double> deltas{10.0};
  const BothLimitReport rep = both_limit_check(p, xi, xi, 0.5, deltas);
  EXPECT_EQ(rep.limiting_ad_security.sup_norm(), 0.0);
  EXPECT_EQ(rep.limiting_nash_security.sup_norm(), 0.0);
}

TEST(BothLimit, HalfTheArrowDebreuVolume) {
  const Measure p = Measure::uniform(2);
  const std::vector<double> deltas{10.0, 100.0, 1000.0, 10000.0};
  const BothLimitReport rep = both_limit_check(p, RandomVariable({1.0, -1.0}), RandomVariable({-1.0, 1.0}), 0.5, deltas);
  EXPECT_NEAR(rep.limiting_ad_security[0], 1.0, 1e-15);
  EXPECT_NEAR(rep.limiting_ad_security[1], -1.0, 1e-15);
  EXPECT_NEAR(rep.limiting_nash_security[0], 0.5, 1e-15);
  EXPECT_NEAR(rep.limiting_nash_security[1], -0.5, 1e-15);
  for (std::size_t k = 1; k < 3; ++k) EXPECT_LE(rep.rows[k].nash_distance, rep.rows[k - 1].nash_distance / 5.0);
  EXPECT_LE(rep.rows.back().nash_distance, 1e-3);
  EXPECT_NEAR(rep.rows.back().volume_ratio, 0.5, 1e-3);
}

TEST(BothLimit, RejectsBadShare) {
  const Measure p = Measure::uniform(2);
  const RandomVariable xi({1.0, -1.0});
  const std::vector<double> deltas{10.0};
  EXPECT_THROW(both_limit_check(p, xi, xi, 1.0, deltas), ContractError);
  EXPECT_THROW(both_limit_check(p, xi, RandomVariable::zeros(3), 0.5, deltas), DimensionError);
}
