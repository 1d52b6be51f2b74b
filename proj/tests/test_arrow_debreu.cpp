#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "risksharing/arrow_debreu.hpp"
#include "risksharing/quadrature.hpp"
#include "test_support.hpp"

using namespace risksharing;

namespace {

Market beta_market(double beta, int order) {
  const ModelStates ms = gaussian_quadrature_states({"X"}, {0.0}, {{1.0}}, order);
  const Measure& p = ms.space.baseline();
  const RandomVariable& x = ms.variables[0];
  return Market({Agent{1.0, normalize_log_density(p, x * beta)},
                 Agent{1.0, normalize_log_density(p, x * -beta)}});
}

// A random security with zero price under q.
RandomVariable zero_price_direction(testing_support::Gen& gen, const Measure& q) {
  const RandomVariable x = gen.variable(q.size());
  return x - expect(q, x);
}

}  // namespace

TEST(ArrowDebreu, CommonBeliefsMeansNoTrade) {
  testing_support::Gen gen(101);
  for (int trial = 0; trial < 10; ++trial) {
    const Market m = gen.common_beliefs_market(gen.integer(2, 5), gen.integer(2, 50));
    const ArrowDebreuEquilibrium ad = solve_arrow_debreu(m);
    for (const RandomVariable& c : ad.securities) EXPECT_LE(c.sup_norm(), 1e-12);
    EXPECT_LT(weight_distance(ad.pricing, m.agent(0).beliefs), 1e-15);
    EXPECT_NEAR(ad.aggregate_gain, 0.0, 1e-14);
  }
}

TEST(ArrowDebreu, TwoStateHandComputation) {
  // Q* ~ sqrt(P0 P1) with P0 = (0.5, 0.5), P1 = (0.8, 0.2): (2/3, 1/3).
  const Market m({Agent{1.0, Measure::from_weights({0.5, 0.5})}, Agent{1.0, Measure::from_weights({0.8, 0.2})}});
  const ArrowDebreuEquilibrium ad = solve_arrow_debreu(m);
  EXPECT_NEAR(ad.pricing.weight(0), 2.0 / 3.0, 1e-15);
  const double h0 = (2.0 / 3.0) * std::log((2.0 / 3.0) / 0.5) + (1.0 / 3.0) * std::log((1.0 / 3.0) / 0.5);
  EXPECT_NEAR(ad.securities[0][0], std::log(0.5 / (2.0 / 3.0)) + h0, 1e-15);
  EXPECT_NEAR(ad.securities[0][1], std::log(0.5 / (1.0 / 3.0)) + h0, 1e-15);
  EXPECT_NEAR(ad.agent_gains[0], h0, 1e-15);
}

TEST(ArrowDebreu, BetaExample) {
  const double beta = 1.0;
  const Market m = beta_market(beta, 64);
  const ModelStates ms = gaussian_quadrature_states({"X"}, {0.0}, {{1.0}}, 64);
  const ArrowDebreuEquilibrium ad = solve_arrow_debreu(m);
  EXPECT_LE(sup_distance(ad.securities[0], ms.variables[0] * beta), 1e-12);
  EXPECT_NEAR(ad.agent_gains[0], beta * beta / 2.0, 1e-10);
  EXPECT_NEAR(ad.agent_gains[1], beta * beta / 2.0, 1e-10);
  EXPECT_LT(weight_distance(ad.pricing, ms.space.baseline()), 1e-15);
}

TEST(ArrowDebreu, GaussianEndowmentsSplitTheDifference) {
  const ModelStates ms = gaussian_quadrature_states({"E0", "E1"}, {0.0, 0.0}, {{1.0, -0.5}, {-0.5, 1.0}}, 24);
  const Measure& p = ms.space.baseline();
  const RandomVariable& e0 = ms.variables[0];
  const RandomVariable& e1 = ms.variables[1];
  const Market m({endowment_to_beliefs(p, e0, 1.0), endowment_to_beliefs(p, e1, 1.0)});
  const ArrowDebreuEquilibrium ad = solve_arrow_debreu(m);
  EXPECT_LE(sup_distance(ad.securities[0], (e1 - e0) * 0.5), 1e-10);
}

TEST(ArrowDebreu, EquilibriumProperties) {
  testing_support::Gen gen(7);
  for (int trial = 0; trial < 30; ++trial) {
    const Market m = gen.market(gen.integer(2, 5), gen.integer(2, 80));
    const ArrowDebreuEquilibrium ad = solve_arrow_debreu(m);

    // Q* is the lambda-weighted geometric mean, recomputed by hand.
    std::vector<double> logs(m.states(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t s = 0; s < m.states(); ++s) logs[s] += m.lambda(i) * m.agent(i).beliefs.log_weight(s);
    }
    EXPECT_LT(weight_distance(ad.pricing, Measure::from_log_weights(logs)), 1e-14);

    double gains = 0.0;
    std::vector<double> clearing(m.states(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const RandomVariable& c = ad.securities[i];
      EXPECT_NEAR(expect(ad.pricing, c), 0.0, 1e-12 * m.delta());
      EXPECT_NEAR(ad.agent_gains[i], cara_utility(m.agent(i), c), 1e-11 * m.delta());
      EXPECT_GE(ad.agent_gains[i], -1e-14);
      gains += ad.agent_gains[i];
      for (std::size_t s = 0; s < m.states(); ++s) clearing[s] += c[s];
      // No zero-price deviation improves on C*_i.
      for (int k = 0; k < 5; ++k) {
        const RandomVariable d = zero_price_direction(gen, ad.pricing) * 0.05;
        EXPECT_LE(cara_utility(m.agent(i), c + d), ad.agent_gains[i] + 1e-12);
      }
    }
    for (double v : clearing) EXPECT_NEAR(v, 0.0, 1e-11 * m.delta());
    EXPECT_NEAR(ad.aggregate_gain, gains, 1e-12 * m.delta());
  }
}

TEST(UtilityGainVsAd, Examples) {
  testing_support::Gen gen(31);
  const Market m = gen.market(3, 3);
  const ArrowDebreuEquilibrium ad = solve_arrow_debreu(m);
  EXPECT_EQ(utility_gain_vs_ad(m, ad, 1, ad.securities[1]), 0.0);
  EXPECT_NEAR(utility_gain_vs_ad(m, ad, 1, ad.securities[1] + 5.0), 5.0, 1e-13);
  for (int k = 0; k < 10; ++k) {
    const RandomVariable c = zero_price_direction(gen, ad.pricing);
    const double direct = cara_utility(m.agent(2), c) - cara_utility(m.agent(2), ad.securities[2]);
    EXPECT_NEAR(utility_gain_vs_ad(m, ad, 2, c), direct, 1e-12);
  }
}
