#pragma once

// The competitive benchmark: geometric-mean pricing and the optimal
// market-clearing securities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "risksharing/agents.hpp"
#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"

namespace risksharing {

struct ArrowDebreuEquilibrium {
  Measure pricing;
  std::vector<RandomVariable> securities;
  std::vector<double> agent_gains;
  double aggregate_gain = 0.0;
};

/// delta_i * log(dP_i/dQ) + delta_i * H(Q|P_i), the optimal security for
/// agent i against pricing measure Q.
inline RandomVariable sharing_rule_security(double delta_i, const Measure& beliefs,
                                            const Measure& pricing) {
  const double h = relative_entropy(pricing, beliefs);
  std::vector<double> c(pricing.size());
  for (std::size_t s = 0; s < c.size(); ++s) {
    c[s] = delta_i * (beliefs.log_weight(s) - pricing.log_weight(s)) + delta_i * h;
  }
  return RandomVariable(std::move(c));
}

inline ArrowDebreuEquilibrium solve_arrow_debreu(const Market& market) {
  ArrowDebreuEquilibrium ad;
  const std::vector<Measure> beliefs = market.beliefs();
  ad.pricing = geometric_mean_measure(beliefs, market.lambdas());

  const std::size_t last = market.size() - 1;
  const std::size_t states = market.states();
  std::vector<double> sum(states, 0.0);
  for (std::size_t i = 0; i < last; ++i) {
    RandomVariable c = sharing_rule_security(market.delta_i(i), beliefs[i], ad.pricing);
    for (std::size_t s = 0; s < states; ++s) sum[s] += c[s];
    ad.securities.push_back(std::move(c));
  }
  std::vector<double> closing(states);
  for (std::size_t s = 0; s < states; ++s) closing[s] = -sum[s];
  RandomVariable c_last(std::move(closing));

  const RandomVariable direct = sharing_rule_security(market.delta_i(last), beliefs[last], ad.pricing);
  double scale = 1.0;
  for (const RandomVariable& c : ad.securities) scale = std::max(scale, c.sup_norm());
  scale = std::max(scale, direct.sup_norm());
  const double gap = sup_distance(c_last, direct);
  if (gap > 1e-9 * scale) {
    throw SolverError("solve_arrow_debreu: closing security deviates from the sharing rule by " +
                      std::to_string(gap));
  }
  ad.securities.push_back(std::move(c_last));

  detail::CompensatedSum total;
  for (std::size_t i = 0; i < market.size(); ++i) {
    const double g = market.delta_i(i) * relative_entropy(ad.pricing, beliefs[i]);
    ad.agent_gains.push_back(g);
    total.add(g);
  }
  ad.aggregate_gain = total.value();
  return ad;
}

/// U_i(c) - U_i(C*_i) = -delta_i log E_{Q*}[exp(-(c - C*_i)/delta_i)].
inline double utility_gain_vs_ad(const Market& market, const ArrowDebreuEquilibrium& ad,
                                 std::size_t i, const RandomVariable& c) {
  const Agent probe{market.delta_i(i), ad.pricing};
  return cara_utility(probe, c - ad.securities.at(i));
}

}  // namespace risksharing
