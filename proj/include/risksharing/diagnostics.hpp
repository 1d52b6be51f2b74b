#pragma once

// Post-equilibrium analytics: efficiency loss, its decompositions, the
// marginal indifference valuation measures and the revealed-belief bounds.
// Every identity is recomputed from (market, C, Q) and reported as a
// residual; bounds are reported as slacks (negative means violated).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "risksharing/agents.hpp"
#include "risksharing/arrow_debreu.hpp"
#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"
#include "risksharing/nash.hpp"

namespace risksharing {

/// A named number checked against a threshold. Residuals must stay below
/// their tolerance; slacks must stay above minus their tolerance.
struct Check {
  enum class Kind { residual, slack };
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  Kind kind = Kind::residual;

  bool ok() const {
    if (!std::isfinite(value)) return false;
    return kind == Kind::residual ? value <= tolerance : value >= -tolerance;
  }
};

inline constexpr double kIdentityTolerance = 1e-8;
inline constexpr double kBoundTolerance = 1e-12;

struct NashDiagnostics {
  double efficiency_loss = 0.0;
  std::vector<double> per_agent_delta;
  std::vector<Measure> marginal_measures;
  std::vector<double> alpha_weights;
  std::vector<double> entropy_terms;
  std::vector<double> undervaluation;
  std::vector<double> belief_distance;
  std::vector<double> marginal_prices;
  std::vector<Check> checks;
};

inline NashDiagnostics compute_diagnostics(const Market& market, const ArrowDebreuEquilibrium& ad,
                                           const NashEquilibrium& nash) {
  const std::size_t agents = market.size();
  const std::size_t states = market.states();
  if (ad.securities.size() != agents || nash.securities.size() != agents ||
      nash.revealed.size() != agents || nash.z.size() != agents) {
    throw ContractError("compute_diagnostics: equilibrium does not match the market roster");
  }
  if (ad.pricing.size() != states || nash.pricing.size() != states) {
    throw ContractError("compute_diagnostics: equilibrium lives on a different state space");
  }
  const double n = static_cast<double>(market.n());
  const Measure& q = nash.pricing;
  const std::vector<RandomVariable>& c = nash.securities;

  NashDiagnostics dg;
  std::vector<double> u(agents);
  double u_total = 0.0;
  for (std::size_t i = 0; i < agents; ++i) {
    u[i] = cara_utility(market.agent(i), c[i]);
    u_total += u[i];
  }
  const double u_star = ad.aggregate_gain;
  dg.efficiency_loss = u_star - u_total;

  // log(1 + C_i/delta_{-i}). The solver's own values are preferred: near the
  // lower bound, recomputing them from C loses most digits or hits log(0).
  std::vector<RandomVariable> margin;
  for (std::size_t i = 0; i < agents; ++i) {
    if (nash.log_theta.size() == agents && nash.log_theta[i].size() == states) {
      margin.push_back(nash.log_theta[i]);
    } else {
      const double dm = market.delta_minus(i);
      margin.push_back(c[i].map([dm](double x) { return std::log1p(x / dm); }));
    }
  }

  // log of the product prod_i (1 + C_i/delta_{-i})^{lambda_i}, per state.
  std::vector<double> log_prod(states, 0.0);
  for (std::size_t i = 0; i < agents; ++i) {
    for (std::size_t s = 0; s < states; ++s) log_prod[s] += market.lambda(i) * margin[i][s];
  }

  for (std::size_t i = 0; i < agents; ++i) {
    const double di = market.delta_i(i);
    dg.per_agent_delta.push_back(u[i] - ad.agent_gains[i]);
    dg.alpha_weights.push_back(market.lambda_minus(i) / n);
    dg.marginal_measures.push_back(normalize_log_density(q, margin[i]));
    dg.entropy_terms.push_back(di * relative_entropy(ad.pricing, dg.marginal_measures[i]));
    dg.undervaluation.push_back(expect(ad.pricing, c[i]));
    dg.belief_distance.push_back(relative_entropy(market.agent(i).beliefs, nash.revealed[i]));
    dg.marginal_prices.push_back(expect(dg.marginal_measures[i], c[i]));
  }

  auto residual = [&](std::string name, double value) {
    dg.checks.push_back(Check{std::move(name), value, kIdentityTolerance, Check::Kind::residual});
  };
  auto slack = [&](std::string name, double value) {
    dg.checks.push_back(Check{std::move(name), value, kBoundTolerance, Check::Kind::slack});
  };

  // u - u* = delta log E_Q[prod_i (1 + C_i/delta_{-i})^{lambda_i}]
  {
    const double m = *std::max_element(log_prod.begin(), log_prod.end());
    detail::CompensatedSum acc;
    for (std::size_t s = 0; s < states; ++s) acc.add(q.weight(s) * std::exp(log_prod[s] - m));
    const double rhs = market.delta() * (m + std::log(acc.value()));
    residual("loss_formula", std::abs((u_total - u_star) - rhs));
  }

  double worst_decomp = 0.0;
  double worst_indiv = 0.0;
  double worst_variance = 0.0;
  double worst_utility = 0.0;
  double worst_density = 0.0;
  double worst_indifference = 0.0;
  for (std::size_t i = 0; i < agents; ++i) {
    const double dm = market.delta_minus(i);
    const double di = market.delta_i(i);
    worst_decomp = std::max(
        worst_decomp,
        std::abs(dg.per_agent_delta[i] - nash.z[i] - market.lambda(i) * (u_total - u_star)));
    worst_indiv = std::max(worst_indiv, std::abs(dg.per_agent_delta[i] -
                                                 (dg.undervaluation[i] - dg.entropy_terms[i])));
    worst_variance =
        std::max(worst_variance, std::abs(dg.marginal_prices[i] - variance(q, c[i]) / dm));
    const Measure& qi = dg.marginal_measures[i];
    worst_utility = std::max(
        worst_utility, std::abs(u[i] - (di * relative_entropy(q, market.agent(i).beliefs) -
                                        di * relative_entropy(q, qi))));
    for (std::size_t s = 0; s < states; ++s) {
      const double ratio = std::exp(qi.log_weight(s) - q.log_weight(s));
      worst_density = std::max(worst_density, std::abs(ratio - (1.0 + c[i][s] / dm)));
    }
    const Measure indifference = normalize_log_density(market.agent(i).beliefs, c[i] / (-di));
    worst_indifference = std::max(worst_indifference, weight_distance(qi, indifference));
  }
  residual("loss_decomposition", worst_decomp);
  {
    double sum = 0.0;
    for (double t : dg.entropy_terms) sum += t;
    residual("entropy_aggregate", std::abs(dg.efficiency_loss - sum));
  }
  residual("entropy_individual", worst_indiv);
  residual("marginal_density", worst_density);
  residual("marginal_indifference_measure", worst_indifference);
  {
    double worst = 0.0;
    for (std::size_t s = 0; s < states; ++s) {
      double mix = 0.0;
      for (std::size_t i = 0; i < agents; ++i) {
        mix += dg.alpha_weights[i] * dg.marginal_measures[i].weight(s);
      }
      worst = std::max(worst, std::abs(mix - q.weight(s)));
    }
    residual("pricing_decomposition", worst);
  }
  residual("marginal_price_variance", worst_variance);
  residual("utility_identity", worst_utility);

  slack("efficiency_loss", dg.efficiency_loss);
  {
    double density = std::numeric_limits<double>::infinity();
    double lower = std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < states; ++s) {
      double weighted = 0.0;
      double plain = 0.0;
      for (std::size_t i = 0; i < agents; ++i) {
        const double ratio =
            std::exp(market.agent(i).beliefs.log_weight(s) - nash.revealed[i].log_weight(s));
        density = std::min(density, n / market.lambda_minus(i) - ratio);
        weighted += dg.alpha_weights[i] * ratio;
        plain += ratio;
      }
      lower = std::min(lower, 1.0 - weighted);
      upper = std::min(upper, plain - 1.0);
    }
    slack("belief_density_bound", density);
    slack("belief_sandwich_weighted", lower);
    slack("belief_sandwich_plain", upper);
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < agents; ++i) {
      worst = std::min(worst, std::log(n / market.lambda_minus(i)) - dg.belief_distance[i]);
    }
    slack("belief_entropy_bound", worst);
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < agents; ++i) {
      worst = std::min(worst, dg.marginal_prices[i]);
    }
    slack("marginal_price_sign", worst);
  }
  return dg;
}

}  // namespace risksharing
