#pragma once

// Extreme risk tolerance. Agent 0 becomes risk neutral while agent 1 keeps
// (delta_1, P_1); or both tolerances grow at a fixed ratio with beliefs
// tilted by xi_i / delta_i around a common P.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "risksharing/agents.hpp"
#include "risksharing/arrow_debreu.hpp"
#include "risksharing/best_response.hpp"
#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"
#include "risksharing/nash.hpp"
#include "risksharing/roots.hpp"

namespace risksharing {

struct LimitingArrowDebreu {
  RandomVariable security;
  double gain_agent0 = 0.0;
  double gain_agent1 = 0.0;
};

/// delta_1 log(dP_0/dP_1) - delta_1 H(P_0|P_1), with gains (0, delta_1 H(P_0|P_1)).
inline LimitingArrowDebreu limiting_arrow_debreu(const Measure& p0, const Agent& agent1) {
  validate_delta(agent1.delta);
  detail::require_same_size(p0.size(), agent1.beliefs.size(), "limiting_arrow_debreu");
  const double d1 = agent1.delta;
  const double h = relative_entropy(p0, agent1.beliefs);
  std::vector<double> c(p0.size());
  for (std::size_t s = 0; s < c.size(); ++s) {
    c[s] = d1 * (p0.log_weight(s) - agent1.beliefs.log_weight(s)) - d1 * h;
  }
  return {RandomVariable(std::move(c)), 0.0, d1 * h};
}

/// log(1 + C/delta_1) for the limiting security at level z.
inline RandomVariable limiting_log_density(double delta1, double z, const RandomVariable& c_star) {
  return c_star.map([&](double c) { return solve_exp_linear(delta1, delta1, z + c); });
}

/// C solving C + delta_1 log(1 + C/delta_1) = z + C_star per state.
inline RandomVariable limiting_security(double delta1, double z, const RandomVariable& c_star) {
  return limiting_log_density(delta1, z, c_star).map([delta1](double t) {
    return delta1 * std::expm1(t);
  });
}

/// E_{P_0}[(1 + C(z)/delta_1)^{-1}] - 1; strictly decreasing in z.
inline double limiting_root_function(const Measure& p0, double delta1, double z,
                                     const RandomVariable& c_star) {
  const RandomVariable t = limiting_log_density(delta1, z, c_star);
  return expect(p0, t.map([](double x) { return std::exp(-x); })) - 1.0;
}

struct LimitingNash {
  double z = 0.0;
  RandomVariable security;
  Measure pricing;
  double root_residual = 0.0;
};

inline LimitingNash limiting_nash(const Measure& p0, const Agent& agent1) {
  const LimitingArrowDebreu ad = limiting_arrow_debreu(p0, agent1);
  const double d1 = agent1.delta;
  auto g = [&](double z) { return -limiting_root_function(p0, d1, z, ad.security); };
  const Bracket bracket = expand_bracket(g, 0.0, 1e6 * (1.0 + d1));
  LimitingNash out;
  out.z = toms748_root(g, bracket);
  const RandomVariable t = limiting_log_density(d1, out.z, ad.security);
  out.security = t.map([d1](double x) { return d1 * std::expm1(x); });
  out.pricing = normalize_log_density(p0, -t);
  out.root_residual = limiting_root_function(p0, d1, out.z, ad.security);
  return out;
}

struct LimitingGains {
  double gain_agent0 = 0.0;
  double loss_agent1 = 0.0;
};

inline LimitingGains limiting_gains(const Measure& p0, const Agent& agent1,
                                    const LimitingNash& limit) {
  const double v = variance(limit.pricing, limit.security) / agent1.delta;
  return {v, -v - agent1.delta * relative_entropy(p0, limit.pricing)};
}

inline LimitingGains limiting_gains(const Measure& p0, const Agent& agent1) {
  return limiting_gains(p0, agent1, limiting_nash(p0, agent1));
}

/// |z - Var_Q(C)/delta_1 - delta_1 H(P_0|Q)| at the limiting root.
inline double limiting_accounting_residual(const Measure& p0, const Agent& agent1,
                                           const LimitingNash& limit) {
  const LimitingGains g = limiting_gains(p0, agent1, limit);
  return std::abs(limit.z - g.gain_agent0 - agent1.delta * relative_entropy(p0, limit.pricing));
}

struct LimitConvergenceRow {
  double delta0 = 0.0;
  double ad_distance = 0.0;
  double nash_distance = 0.0;
  double best_response_distance = 0.0;
  double z_distance = 0.0;
  /// |(u_0 Nash - u_0 AD) - gain_0| and the same for agent 1 against loss_1.
  double gain_gap0 = 0.0;
  double gain_gap1 = 0.0;
};

struct LimitReport {
  RandomVariable limiting_ad_security;
  double ad_gain_agent0 = 0.0;
  double ad_gain_agent1 = 0.0;
  RandomVariable limiting_nash_security;
  double z_infinity = 0.0;
  Measure limiting_pricing;
  double gain_agent0 = 0.0;
  double loss_agent1 = 0.0;
  double root_residual = 0.0;
  double accounting_residual = 0.0;
  std::vector<LimitConvergenceRow> convergence_table;
};

inline const std::vector<double>& default_limit_deltas() {
  static const std::vector<double> deltas{1e2, 1e3, 1e4, 1e5};
  return deltas;
}

inline LimitReport limit_report(const Measure& p0, const Agent& agent1,
                                std::span<const double> deltas, const NashConfig& config = {}) {
  LimitReport rep;
  const LimitingArrowDebreu lad = limiting_arrow_debreu(p0, agent1);
  const LimitingNash ln = limiting_nash(p0, agent1);
  const LimitingGains lg = limiting_gains(p0, agent1, ln);
  rep.limiting_ad_security = lad.security;
  rep.ad_gain_agent0 = lad.gain_agent0;
  rep.ad_gain_agent1 = lad.gain_agent1;
  rep.limiting_nash_security = ln.security;
  rep.z_infinity = ln.z;
  rep.limiting_pricing = ln.pricing;
  rep.gain_agent0 = lg.gain_agent0;
  rep.loss_agent1 = lg.loss_agent1;
  rep.root_residual = ln.root_residual;
  rep.accounting_residual = limiting_accounting_residual(p0, agent1, ln);

  for (double d0 : deltas) {
    const Market market({Agent{d0, p0}, agent1});
    const ArrowDebreuEquilibrium ad = solve_arrow_debreu(market);
    const NashEquilibrium nash = solve_nash(market, ad, config);
    const std::vector<Measure> others = truthful_others(market, 0);
    const BestResponse br = solve_best_response(market, 0, others);
    LimitConvergenceRow row;
    row.delta0 = d0;
    row.ad_distance = sup_distance(ad.securities[0], lad.security);
    row.nash_distance = sup_distance(nash.securities[0], ln.security);
    row.best_response_distance = sup_distance(br.security, ln.security);
    row.z_distance = std::abs(nash.z[0] - ln.z);
    row.gain_gap0 = std::abs(nash.agent_values[0] - ad.agent_gains[0] - lg.gain_agent0);
    row.gain_gap1 = std::abs(nash.agent_values[1] - ad.agent_gains[1] - lg.loss_agent1);
    rep.convergence_table.push_back(row);
  }
  return rep;
}

struct BothLimitRow {
  double delta = 0.0;
  double ad_distance = 0.0;
  double nash_distance = 0.0;
  /// sup|C_0 Nash| / sup|C_0 AD|.
  double volume_ratio = 0.0;
};

struct BothLimitReport {
  double lambda0 = 0.5;
  RandomVariable xi0;
  RandomVariable xi1;
  RandomVariable limiting_ad_security;
  RandomVariable limiting_nash_security;
  std::vector<BothLimitRow> rows;
};

/// Both tolerances delta_i = lambda_i delta, beliefs dP_i/dP ~ exp(xi_i/delta_i).
/// The xi are centred under P before use.
inline Market both_limit_market(const Measure& p, const RandomVariable& xi0,
                                const RandomVariable& xi1, double lambda0, double delta) {
  const double d0 = lambda0 * delta;
  const double d1 = (1.0 - lambda0) * delta;
  return Market({Agent{d0, normalize_log_density(p, xi0 / d0)},
                 Agent{d1, normalize_log_density(p, xi1 / d1)}});
}

inline BothLimitReport both_limit_check(const Measure& p, const RandomVariable& xi0,
                                        const RandomVariable& xi1, double lambda0,
                                        std::span<const double> deltas,
                                        const NashConfig& config = {}) {
  detail::require_same_size(p.size(), xi0.size(), "both_limit_check");
  detail::require_same_size(p.size(), xi1.size(), "both_limit_check");
  if (!(lambda0 > 0.0 && lambda0 < 1.0)) {
    throw ContractError("both_limit_check: lambda0 must lie in (0, 1)");
  }
  BothLimitReport rep;
  rep.lambda0 = lambda0;
  rep.xi0 = xi0 - expect(p, xi0);
  rep.xi1 = xi1 - expect(p, xi1);
  const double lambda1 = 1.0 - lambda0;
  rep.limiting_ad_security = rep.xi0 * lambda1 - rep.xi1 * lambda0;
  rep.limiting_nash_security = rep.limiting_ad_security * 0.5;
  for (double delta : deltas) {
    const Market market = both_limit_market(p, rep.xi0, rep.xi1, lambda0, delta);
    const ArrowDebreuEquilibrium ad = solve_arrow_debreu(market);
    const NashEquilibrium nash = solve_nash(market, ad, config);
    BothLimitRow row;
    row.delta = delta;
    row.ad_distance = sup_distance(ad.securities[0], rep.limiting_ad_security);
    row.nash_distance = sup_distance(nash.securities[0], rep.limiting_nash_security);
    const double ad_size = ad.securities[0].sup_norm();
    row.volume_ratio = ad_size > 0.0 ? nash.securities[0].sup_norm() / ad_size : 0.0;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace risksharing
