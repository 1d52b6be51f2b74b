#pragma once

// One agent's optimal reported beliefs against fixed reports of everybody
// else. Two levels: a per-state implicit equation for D = 1 + C/delta_{-i},
// and an outer scalar root fixing the free constant zeta.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "risksharing/agents.hpp"
#include "risksharing/arrow_debreu.hpp"
#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"
#include "risksharing/roots.hpp"

namespace risksharing {

struct BestResponse {
  Measure reported;
  RandomVariable security;
  /// log D = log(1 + C/delta_{-i}).
  RandomVariable log_d;
  Measure valuation;
  double zeta = 0.0;
  double response_value = 0.0;
  /// f(zeta) - 1 at the returned root.
  double root_residual = 0.0;
};

namespace detail {

inline void check_others(const Market& market, std::span<const Measure> others) {
  if (others.size() != market.n()) {
    throw DimensionError("expected " + std::to_string(market.n()) + " counterparty reports, got " +
                         std::to_string(others.size()));
  }
  for (const Measure& r : others) require_same_size(market.states(), r.size(), "report");
}

/// Reports of all agents with `own` inserted at position i.
inline std::vector<Measure> full_profile(std::span<const Measure> others, std::size_t i,
                                         const Measure& own) {
  std::vector<Measure> all(others.begin(), others.end());
  all.insert(all.begin() + static_cast<std::ptrdiff_t>(i), own);
  return all;
}

}  // namespace detail

/// Beliefs of everybody but agent i, in agent order.
inline std::vector<Measure> others_of(std::span<const Measure> profile, std::size_t i) {
  std::vector<Measure> out;
  for (std::size_t j = 0; j < profile.size(); ++j) {
    if (j != i) out.push_back(profile[j]);
  }
  return out;
}

inline std::vector<Measure> truthful_others(const Market& market, std::size_t i) {
  return others_of(market.beliefs(), i);
}

/// R_{-i} = (1/lambda_{-i}) sum_{j != i} lambda_j log(dR_j/dP_i).
inline RandomVariable counterparty_log_density(const Market& market, std::size_t i,
                                               std::span<const Measure> others) {
  detail::check_others(market, others);
  const Measure& p = market.agent(i).beliefs;
  const double lm = market.lambda_minus(i);
  std::vector<double> r(market.states(), 0.0);
  std::size_t k = 0;
  for (std::size_t j = 0; j < market.size(); ++j) {
    if (j == i) continue;
    const double w = market.lambda(j) / lm;
    const Measure& rj = others[k++];
    for (std::size_t s = 0; s < r.size(); ++s) r[s] += w * (rj.log_weight(s) - p.log_weight(s));
  }
  return RandomVariable(std::move(r));
}

/// V_i(R_i; R_{-i}): agent i's certainty equivalent of the security the
/// sharing rule assigns when the reports are (R_{-i}, R_i).
inline double response_value(const Market& market, std::size_t i, const Measure& reported_i,
                             std::span<const Measure> others) {
  detail::check_others(market, others);
  detail::require_same_size(market.states(), reported_i.size(), "report");
  const std::vector<Measure> all = detail::full_profile(others, i, reported_i);
  const Measure q = geometric_mean_measure(all, market.lambdas());
  const RandomVariable c = sharing_rule_security(market.delta_i(i), reported_i, q);
  return cara_utility(market.agent(i), c);
}

/// log D per state, where (D - 1)/lambda_i + log D = z - R_{-i}.
inline RandomVariable solve_inner_log_D(const Market& market, std::size_t i, double z,
                                        const RandomVariable& r_minus) {
  detail::require_same_size(market.states(), r_minus.size(), "solve_inner_D");
  const double alpha = 1.0 / market.lambda(i);
  std::vector<double> t(r_minus.size());
  for (std::size_t s = 0; s < t.size(); ++s) t[s] = solve_exp_linear(alpha, 1.0, z - r_minus[s]);
  return RandomVariable(std::move(t));
}

inline RandomVariable solve_inner_D(const Market& market, std::size_t i, double z,
                                    const RandomVariable& r_minus) {
  return solve_inner_log_D(market, i, z, r_minus).map([](double t) { return std::exp(t); });
}

/// Valuation measure Q_i(z): log dQ/dP_i ~ -lambda_i log D + lambda_{-i} R_{-i}.
inline Measure best_response_valuation(const Market& market, std::size_t i,
                                       const RandomVariable& log_d, const RandomVariable& r_minus) {
  const RandomVariable tilt = log_d * (-market.lambda(i)) + r_minus * market.lambda_minus(i);
  return normalize_log_density(market.agent(i).beliefs, tilt);
}

/// f_i(z) = E_{Q_i(z)}[D_i(z)].
inline double best_response_f(const Market& market, std::size_t i, double z,
                              const RandomVariable& r_minus) {
  const RandomVariable log_d = solve_inner_log_D(market, i, z, r_minus);
  const Measure q = best_response_valuation(market, i, log_d, r_minus);
  return expect(q, log_d.map([](double t) { return std::exp(t); }));
}

inline BestResponse solve_best_response(const Market& market, std::size_t i,
                                        std::span<const Measure> others) {
  const RandomVariable r_minus = counterparty_log_density(market, i, others);
  auto g = [&](double z) { return best_response_f(market, i, z, r_minus) - 1.0; };
  const Bracket bracket = expand_bracket(g, 0.0, 1e6);
  const double zeta = toms748_root(g, bracket);

  BestResponse br;
  br.zeta = zeta;
  const RandomVariable log_d = solve_inner_log_D(market, i, zeta, r_minus);
  const double dm = market.delta_minus(i);
  br.security = log_d.map([dm](double t) { return dm * std::expm1(t); });
  br.log_d = log_d;
  br.valuation = best_response_valuation(market, i, log_d, r_minus);
  br.reported = normalize_log_density(market.agent(i).beliefs, -log_d);
  br.root_residual = expect(br.valuation, log_d.map([](double t) { return std::exp(t); })) - 1.0;
  br.response_value = response_value(market, i, br.reported, others);
  return br;
}

/// The explicit expression for zeta in terms of the optimal security,
/// independent of the root search.
inline double best_response_zeta_formula(const Market& market, std::size_t i,
                                         const RandomVariable& security,
                                         std::span<const Measure> others) {
  const RandomVariable r_minus = counterparty_log_density(market, i, others);
  const Measure& p = market.agent(i).beliefs;
  const double di = market.delta_i(i);
  const double dm = market.delta_minus(i);
  const double first = cara_utility(Agent{1.0, p}, security / di);
  const RandomVariable second_exp = security / dm + r_minus;
  const double second = -cara_utility(Agent{1.0, p}, -second_exp);
  return first + second;
}

/// The report that makes agent i's sharing-rule security vanish:
/// log dR ~ (1/lambda_{-i}) sum_{j != i} lambda_j log dR_j.
inline Measure zero_trade_report(const Market& market, std::size_t i,
                                 std::span<const Measure> others) {
  const RandomVariable r_minus = counterparty_log_density(market, i, others);
  return normalize_log_density(market.agent(i).beliefs, r_minus);
}

}  // namespace risksharing
