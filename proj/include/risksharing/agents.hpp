#pragma once

// CARA agents in reduced form (risk tolerance, endowment-adjusted beliefs)
// and the market aggregates derived from a roster of them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"

namespace risksharing {

inline constexpr double kMinDelta = 1e-9;
inline constexpr double kMaxDelta = 1e12;

struct Agent {
  double delta;
  Measure beliefs;
};

inline void validate_delta(double delta) {
  if (!(delta >= kMinDelta && delta <= kMaxDelta)) {
    throw ContractError("risk tolerance " + std::to_string(delta) + " outside [1e-9, 1e12]");
  }
}

/// -delta * log E_beliefs[exp(-x/delta)], with the exponent max-shifted.
inline double cara_utility(const Agent& agent, const RandomVariable& x) {
  const Measure& p = agent.beliefs;
  detail::require_same_size(p.size(), x.size(), "cara_utility");
  const double inv = 1.0 / agent.delta;
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < x.size(); ++s) m = std::max(m, p.log_weight(s) - x[s] * inv);
  detail::CompensatedSum sum;
  for (std::size_t s = 0; s < x.size(); ++s) sum.add(std::exp(p.log_weight(s) - x[s] * inv - m));
  return -agent.delta * (m + std::log(sum.value()));
}

/// Folds a random endowment into the beliefs: log(dP/dP_actual) ~ -E/delta.
inline Agent endowment_to_beliefs(const Measure& actual_beliefs, const RandomVariable& endowment,
                                  double delta) {
  if (!(delta > 0.0)) throw ContractError("endowment_to_beliefs: delta must be positive");
  validate_delta(delta);
  return Agent{delta, normalize_log_density(actual_beliefs, endowment * (-1.0 / delta))};
}

class Market {
 public:
  explicit Market(std::vector<Agent> agents) : agents_(std::move(agents)) {
    if (agents_.size() < 2) throw ContractError("Market: at least two agents are required");
    const std::size_t states = agents_.front().beliefs.size();
    detail::CompensatedSum total;
    for (const Agent& a : agents_) {
      validate_delta(a.delta);
      detail::require_same_size(states, a.beliefs.size(), "Market beliefs");
      total.add(a.delta);
    }
    delta_ = total.value();
    lambda_.reserve(agents_.size());
    for (const Agent& a : agents_) lambda_.push_back(a.delta / delta_);
  }

  std::size_t size() const { return agents_.size(); }
  /// Number of counterparties seen by any one agent.
  std::size_t n() const { return agents_.size() - 1; }
  std::size_t states() const { return agents_.front().beliefs.size(); }

  const Agent& agent(std::size_t i) const { return agents_.at(i); }
  const std::vector<Agent>& agents() const { return agents_; }

  double delta() const { return delta_; }
  double delta_i(std::size_t i) const { return agents_.at(i).delta; }
  double delta_minus(std::size_t i) const { return delta_ - agents_.at(i).delta; }
  double lambda(std::size_t i) const { return lambda_.at(i); }
  double lambda_minus(std::size_t i) const { return delta_minus(i) / delta_; }
  std::span<const double> lambdas() const { return lambda_; }

  std::vector<Measure> beliefs() const {
    std::vector<Measure> out;
    out.reserve(agents_.size());
    for (const Agent& a : agents_) out.push_back(a.beliefs);
    return out;
  }

 private:
  std::vector<Agent> agents_;
  double delta_ = 0.0;
  std::vector<double> lambda_;
};

}  // namespace risksharing
