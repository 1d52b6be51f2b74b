#pragma once

// Seeded generators for property tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "risksharing/agents.hpp"
#include "risksharing/measures.hpp"

namespace testing_support {

using risksharing::Agent;
using risksharing::Market;
using risksharing::Measure;
using risksharing::RandomVariable;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  /// Log-weights drawn N(0, spread^2), normalized.
  Measure measure(std::size_t states, double spread = 1.0) {
    std::vector<double> logs(states);
    for (double& l : logs) l = spread * normal();
    return Measure::from_log_weights(logs);
  }

  RandomVariable variable(std::size_t states, double scale = 1.0) {
    std::vector<double> v(states);
    for (double& x : v) x = scale * normal();
    return RandomVariable(std::move(v));
  }

  double delta() { return std::exp(uniform(std::log(0.2), std::log(5.0))); }

  Market market(std::size_t agents, std::size_t states, double spread = 1.0) {
    std::vector<Agent> roster;
    for (std::size_t i = 0; i < agents; ++i) roster.push_back(Agent{delta(), measure(states, spread)});
    return Market(std::move(roster));
  }

  Market common_beliefs_market(std::size_t agents, std::size_t states) {
    const Measure p = measure(states);
    std::vector<Agent> roster;
    for (std::size_t i = 0; i < agents; ++i) roster.push_back(Agent{delta(), p});
    return Market(std::move(roster));
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) d = std::max(d, std::abs(a[s] - b[s]));
  return d;
}

}  // namespace testing_support
