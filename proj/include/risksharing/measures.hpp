#pragma once

// Finite state spaces, probability measures and random variables.
//
// Every measure is stored through its normalized log-weights, so densities
// that differ by many orders of magnitude (tilted Gaussians on a quadrature
// grid, log-densities of several hundred nats) never overflow. The plain
// weights are kept alongside for expectations; a weight may underflow to
// zero there while its log-weight stays finite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "risksharing/error.hpp"

namespace risksharing {

/// Smallest admissible weight for measures given by explicit weights.
inline constexpr double kMinWeight = 1e-300;
/// Tolerance on the total mass of explicit weights.
inline constexpr double kMassTolerance = 1e-12;

namespace detail {

/// Neumaier compensated sum, fixed left-to-right order.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  CompensatedSum s;
  for (double x : xs) s.add(std::exp(x - m));
  return m + std::log(s.value());
}

}  // namespace detail

/// Real value per state: payoffs, endowments, log-densities.
class RandomVariable {
 public:
  RandomVariable() = default;
  explicit RandomVariable(std::vector<double> values) : values_(std::move(values)) {
    for (std::size_t s = 0; s < values_.size(); ++s) {
      if (!std::isfinite(values_[s])) {
        throw ContractError("RandomVariable: non-finite value at state " + std::to_string(s));
      }
    }
  }
  RandomVariable(std::initializer_list<double> values)
      : RandomVariable(std::vector<double>(values)) {}

  static RandomVariable constant(std::size_t n, double c) {
    return RandomVariable(std::vector<double>(n, c));
  }
  static RandomVariable zeros(std::size_t n) { return constant(n, 0.0); }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t s) const { return values_[s]; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vector() const { return values_; }

  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double sup_norm() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  friend RandomVariable operator+(const RandomVariable& a, const RandomVariable& b) {
    return zip(a, b, [](double x, double y) { return x + y; });
  }
  friend RandomVariable operator-(const RandomVariable& a, const RandomVariable& b) {
    return zip(a, b, [](double x, double y) { return x - y; });
  }
  friend RandomVariable operator-(const RandomVariable& a) { return a * -1.0; }
  friend RandomVariable operator*(const RandomVariable& a, double c) {
    return a.map([c](double x) { return x * c; });
  }
  friend RandomVariable operator*(double c, const RandomVariable& a) { return a * c; }
  friend RandomVariable operator/(const RandomVariable& a, double c) {
    return a.map([c](double x) { return x / c; });
  }
  friend RandomVariable operator+(const RandomVariable& a, double c) {
    return a.map([c](double x) { return x + c; });
  }
  friend RandomVariable operator-(const RandomVariable& a, double c) { return a + (-c); }

  template <class F>
  RandomVariable map(F f) const {
    std::vector<double> out(values_.size());
    std::transform(values_.begin(), values_.end(), out.begin(), f);
    return RandomVariable(std::move(out));
  }

  friend bool operator==(const RandomVariable&, const RandomVariable&) = default;

 private:
  template <class F>
  static RandomVariable zip(const RandomVariable& a, const RandomVariable& b, F f) {
    detail::require_same_size(a.size(), b.size(), "RandomVariable arithmetic");
    std::vector<double> out(a.size());
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = f(a.values_[s], b.values_[s]);
    return RandomVariable(std::move(out));
  }

  std::vector<double> values_;
};

inline double sup_distance(const RandomVariable& a, const RandomVariable& b) {
  return (a - b).sup_norm();
}

/// Probability vector over a finite state space, strictly positive in log form.
class Measure {
 public:
  Measure() = default;

  /// Explicit weights; each must be >= kMinWeight and the total within
  /// kMassTolerance of one. Weights are renormalized exactly afterwards.
  static Measure from_weights(std::span<const double> weights) {
    if (weights.empty()) throw ContractError("Measure: empty weight vector");
    detail::CompensatedSum total;
    for (std::size_t s = 0; s < weights.size(); ++s) {
      const double w = weights[s];
      if (!std::isfinite(w) || w < kMinWeight) {
        throw ContractError("Measure: weight at state " + std::to_string(s) +
                            " is not a positive number >= 1e-300");
      }
      total.add(w);
    }
    if (std::abs(total.value() - 1.0) > kMassTolerance) {
      throw ContractError("Measure: weights sum to " + std::to_string(total.value()) +
                          ", expected 1");
    }
    std::vector<double> logs(weights.size());
    std::transform(weights.begin(), weights.end(), logs.begin(),
                   [](double w) { return std::log(w); });
    return from_log_weights(logs);
  }
  static Measure from_weights(std::initializer_list<double> weights) {
    return from_weights(std::span<const double>(weights.begin(), weights.size()));
  }

  /// Any finite log-weights; normalized with a max shift.
  static Measure from_log_weights(std::span<const double> log_weights) {
    if (log_weights.empty()) throw ContractError("Measure: empty log-weight vector");
    for (std::size_t s = 0; s < log_weights.size(); ++s) {
      if (!std::isfinite(log_weights[s])) {
        throw ContractError("Measure: non-finite log-weight at state " + std::to_string(s));
      }
    }
    const double lse = detail::log_sum_exp(log_weights);
    Measure m;
    m.log_weights_.resize(log_weights.size());
    m.weights_.resize(log_weights.size());
    for (std::size_t s = 0; s < log_weights.size(); ++s) {
      m.log_weights_[s] = log_weights[s] - lse;
      m.weights_[s] = std::exp(m.log_weights_[s]);
    }
    return m;
  }

  /// Log-weights that are already normalized, kept bit for bit. Used when
  /// reading stored results back.
  static Measure from_normalized_log_weights(std::span<const double> log_weights) {
    if (log_weights.empty()) throw ContractError("Measure: empty log-weight vector");
    Measure m;
    m.log_weights_.assign(log_weights.begin(), log_weights.end());
    m.weights_.resize(log_weights.size());
    detail::CompensatedSum total;
    for (std::size_t s = 0; s < log_weights.size(); ++s) {
      if (!std::isfinite(log_weights[s])) {
        throw ContractError("Measure: non-finite log-weight at state " + std::to_string(s));
      }
      m.weights_[s] = std::exp(log_weights[s]);
      total.add(m.weights_[s]);
    }
    if (std::abs(total.value() - 1.0) > 1e-9) {
      throw ContractError("Measure: stored log-weights are not normalized (mass " +
                          std::to_string(total.value()) + ")");
    }
    return m;
  }

  static Measure uniform(std::size_t n) {
    return from_log_weights(std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> log_weights() const { return log_weights_; }
  double weight(std::size_t s) const { return weights_[s]; }
  double log_weight(std::size_t s) const { return log_weights_[s]; }

  /// log(dThis/dOther) per state.
  RandomVariable log_density_wrt(const Measure& other) const {
    detail::require_same_size(size(), other.size(), "log_density_wrt");
    std::vector<double> out(size());
    for (std::size_t s = 0; s < size(); ++s) out[s] = log_weights_[s] - other.log_weights_[s];
    return RandomVariable(std::move(out));
  }

  friend bool operator==(const Measure& a, const Measure& b) {
    return a.log_weights_ == b.log_weights_;
  }

 private:
  std::vector<double> log_weights_;
  std::vector<double> weights_;
};

/// Ordered state labels plus the baseline probability.
class StateSpace {
 public:
  StateSpace() = default;
  StateSpace(std::vector<std::string> labels, Measure baseline)
      : labels_(std::move(labels)), baseline_(std::move(baseline)) {
    detail::require_same_size(labels_.size(), baseline_.size(), "StateSpace");
  }
  StateSpace(std::vector<std::string> labels, std::span<const double> weights)
      : StateSpace(std::move(labels), Measure::from_weights(weights)) {}

  /// Labels s0, s1, ... over the given baseline.
  static StateSpace unlabeled(Measure baseline) {
    std::vector<std::string> labels(baseline.size());
    for (std::size_t s = 0; s < labels.size(); ++s) labels[s] = "s" + std::to_string(s);
    return StateSpace(std::move(labels), std::move(baseline));
  }

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const Measure& baseline() const { return baseline_; }

 private:
  std::vector<std::string> labels_;
  Measure baseline_;
};

/// dQ/dBase proportional to exp(log_density).
inline Measure normalize_log_density(const Measure& base, const RandomVariable& log_density) {
  detail::require_same_size(base.size(), log_density.size(), "normalize_log_density");
  std::vector<double> logs(base.size());
  for (std::size_t s = 0; s < logs.size(); ++s) logs[s] = base.log_weight(s) + log_density[s];
  return Measure::from_log_weights(logs);
}

/// log dQ ~ sum_i w_i log dR_i.
inline Measure geometric_mean_measure(std::span<const Measure> measures,
                                      std::span<const double> weights) {
  if (measures.empty()) throw ContractError("geometric_mean_measure: no measures");
  detail::require_same_size(measures.size(), weights.size(), "geometric_mean_measure");
  detail::CompensatedSum total;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("geometric_mean_measure: negative weight");
    total.add(w);
  }
  if (std::abs(total.value() - 1.0) > 1e-10) {
    throw ContractError("geometric_mean_measure: weights must sum to 1");
  }
  const std::size_t n = measures.front().size();
  std::vector<double> logs(n, 0.0);
  for (std::size_t k = 0; k < measures.size(); ++k) {
    detail::require_same_size(n, measures[k].size(), "geometric_mean_measure");
    if (weights[k] == 0.0) continue;
    for (std::size_t s = 0; s < n; ++s) logs[s] += weights[k] * measures[k].log_weight(s);
  }
  return Measure::from_log_weights(logs);
}

/// H(q2 | q1) in nats.
inline double relative_entropy(const Measure& q2, const Measure& q1) {
  detail::require_same_size(q2.size(), q1.size(), "relative_entropy");
  detail::CompensatedSum h;
  for (std::size_t s = 0; s < q2.size(); ++s) {
    const double w = q2.weight(s);
    if (w == 0.0) continue;
    h.add(w * (q2.log_weight(s) - q1.log_weight(s)));
  }
  return std::max(0.0, h.value());
}

inline double expect(const Measure& q, const RandomVariable& x) {
  detail::require_same_size(q.size(), x.size(), "expect");
  detail::CompensatedSum sum;
  for (std::size_t s = 0; s < q.size(); ++s) sum.add(q.weight(s) * x[s]);
  return sum.value();
}

inline double variance(const Measure& q, const RandomVariable& x) {
  const double mean = expect(q, x);
  detail::CompensatedSum sum;
  for (std::size_t s = 0; s < q.size(); ++s) {
    const double d = x[s] - mean;
    sum.add(q.weight(s) * d * d);
  }
  return std::max(0.0, sum.value());
}

/// Largest per-state absolute difference between weight vectors.
inline double weight_distance(const Measure& a, const Measure& b) {
  detail::require_same_size(a.size(), b.size(), "weight_distance");
  double d = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) d = std::max(d, std::abs(a.weight(s) - b.weight(s)));
  return d;
}

}  // namespace risksharing
