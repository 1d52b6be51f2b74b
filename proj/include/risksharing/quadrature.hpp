#pragma once

// Finite state spaces for Gaussian models: tensorized Gauss-Hermite grids
// and seeded Monte Carlo samples.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"

namespace risksharing {

inline constexpr std::size_t kDefaultStateCap = 1'000'000;

/// Nodes and log-weights for E[f(Z)], Z standard normal.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> log_weights;
};

namespace detail {

/// Orthonormal probabilists' Hermite values psi_0..psi_{n} at x.
inline void hermite_orthonormal(double x, int n, std::vector<double>& psi) {
  psi.assign(static_cast<std::size_t>(n) + 1, 0.0);
  psi[0] = 1.0;
  if (n >= 1) psi[1] = x;
  for (int k = 1; k < n; ++k) {
    psi[k + 1] = (x * psi[k] - std::sqrt(static_cast<double>(k)) * psi[k - 1]) /
                 std::sqrt(static_cast<double>(k + 1));
  }
}

}  // namespace detail

/// Golub-Welsch on the Jacobi matrix, then one Newton polish per node and
/// weights from the Christoffel function. Nodes come out exactly symmetric.
inline GaussHermiteRule gauss_hermite(int order) {
  if (order < 1 || order > 400) throw ContractError("gauss_hermite: order must be in [1, 400]");
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  std::vector<double> x(static_cast<std::size_t>(order));
  for (Eigen::Index k = 0; k < n; ++k) x[static_cast<std::size_t>(k)] = eig.eigenvalues()(k);

  std::vector<double> psi;
  for (double& node : x) {
    for (int it = 0; it < 3; ++it) {
      detail::hermite_orthonormal(node, order, psi);
      const double derivative = std::sqrt(static_cast<double>(order)) * psi[order - 1];
      if (derivative == 0.0) break;
      node -= psi[order] / derivative;
    }
  }

  GaussHermiteRule rule;
  rule.nodes.resize(x.size());
  rule.log_weights.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t mirror = x.size() - 1 - k;
    const double node = k == mirror ? 0.0 : 0.5 * (x[k] - x[mirror]);
    rule.nodes[k] = node;
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double node = rule.nodes[k];
    detail::hermite_orthonormal(std::abs(node), order, psi);
    double christoffel = 0.0;
    for (int j = 0; j < order; ++j) christoffel += psi[j] * psi[j];
    rule.log_weights[k] = -std::log(christoffel);
  }
  return rule;
}

/// A state space together with named random variables on it.
struct ModelStates {
  StateSpace space;
  std::vector<std::string> names;
  std::vector<RandomVariable> variables;
};

namespace detail {

/// Symmetric square root of a covariance matrix. Tiny negative eigenvalues
/// from rounding are clipped; anything else is a validation error.
inline Eigen::MatrixXd covariance_root(const std::vector<std::vector<double>>& cov) {
  const auto d = static_cast<Eigen::Index>(cov.size());
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (static_cast<Eigen::Index>(cov[static_cast<std::size_t>(i)].size()) != d) {
      throw ValidationError("covariance must be a square matrix");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (!std::isfinite(v)) throw ValidationError("covariance has a non-finite entry");
      m(i, j) = v;
    }
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ValidationError("covariance is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  Eigen::VectorXd ev = eig.eigenvalues();
  for (Eigen::Index k = 0; k < d; ++k) {
    if (ev(k) < -1e-10 * scale) {
      throw ValidationError("covariance is not positive semi-definite (eigenvalue " +
                            std::to_string(ev(k)) + ")");
    }
    ev(k) = std::sqrt(std::max(ev(k), 0.0));
  }
  Eigen::MatrixXd root = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (root + root.transpose());
}

inline void check_gaussian_inputs(const std::vector<std::string>& names,
                                  const std::vector<double>& mean,
                                  const std::vector<std::vector<double>>& cov) {
  if (names.empty()) throw ValidationError("gaussian model needs at least one variable");
  if (mean.size() != names.size() || cov.size() != names.size()) {
    throw ValidationError("gaussian model: mean/covariance size does not match variable count");
  }
}

inline ModelStates realize(std::vector<std::string> names, const std::vector<double>& mean,
                           const Eigen::MatrixXd& root, const std::vector<std::vector<double>>& z,
                           Measure baseline, std::vector<std::string> labels) {
  const std::size_t d = names.size();
  const std::size_t states = z.size();
  std::vector<std::vector<double>> values(d, std::vector<double>(states));
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      double v = mean[i];
      for (std::size_t j = 0; j < d; ++j) {
        v += root(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * z[s][j];
      }
      values[i][s] = v;
    }
  }
  ModelStates out{StateSpace(std::move(labels), std::move(baseline)), std::move(names), {}};
  for (auto& v : values) out.variables.emplace_back(std::move(v));
  return out;
}

}  // namespace detail

/// Tensor Gauss-Hermite grid with order^d states, variables mean + S Z with
/// S the symmetric square root of the covariance.
inline ModelStates gaussian_quadrature_states(std::vector<std::string> names,
                                              const std::vector<double>& mean,
                                              const std::vector<std::vector<double>>& cov,
                                              int order, std::size_t cap = kDefaultStateCap) {
  detail::check_gaussian_inputs(names, mean, cov);
  const Eigen::MatrixXd root = detail::covariance_root(cov);
  const std::size_t d = names.size();
  double count = std::pow(static_cast<double>(order), static_cast<double>(d));
  if (order < 1 || count > static_cast<double>(cap)) {
    throw ValidationError("quadrature grid of order " + std::to_string(order) + " in " +
                          std::to_string(d) + " dimensions exceeds the state cap of " +
                          std::to_string(cap));
  }
  const GaussHermiteRule rule = gauss_hermite(order);
  const auto states = static_cast<std::size_t>(count);
  std::vector<std::vector<double>> z(states, std::vector<double>(d));
  std::vector<double> logw(states, 0.0);
  std::vector<std::string> labels(states);
  const auto q = static_cast<std::size_t>(order);
  for (std::size_t s = 0; s < states; ++s) {
    // Mixed-radix digits, last variable fastest.
    std::vector<std::size_t> digits(d);
    std::size_t rest = s;
    for (std::size_t k = d; k-- > 0;) {
      digits[k] = rest % q;
      rest /= q;
    }
    std::string label = "g";
    for (std::size_t k = 0; k < d; ++k) {
      z[s][k] = rule.nodes[digits[k]];
      logw[s] += rule.log_weights[digits[k]];
      label += (k == 0 ? "" : ".") + std::to_string(digits[k]);
    }
    labels[s] = std::move(label);
  }
  return detail::realize(std::move(names), mean, root, z, Measure::from_log_weights(logw),
                         std::move(labels));
}

namespace detail {

/// Box-Muller on raw 64-bit draws so the stream is identical on every platform.
class PortableNormal {
 public:
  explicit PortableNormal(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

/// Equal-weight states drawn from the seeded generator.
inline ModelStates gaussian_sample_states(std::vector<std::string> names,
                                          const std::vector<double>& mean,
                                          const std::vector<std::vector<double>>& cov,
                                          std::size_t samples, std::uint64_t seed,
                                          std::size_t cap = kDefaultStateCap) {
  detail::check_gaussian_inputs(names, mean, cov);
  if (samples < 1 || samples > cap) {
    throw ValidationError("sample count " + std::to_string(samples) + " outside [1, " +
                          std::to_string(cap) + "]");
  }
  const Eigen::MatrixXd root = detail::covariance_root(cov);
  const std::size_t d = names.size();
  detail::PortableNormal normal(seed);
  std::vector<std::vector<double>> z(samples, std::vector<double>(d));
  std::vector<std::string> labels(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t k = 0; k < d; ++k) z[s][k] = normal();
    labels[s] = "m" + std::to_string(s);
  }
  return detail::realize(std::move(names), mean, root, z, Measure::uniform(samples),
                         std::move(labels));
}

}  // namespace risksharing
