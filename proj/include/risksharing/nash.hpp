#pragma once

// Nash risk-sharing equilibrium.
//
// A candidate equilibrium is parametrized by a point z of the zero-sum
// simplex. For fixed z the securities solve a per-state implicit system
// (three nested monotone solves: theta_i inside w(y) inside the state loop),
// and z is an equilibrium exactly when every security has zero price under
// the induced valuation measure Q(z). The outer layer searches for such z.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "risksharing/agents.hpp"
#include "risksharing/arrow_debreu.hpp"
#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"
#include "risksharing/roots.hpp"

namespace risksharing {

struct InnerSolution {
  std::vector<RandomVariable> securities;
  /// L(z) = sum_i lambda_i log(1 + C_i/delta_{-i}) per state.
  RandomVariable L;
  Measure valuation;
  /// log(1 + C_i/delta_{-i}) per agent, kept for derivatives.
  std::vector<RandomVariable> log_theta;
};

struct NashConfig {
  /// Acceptance threshold on ell, relative to the aggregate risk tolerance.
  double tol = 1e-10;
  /// Acceptance threshold on max_i |E_Q[C_i]|, relative to the aggregate risk tolerance.
  double pricing_tol = 1e-11;
  /// Damped fixed-point iterations per start.
  int max_iter = 400;
  /// Initial damping factor of the fixed-point stage.
  double damping = 0.5;
  /// Run every start and collect all distinct roots; otherwise stop at the first root.
  bool multistart = true;
  int newton_iter = 60;
  int simplex_iter = 4000;
  /// Roots closer than this (sup-norm, relative to delta) are identified.
  double root_separation = 1e-6;
};

struct NashEquilibrium {
  std::vector<double> z;
  std::vector<RandomVariable> securities;
  Measure pricing;
  RandomVariable L;
  /// log(1 + C_i/delta_{-i}); exact where C_i crowds its lower bound.
  std::vector<RandomVariable> log_theta;
  std::vector<Measure> revealed;
  std::vector<double> agent_values;
  double aggregate_value = 0.0;
  double distance = 0.0;
  /// E_{Q}[C_i] at the returned point.
  std::vector<double> prices;
  /// Further distinct roots met by the multistart search.
  std::vector<std::vector<double>> other_roots;
  std::string method;
  int evaluations = 0;
  /// ell after each accepted step of the search that produced z.
  std::vector<double> trace;
};

/// Raised when the search exhausts its budget; carries the best point seen.
class NashSolveError : public SolverError {
 public:
  NashSolveError(const std::string& what, std::vector<double> best_z, double best_distance,
                 std::vector<double> trace)
      : SolverError(what),
        best_z_(std::move(best_z)),
        best_distance_(best_distance),
        trace_(std::move(trace)) {}
  const std::vector<double>& best_z() const { return best_z_; }
  double best_distance() const { return best_distance_; }
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> best_z_;
  double best_distance_;
  std::vector<double> trace_;
};

namespace detail {

inline void check_simplex_point(const Market& market, std::span<const double> z) {
  require_same_size(market.size(), z.size(), "simplex point");
  double sum = 0.0;
  double scale = 1.0;
  for (double v : z) {
    if (!std::isfinite(v)) throw ContractError("simplex point has a non-finite coordinate");
    sum += v;
    scale = std::max(scale, std::abs(v));
  }
  if (std::abs(sum) > 1e-9 * scale * static_cast<double>(z.size())) {
    throw ContractError("simplex point does not sum to zero (sum = " + std::to_string(sum) + ")");
  }
}

/// x - log(1 + x), accurate near zero.
inline double x_minus_log1p(double x) {
  if (std::abs(x) < 1e-3) {
    return x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x * (0.2 - x / 6.0))));
  }
  return x - std::log1p(x);
}

}  // namespace detail

/// Solves the per-state system for C_i(z), L(z) and Q(z).
inline InnerSolution inner_solve(const Market& market, const ArrowDebreuEquilibrium& ad,
                                 std::span<const double> z) {
  detail::check_simplex_point(market, z);
  const std::size_t agents = market.size();
  const std::size_t states = market.states();

  std::vector<double> d(agents), dm(agents), lam(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    d[i] = market.delta_i(i);
    dm[i] = market.delta_minus(i);
    lam[i] = market.lambda(i);
  }

  std::vector<std::vector<double>> t(agents, std::vector<double>(states));
  std::vector<double> L(states);
  std::vector<double> a(agents), ti(agents);

  for (std::size_t s = 0; s < states; ++s) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < agents; ++i) {
      a[i] = z[i] + ad.securities[i][s];
      lo = std::min(lo, -a[i] / d[i]);
      hi = std::max(hi, -a[i] / d[i]);
    }
    const double pad = 1e-12 * (1.0 + std::max(std::abs(lo), std::abs(hi)));
    lo -= pad;
    hi += pad;

    auto fdf = [&](double y) {
      double w = y;
      double slope = 1.0;
      for (std::size_t i = 0; i < agents; ++i) {
        ti[i] = solve_exp_linear(dm[i], d[i], a[i] + d[i] * y);
        w -= lam[i] * ti[i];
        slope -= lam[i] * d[i] / (dm[i] * std::exp(ti[i]) + d[i]);
      }
      return std::pair<double, double>{w, slope};
    };
    const double ftol = 1e-15 * (1.0 + std::abs(lo) + std::abs(hi));
    NewtonResult res;
    try {
      res = safeguarded_newton(fdf, Bracket{lo, hi}, ftol, 300);
    } catch (const SolverError& e) {
      throw SolverError("inner_solve: state " + std::to_string(s) + ": " + e.what());
    }
    fdf(res.x);
    L[s] = res.x;
    for (std::size_t i = 0; i < agents; ++i) t[i][s] = ti[i];
  }

  InnerSolution out;
  out.L = RandomVariable(L);
  for (std::size_t i = 0; i < agents; ++i) {
    std::vector<double> c(states);
    for (std::size_t s = 0; s < states; ++s) c[s] = dm[i] * std::expm1(t[i][s]);
    out.securities.emplace_back(std::move(c));
    out.log_theta.emplace_back(std::move(t[i]));
  }
  out.valuation = normalize_log_density(ad.pricing, -out.L);
  return out;
}

/// E_{Q(z)}[C_i(z)] per agent.
inline std::vector<double> security_prices(const InnerSolution& inner) {
  std::vector<double> p;
  p.reserve(inner.securities.size());
  for (const RandomVariable& c : inner.securities) p.push_back(expect(inner.valuation, c));
  return p;
}

/// ell from the prices E_Q[C_i]. Evaluated as sum_i delta_{-i} (x_i - log(1 + x_i)),
/// x_i = E_Q[C_i]/delta_{-i}, which equals the defining sum because the
/// prices add up to zero, and stays non-negative in floating point.
inline double distance_from_prices(const Market& market, std::span<const double> prices) {
  detail::CompensatedSum ell;
  for (std::size_t i = 0; i < prices.size(); ++i) {
    const double x = prices[i] / market.delta_minus(i);
    if (!(x > -1.0)) return std::numeric_limits<double>::infinity();
    ell.add(market.delta_minus(i) * detail::x_minus_log1p(x));
  }
  return ell.value();
}

inline double nash_distance(const Market& market, const ArrowDebreuEquilibrium& ad,
                            std::span<const double> z) {
  const InnerSolution inner = inner_solve(market, ad, z);
  return distance_from_prices(market, security_prices(inner));
}

/// phi_i(z) = u_i(z) - u*_i + lambda_i (u* - u(z)), u_i(z) = U_i(C_i(z)).
inline std::vector<double> phi_from_inner(const Market& market, const ArrowDebreuEquilibrium& ad,
                                          const InnerSolution& inner) {
  const std::size_t agents = market.size();
  std::vector<double> u(agents);
  double total = 0.0;
  for (std::size_t i = 0; i < agents; ++i) {
    u[i] = cara_utility(market.agent(i), inner.securities[i]);
    total += u[i];
  }
  std::vector<double> phi(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    phi[i] = u[i] - ad.agent_gains[i] + market.lambda(i) * (ad.aggregate_gain - total);
  }
  return phi;
}

inline std::vector<double> phi_map(const Market& market, const ArrowDebreuEquilibrium& ad,
                                   std::span<const double> z) {
  return phi_from_inner(market, ad, inner_solve(market, ad, z));
}

/// J(i, k) = d E_{Q(z)}[C_i(z)] / d z_k, treating the z_k as free coordinates.
inline Eigen::MatrixXd pricing_jacobian(const Market& market, const InnerSolution& inner) {
  const std::size_t agents = market.size();
  const std::size_t states = inner.L.size();
  const Measure& q = inner.valuation;

  Eigen::MatrixXd e_dc = Eigen::MatrixXd::Zero(agents, agents);
  Eigen::MatrixXd e_c_dl = Eigen::MatrixXd::Zero(agents, agents);
  Eigen::VectorXd e_dl = Eigen::VectorXd::Zero(agents);
  Eigen::VectorXd e_c = Eigen::VectorXd::Zero(agents);

  std::vector<double> theta(agents), eta_prime(agents), g(agents), dl(agents);
  for (std::size_t s = 0; s < states; ++s) {
    const double w = q.weight(s);
    if (w == 0.0) continue;
    double denom = 1.0;
    for (std::size_t j = 0; j < agents; ++j) {
      theta[j] = std::exp(inner.log_theta[j][s]);
      eta_prime[j] = market.delta_minus(j) + market.delta_i(j) / theta[j];
      g[j] = market.lambda(j) / (theta[j] * eta_prime[j]);
      denom -= g[j] * market.delta_i(j);
    }
    for (std::size_t k = 0; k < agents; ++k) dl[k] = g[k] / denom;
    for (std::size_t i = 0; i < agents; ++i) {
      const double c = inner.securities[i][s];
      e_c(i) += w * c;
      for (std::size_t k = 0; k < agents; ++k) {
        const double dd = ((i == k ? 1.0 : 0.0) + market.delta_i(i) * dl[k]) / eta_prime[i];
        e_dc(i, k) += w * market.delta_minus(i) * dd;
        e_c_dl(i, k) += w * c * dl[k];
      }
    }
    for (std::size_t k = 0; k < agents; ++k) e_dl(k) += w * dl[k];
  }
  return e_dc - e_c_dl + e_c * e_dl.transpose();
}

/// Residual of the defining per-state system, max over states and agents.
inline double c_system_residual(const Market& market, const ArrowDebreuEquilibrium& ad,
                                std::span<const double> z,
                                std::span<const RandomVariable> securities) {
  double worst = 0.0;
  const std::size_t agents = market.size();
  for (std::size_t s = 0; s < market.states(); ++s) {
    double l = 0.0;
    for (std::size_t j = 0; j < agents; ++j) {
      l += market.lambda(j) * std::log1p(securities[j][s] / market.delta_minus(j));
    }
    for (std::size_t i = 0; i < agents; ++i) {
      const double c = securities[i][s];
      const double lhs = c + market.delta_i(i) * std::log1p(c / market.delta_minus(i));
      const double rhs = z[i] + ad.securities[i][s] + market.delta_i(i) * l;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

/// The same system written in t_i = log(1 + C_i/delta_{-i}), which stays
/// well conditioned when C_i approaches -delta_{-i}.
inline double c_system_residual_log(const Market& market, const ArrowDebreuEquilibrium& ad,
                                    std::span<const double> z,
                                    std::span<const RandomVariable> log_theta) {
  double worst = 0.0;
  const std::size_t agents = market.size();
  for (std::size_t s = 0; s < market.states(); ++s) {
    double l = 0.0;
    for (std::size_t j = 0; j < agents; ++j) l += market.lambda(j) * log_theta[j][s];
    for (std::size_t i = 0; i < agents; ++i) {
      const double t = log_theta[i][s];
      const double lhs = market.delta_minus(i) * std::expm1(t) + market.delta_i(i) * t;
      const double rhs = z[i] + ad.securities[i][s] + market.delta_i(i) * l;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

/// Revealed beliefs: log(dR_i/dP_i) ~ -log(1 + C_i/delta_{-i}).
inline Measure revealed_beliefs(const Market& market, std::size_t i, const RandomVariable& security) {
  const double dm = market.delta_minus(i);
  return normalize_log_density(market.agent(i).beliefs,
                               security.map([dm](double c) { return -std::log1p(c / dm); }));
}

/// The same beliefs read off the sharing rule instead: log(dR_i/dQ) ~ C_i/delta_i.
inline Measure revealed_beliefs_from_pricing(const Market& market, std::size_t i,
                                             const RandomVariable& security, const Measure& pricing) {
  return normalize_log_density(pricing, security / market.delta_i(i));
}

namespace detail {

struct Evaluation {
  std::vector<double> z;
  InnerSolution inner;
  std::vector<double> prices;
  double ell = 0.0;
};

class NashSearch {
 public:
  NashSearch(const Market& market, const ArrowDebreuEquilibrium& ad, const NashConfig& config)
      : market_(market), ad_(ad), config_(config), scale_(market.delta()) {}

  Evaluation evaluate(std::vector<double> z) {
    ++evaluations_;
    Evaluation e;
    e.inner = inner_solve(market_, ad_, z);
    e.prices = security_prices(e.inner);
    e.ell = distance_from_prices(market_, e.prices);
    e.z = std::move(z);
    if (!best_ || e.ell < *best_) {
      best_ = e.ell;
      best_z_ = e.z;
    }
    return e;
  }

  bool accepted(const Evaluation& e) const {
    double worst = 0.0;
    for (double p : e.prices) worst = std::max(worst, std::abs(p));
    return e.ell <= config_.tol * scale_ && worst <= config_.pricing_tol * scale_;
  }

  int evaluations() const { return evaluations_; }
  const std::vector<double>& best_z() const { return best_z_; }
  double best_ell() const { return best_ ? *best_ : std::numeric_limits<double>::infinity(); }

  /// Two agents: bisection on the increasing map z0 -> E_{Q(z)}[C_0(z)].
  Evaluation bisect_two_agents(std::vector<double>& trace) {
    auto f0 = [&](double z0) {
      const Evaluation e = evaluate({z0, -z0});
      trace.push_back(e.ell);
      return e.prices[0];
    };
    double lo = -ad_.agent_gains[0];
    double hi = ad_.agent_gains[1];
    double width = std::max(1.0, hi - lo);
    while (f0(lo) > 0.0) {
      lo -= width;
      width *= 2.0;
      if (width > 1e12 * scale_) throw SolverError("two-agent bracket expansion failed");
    }
    width = std::max(1.0, hi - lo);
    while (f0(hi) < 0.0) {
      hi += width;
      width *= 2.0;
      if (width > 1e12 * scale_) throw SolverError("two-agent bracket expansion failed");
    }
    const double xtol = 4 * std::numeric_limits<double>::epsilon() * scale_;
    const double z0 = bisect_increasing(f0, Bracket{lo, hi}, xtol);
    return evaluate({z0, -z0});
  }

  /// Euclidean projection onto K = {sum z = 0, z_i >= -delta_{-i} - u*_i}.
  std::vector<double> project(std::span<const double> z) const {
    const std::size_t n = z.size();
    std::vector<double> b(n), y(n);
    double target = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = -market_.delta_minus(i) - ad_.agent_gains[i];
      y[i] = z[i] - b[i];
      target -= b[i];
    }
    std::vector<double> sorted = y;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double tau = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      cumulative += sorted[k];
      const double candidate = (cumulative - target) / static_cast<double>(k + 1);
      if (sorted[k] - candidate > 0.0) tau = candidate;
    }
    std::vector<double> out(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::max(y[i] - tau, 0.0) + b[i];
      sum += out[i];
    }
    rebalance(out, sum);
    return out;
  }

  /// Damped iteration z <- (1 - g) z + g phi(z), projected onto K.
  Evaluation damped_phi(Evaluation current, std::vector<double>& trace) {
    double gamma = config_.damping;
    int streak = 0;
    const double switch_level = 1e-6 * scale_;
    for (int iter = 0; iter < config_.max_iter; ++iter) {
      if (current.ell <= switch_level) break;
      const std::vector<double> phi = phi_from_inner(market_, ad_, current.inner);
      std::vector<double> step(current.z.size());
      for (std::size_t i = 0; i < step.size(); ++i) {
        step[i] = (1.0 - gamma) * current.z[i] + gamma * phi[i];
      }
      Evaluation next = evaluate(project(step));
      if (next.ell < current.ell) {
        current = std::move(next);
        trace.push_back(current.ell);
        if (++streak >= 3) {
          gamma = std::min(1.0, 2.0 * gamma);
          streak = 0;
        }
      } else {
        gamma *= 0.5;
        streak = 0;
        if (gamma < 1e-8) break;
      }
    }
    return current;
  }

  /// Newton on z_1..z_n (z_0 = -sum) for E_Q[C_i] = 0, i = 1..n, with
  /// backtracking on sum_i E_Q[C_i]^2.
  Evaluation newton_polish(Evaluation current, std::vector<double>& trace) {
    const std::size_t n = current.z.size() - 1;
    auto merit = [](const Evaluation& e) {
      double m = 0.0;
      for (double p : e.prices) m += p * p;
      return m;
    };
    for (int iter = 0; iter < config_.newton_iter; ++iter) {
      if (accepted(current)) break;
      const Eigen::MatrixXd jac = pricing_jacobian(market_, current.inner);
      Eigen::MatrixXd reduced(n, n);
      Eigen::VectorXd rhs(n);
      for (std::size_t i = 0; i < n; ++i) {
        rhs(i) = -current.prices[i + 1];
        for (std::size_t k = 0; k < n; ++k) reduced(i, k) = jac(i + 1, k + 1) - jac(i + 1, 0);
      }
      const Eigen::VectorXd dir = reduced.colPivHouseholderQr().solve(rhs);
      if (!dir.allFinite()) break;
      const double m0 = merit(current);
      double step = 1.0;
      bool moved = false;
      for (int back = 0; back < 40; ++back) {
        std::vector<double> z(current.z.size());
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          z[k + 1] = current.z[k + 1] + step * dir(static_cast<Eigen::Index>(k));
          sum += z[k + 1];
        }
        z[0] = -sum;
        Evaluation next = [&]() -> Evaluation {
          try {
            return evaluate(std::move(z));
          } catch (const SolverError&) {
            Evaluation bad;
            bad.ell = std::numeric_limits<double>::infinity();
            return bad;
          }
        }();
        if (std::isfinite(next.ell) && merit(next) < m0) {
          current = std::move(next);
          trace.push_back(current.ell);
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    return current;
  }

  /// Nelder-Mead on ell over z_1..z_n.
  Evaluation simplex_fallback(Evaluation current, std::vector<double>& trace) {
    const std::size_t n = current.z.size() - 1;
    struct Context {
      NashSearch* self;
      std::size_t n;
      bool failed = false;
    } ctx{this, n};
    auto full = [](const gsl_vector* x, std::size_t n) {
      std::vector<double> z(n + 1);
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        z[k + 1] = gsl_vector_get(x, k);
        sum += z[k + 1];
      }
      z[0] = -sum;
      return z;
    };
    gsl_multimin_function fn;
    fn.n = n;
    fn.params = &ctx;
    fn.f = [](const gsl_vector* x, void* params) -> double {
      auto* c = static_cast<Context*>(params);
      std::vector<double> z(c->n + 1);
      double sum = 0.0;
      for (std::size_t k = 0; k < c->n; ++k) {
        z[k + 1] = gsl_vector_get(x, k);
        sum += z[k + 1];
      }
      z[0] = -sum;
      try {
        return c->self->evaluate(std::move(z)).ell;
      } catch (...) {
        c->failed = true;
        return GSL_POSINF;
      }
    };

    gsl_error_handler_t* old_handler = gsl_set_error_handler_off();
    gsl_vector* x = gsl_vector_alloc(n);
    gsl_vector* step = gsl_vector_alloc(n);
    const double size0 = std::max(1e-3 * scale_, 0.1 * ad_.aggregate_gain / static_cast<double>(n + 1));
    for (std::size_t k = 0; k < n; ++k) {
      gsl_vector_set(x, k, current.z[k + 1]);
      gsl_vector_set(step, k, size0);
    }
    gsl_multimin_fminimizer* solver =
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
    gsl_multimin_fminimizer_set(solver, &fn, x, step);
    for (int iter = 0; iter < config_.simplex_iter; ++iter) {
      if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
      trace.push_back(gsl_multimin_fminimizer_minimum(solver));
      if (gsl_multimin_fminimizer_minimum(solver) <= 1e-3 * config_.tol * scale_) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), 1e-13 * scale_) ==
          GSL_SUCCESS) {
        break;
      }
    }
    std::vector<double> z = full(gsl_multimin_fminimizer_x(solver), n);
    gsl_multimin_fminimizer_free(solver);
    gsl_vector_free(x);
    gsl_vector_free(step);
    gsl_set_error_handler(old_handler);

    Evaluation found = evaluate(std::move(z));
    return found.ell < current.ell ? found : current;
  }

  /// Starting points: the barycentre of {z_i >= -u*_i} and its corners pulled halfway in.
  std::vector<std::vector<double>> starts() const {
    const std::size_t agents = market_.size();
    const double share = ad_.aggregate_gain / static_cast<double>(agents);
    std::vector<double> centre(agents);
    for (std::size_t i = 0; i < agents; ++i) centre[i] = share - ad_.agent_gains[i];
    std::vector<std::vector<double>> out{centre};
    for (std::size_t k = 0; k < agents; ++k) {
      std::vector<double> corner(agents);
      double sum = 0.0;
      for (std::size_t i = 0; i < agents; ++i) {
        const double vertex = -ad_.agent_gains[i] + (i == k ? ad_.aggregate_gain : 0.0);
        corner[i] = 0.5 * (centre[i] + vertex);
        sum += corner[i];
      }
      rebalance(corner, sum);
      out.push_back(std::move(corner));
    }
    return out;
  }

 private:
  static void rebalance(std::vector<double>& z, double sum) {
    // Push the rounding residue of the zero-sum constraint onto the largest coordinate.
    const auto it = std::max_element(z.begin(), z.end(),
                                     [](double a, double b) { return std::abs(a) < std::abs(b); });
    *it -= sum;
  }

  const Market& market_;
  const ArrowDebreuEquilibrium& ad_;
  const NashConfig& config_;
  double scale_;
  int evaluations_ = 0;
  std::optional<double> best_;
  std::vector<double> best_z_;
};

}  // namespace detail

/// Builds the equilibrium report at a solved point z.
inline NashEquilibrium assemble_nash(const Market& market, std::vector<double> z,
                                     const InnerSolution& inner) {
  NashEquilibrium eq;
  eq.z = std::move(z);
  eq.securities = inner.securities;
  eq.pricing = inner.valuation;
  eq.L = inner.L;
  eq.log_theta = inner.log_theta;
  eq.prices = security_prices(inner);
  eq.distance = distance_from_prices(market, eq.prices);
  detail::CompensatedSum total;
  for (std::size_t i = 0; i < market.size(); ++i) {
    eq.revealed.push_back(normalize_log_density(market.agent(i).beliefs, -eq.log_theta[i]));
    eq.agent_values.push_back(cara_utility(market.agent(i), eq.securities[i]));
    total.add(eq.agent_values.back());
  }
  eq.aggregate_value = total.value();
  return eq;
}

inline NashEquilibrium solve_nash(const Market& market, const ArrowDebreuEquilibrium& ad,
                                  const NashConfig& config = {}) {
  detail::NashSearch search(market, ad, config);

  if (market.size() == 2) {
    std::vector<double> trace;
    detail::Evaluation e = search.bisect_two_agents(trace);
    NashEquilibrium eq = assemble_nash(market, e.z, e.inner);
    eq.method = "bisection";
    eq.evaluations = search.evaluations();
    eq.trace = std::move(trace);
    return eq;
  }

  std::vector<detail::Evaluation> roots;
  std::vector<std::vector<double>> traces;
  std::vector<std::string> methods;
  std::vector<double> last_trace;
  const double separation = config.root_separation * std::max(1.0, market.delta());

  for (const std::vector<double>& start : search.starts()) {
    std::vector<double> trace;
    std::string method = "fixed-point+newton";
    detail::Evaluation e = search.evaluate(search.project(start));
    trace.push_back(e.ell);
    e = search.damped_phi(std::move(e), trace);
    e = search.newton_polish(std::move(e), trace);
    if (!search.accepted(e)) {
      method = "fixed-point+simplex+newton";
      e = search.simplex_fallback(std::move(e), trace);
      e = search.newton_polish(std::move(e), trace);
    }
    last_trace = trace;
    if (!search.accepted(e)) continue;
    const bool seen = std::any_of(roots.begin(), roots.end(), [&](const detail::Evaluation& r) {
      double d = 0.0;
      for (std::size_t i = 0; i < r.z.size(); ++i) d = std::max(d, std::abs(r.z[i] - e.z[i]));
      return d <= separation;
    });
    if (!seen) {
      roots.push_back(std::move(e));
      traces.push_back(std::move(trace));
      methods.push_back(std::move(method));
    }
    if (!config.multistart) break;
  }

  if (roots.empty()) {
    throw NashSolveError("solve_nash: no start reached the acceptance tolerance (best ell = " +
                             std::to_string(search.best_ell()) + ")",
                         search.best_z(), search.best_ell(), last_trace);
  }
  NashEquilibrium eq = assemble_nash(market, roots.front().z, roots.front().inner);
  eq.method = methods.front();
  eq.trace = traces.front();
  eq.evaluations = search.evaluations();
  for (std::size_t k = 1; k < roots.size(); ++k) eq.other_roots.push_back(roots[k].z);
  return eq;
}

inline NashEquilibrium solve_nash(const Market& market, const NashConfig& config = {}) {
  return solve_nash(market, solve_arrow_debreu(market), config);
}

}  // namespace risksharing
