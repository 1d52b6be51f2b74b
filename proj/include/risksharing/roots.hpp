#pragma once

// Scalar root finders shared by the solvers. Every function handled here is
// strictly increasing (or made so by the caller), which is what makes the
// bracketing logic below sufficient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "risksharing/error.hpp"

namespace risksharing {

struct Bracket {
  double lo;
  double hi;
};

/// Solves alpha*(e^t - 1) + beta*t = a for t, with alpha, beta > 0.
///
/// The left side is increasing and convex in t, so Newton started to the
/// right of the root decreases monotonically onto it. A bisection step is
/// taken whenever rounding pushes an iterate out of the bracket.
inline double solve_exp_linear(double alpha, double beta, double a) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw ContractError("solve_exp_linear: coefficients must be positive");
  }
  if (!std::isfinite(a)) throw ContractError("solve_exp_linear: non-finite right-hand side");
  if (a == 0.0) return 0.0;

  auto g = [&](double t) { return alpha * std::expm1(t) + beta * t - a; };
  double lo = std::min(a / beta, 0.0) - 1.0;
  double hi = std::log(2.0 + std::max(a, 0.0) / alpha);
  const double scale = 1.0 + std::abs(a);

  double t = hi;
  for (int iter = 0; iter < 200; ++iter) {
    const double gt = g(t);
    if (std::abs(gt) <= 4 * std::numeric_limits<double>::epsilon() * scale) return t;
    if (gt > 0.0) {
      hi = t;
    } else {
      lo = t;
    }
    const double slope = alpha * std::exp(t) + beta;
    double next = t - gt / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t || hi - lo <= 2 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(t))) {
      return next;
    }
    t = next;
  }
  throw SolverError("solve_exp_linear: no convergence for a = " + std::to_string(a));
}

/// Result of a one-dimensional safeguarded Newton solve.
struct NewtonResult {
  double x;
  double residual;
  int iterations;
};

/// Safeguarded Newton for an increasing function on a sign-changing bracket.
/// `fdf(x)` returns {f(x), f'(x)}. Falls back to bisection when a Newton step
/// leaves the current bracket or fails to halve the residual.
template <class FDF>
NewtonResult safeguarded_newton(FDF fdf, Bracket bracket, double ftol, int max_iter) {
  double lo = bracket.lo;
  double hi = bracket.hi;
  if (!(lo <= hi)) throw ContractError("safeguarded_newton: inverted bracket");
  double x = 0.5 * (lo + hi);
  double prev_abs = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iter; ++iter) {
    const auto [f, df] = fdf(x);
    if (std::abs(f) <= ftol) return {x, f, iter};
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    double next = (df > 0.0) ? x - f / df : 0.5 * (lo + hi);
    if (!(next > lo && next < hi) || std::abs(f) > 0.5 * prev_abs) next = 0.5 * (lo + hi);
    prev_abs = std::abs(f);
    if (hi - lo <= 2 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(x)) || next == x) {
      const auto [fn, dfn] = fdf(next);
      (void)dfn;
      return {next, fn, iter + 1};
    }
    x = next;
  }
  const auto [f, df] = fdf(x);
  (void)df;
  throw SolverError("safeguarded_newton: no convergence after " + std::to_string(max_iter) +
                    " iterations, residual " + std::to_string(f));
}

/// Grows [start - w, start + w] with w = 1, 2, 4, ... until an increasing
/// function `f` changes sign. Throws once |x| exceeds `limit`.
template <class F>
Bracket expand_bracket(F f, double start, double limit) {
  double width = 1.0;
  double lo = start;
  double hi = start;
  double flo = f(lo);
  double fhi = flo;
  if (flo == 0.0) return {lo, hi};
  while (true) {
    if (flo < 0.0 && fhi > 0.0) return {lo, hi};
    if (std::abs(start) + width > limit) {
      throw SolverError("expand_bracket: no sign change within |x| <= " + std::to_string(limit) +
                        " (f(lo) = " + std::to_string(flo) + ", f(hi) = " + std::to_string(fhi) +
                        ")");
    }
    if (fhi <= 0.0) {
      lo = hi;
      flo = fhi;
      hi = start + width;
      fhi = f(hi);
      if (fhi == 0.0) return {hi, hi};
    } else {
      hi = lo;
      fhi = flo;
      lo = start - width;
      flo = f(lo);
      if (flo == 0.0) return {lo, lo};
    }
    width *= 2.0;
  }
}

/// Root of an increasing function inside a sign-changing bracket, by TOMS 748
/// iterated to full double precision. Returns the endpoint with the smaller
/// residual.
template <class F>
double toms748_root(F f, Bracket bracket, int max_iter = 300) {
  if (bracket.lo == bracket.hi) return bracket.lo;
  const double flo = f(bracket.lo);
  const double fhi = f(bracket.hi);
  if (flo == 0.0) return bracket.lo;
  if (fhi == 0.0) return bracket.hi;
  if (!(flo < 0.0 && fhi > 0.0)) {
    throw SolverError("toms748_root: bracket does not change sign");
  }
  std::uintmax_t iters = static_cast<std::uintmax_t>(max_iter);
  boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 2);
  const auto [a, b] =
      boost::math::tools::toms748_solve(f, bracket.lo, bracket.hi, flo, fhi, tol, iters);
  if (iters >= static_cast<std::uintmax_t>(max_iter)) {
    throw SolverError("toms748_root: iteration budget exhausted");
  }
  return std::abs(f(a)) <= std::abs(f(b)) ? a : b;
}

/// Plain bisection of an increasing function until the bracket is narrower
/// than `xtol` or down to adjacent doubles. Deterministic by construction.
template <class F>
double bisect_increasing(F f, Bracket bracket, double xtol = 0.0, int max_iter = 2000) {
  double lo = bracket.lo;
  double hi = bracket.hi;
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (!(flo < 0.0 && fhi > 0.0)) throw SolverError("bisect_increasing: bracket does not change sign");
  for (int iter = 0; iter < max_iter; ++iter) {
    if (hi - lo <= xtol) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if (fm < 0.0) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  return std::abs(flo) <= std::abs(fhi) ? lo : hi;
}

}  // namespace risksharing
