#pragma once

// mdt/roots.hpp: bracketing helpers used by the solvers and the estimator.

#include <cmath>
#include <optional>
#include <string>

#include "mdt/errors.hpp"

namespace mdt {

struct Bracket {
  double lo;
  double hi;
};

// Bisection on a sign change of f over [lo, hi]. Stops when the bracket is
// narrower than tol or f hits exactly zero.
template <typename F>
double bisect(F&& f, double lo, double hi, double tol, int max_iter = 200) {
  double flo = f(lo);
  if (flo == 0.0) return lo;
  double fhi = f(hi);
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0))
    throw numerical_error("root_not_bracketed", "bisect: no sign change on [" + std::to_string(lo) + ", " +
                                                    std::to_string(hi) + "] (f(lo)=" + std::to_string(flo) +
                                                    ", f(hi)=" + std::to_string(fhi) + ")");
  for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Scans n evenly spaced points and returns the first bracket with a sign change.
template <typename F>
std::optional<Bracket> find_bracket(F&& f, double lo, double hi, int n) {
  double prev_x = lo;
  double prev_f = f(lo);
  for (int k = 1; k < n; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    const double fx = f(x);
    if (prev_f == 0.0) return Bracket{prev_x, prev_x};
    if ((prev_f < 0.0) != (fx < 0.0) || fx == 0.0) return Bracket{prev_x, x};
    prev_x = x;
    prev_f = fx;
  }
  return std::nullopt;
}

// Golden-section maximisation of a unimodal f on [lo, hi].
template <typename F>
double golden_max(F&& f, double lo, double hi, double tol) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace mdt
