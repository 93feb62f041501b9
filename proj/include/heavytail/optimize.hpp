#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "heavytail/errors.hpp"

namespace heavytail {

struct NelderMeadOptions {
  int max_evaluations = 5000;
  double value_tolerance = 1e-10;  // spread of f over the simplex
  double step_tolerance = 1e-9;    // max vertex distance from the best vertex
  double initial_step = 0.25;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f with the Nelder-Mead simplex method. Non-finite values are
/// treated as +inf, so infeasible points are simply never accepted.
template <typename F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> start, const NelderMeadOptions& opt = {}) {
  const std::size_t dim = start.size();
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> simplex(dim + 1, start);
  std::vector<double> values(dim + 1);
  for (std::size_t i = 0; i < dim; ++i) {
    const double step = opt.initial_step * std::max(1.0, std::fabs(start[i]) * 0.1);
    simplex[i + 1][i] += step;
  }
  for (std::size_t i = 0; i <= dim; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(dim + 1);
  std::vector<double> centroid(dim);
  std::vector<double> trial(dim);
  std::vector<double> trial2(dim);

  auto point_on_line = [&](double coef, std::vector<double>& out, const std::vector<double>& worst) {
    for (std::size_t k = 0; k < dim; ++k) out[k] = centroid[k] + coef * (worst[k] - centroid[k]);
  };

  while (res.evaluations < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[dim - 1];

    double spread = std::fabs(values[worst] - values[best]);
    double size = 0.0;
    for (std::size_t i = 0; i <= dim; ++i) {
      for (std::size_t k = 0; k < dim; ++k) size = std::max(size, std::fabs(simplex[i][k] - simplex[best][k]));
    }
    if (std::isfinite(values[worst]) && spread <= opt.value_tolerance && size <= opt.step_tolerance) {
      res.converged = true;
      break;
    }
    if (size <= 1e-14 * (1.0 + std::fabs(simplex[best][0]))) {
      res.converged = std::isfinite(values[best]);
      break;
    }
    ++res.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[i][k];
    }
    for (auto& c : centroid) c /= static_cast<double>(dim);

    point_on_line(-1.0, trial, simplex[worst]);
    const double fr = eval(trial);
    if (fr < values[best]) {
      point_on_line(-2.0, trial2, simplex[worst]);
      const double fe = eval(trial2);
      if (fe < fr) {
        simplex[worst] = trial2;
        values[worst] = fe;
      } else {
        simplex[worst] = trial;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = trial;
      values[worst] = fr;
      continue;
    }
    // contraction: outside if the reflected point beats the worst vertex
    const bool outside = fr < values[worst];
    point_on_line(outside ? -0.5 : 0.5, trial2, simplex[worst]);
    const double fc = eval(trial2);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = trial2;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < dim; ++k) simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
      values[i] = eval(simplex[i]);
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  res.x = simplex[static_cast<std::size_t>(it - values.begin())];
  res.value = *it;
  return res;
}

struct ScalarOptimum {
  double x;
  double value;
  int evaluations;
};

/// Golden-section search for the maximum of f on [lo, hi]. The endpoints are
/// evaluated too, so a monotone f returns the better endpoint exactly.
template <typename F>
ScalarOptimum golden_section_maximize(F&& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  int evals = 2;
  while (std::fabs(b - a) > tol) {
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
    ++evals;
  }
  ScalarOptimum best = fc >= fd ? ScalarOptimum{c, fc, 0} : ScalarOptimum{d, fd, 0};
  for (double edge : {lo, hi}) {
    const double fe = f(edge);
    ++evals;
    if (fe > best.value) best = {edge, fe, 0};
  }
  best.evaluations = evals;
  return best;
}

/// Root of a monotone function on a sign-changing bracket [lo, hi], by a
/// safeguarded Illinois (modified regula falsi) iteration with bisection.
/// Stops when |g| <= f_tol or the bracket has collapsed to rounding.
template <typename G>
double bracketed_root(G&& g, double lo, double hi, double glo, double ghi, double f_tol, int max_iter = 400) {
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  if ((glo > 0.0) == (ghi > 0.0)) throw DomainError("bracketed_root: no sign change");
  int side = 0;
  double x = lo;
  for (int it = 0; it < max_iter; ++it) {
    const double width = hi - lo;
    x = (it % 4 == 3) ? lo + 0.5 * width : (lo * ghi - hi * glo) / (ghi - glo);
    if (!(x > lo && x < hi)) x = lo + 0.5 * width;
    const double gx = g(x);
    if (std::fabs(gx) <= f_tol) return x;
    if ((gx > 0.0) == (ghi > 0.0)) {
      hi = x;
      ghi = gx;
      if (side == -1) glo *= 0.5;
      side = -1;
    } else {
      lo = x;
      glo = gx;
      if (side == 1) ghi *= 0.5;
      side = 1;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::fabs(lo), std::fabs(hi))) break;
  }
  return std::fabs(glo) < std::fabs(ghi) ? lo : hi;
}

}  // namespace heavytail
