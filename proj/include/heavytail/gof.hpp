#pragma once

// Goodness of fit: KS and AD distances, information criteria and Pearson's
// chi-square test with equal-probability bins.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "heavytail/distributions.hpp"
#include "heavytail/errors.hpp"
#include "heavytail/estimation.hpp"
#include "heavytail/special_functions.hpp"

namespace heavytail {

class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::span<const double> data) : sorted_(data.begin(), data.end()) {
    detail::require_domain(!sorted_.empty(), "EmpiricalCdf: need at least one observation");
    for (double x : sorted_) detail::require_domain(!std::isnan(x), "EmpiricalCdf: NaN in data");
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::span<const double> sorted() const { return sorted_; }
  std::size_t size() const { return sorted_.size(); }

  /// F_n(x) = #{x_i <= x} / n.
  double operator()(double x) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
  }

 private:
  std::vector<double> sorted_;
};

/// sup |F_n - F| from the model CDF at the order statistics.
inline double ks_statistic(std::span<const double> model_cdf_at_sorted) {
  const double n = static_cast<double>(model_cdf_at_sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < model_cdf_at_sorted.size(); ++i) {
    const double f = model_cdf_at_sorted[i];
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return std::clamp(d, 0.0, 1.0);
}

inline double ks_statistic(const EmpiricalCdf& ecdf, const ModelSpec& spec) {
  return ks_statistic(cdf_sorted(spec, ecdf.sorted()));
}

inline constexpr double kAdClamp = 1e-15;

/// Anderson-Darling statistic in order-statistic form.
inline double ad_statistic(std::span<const double> model_cdf_at_sorted) {
  const std::size_t n = model_cdf_at_sorted.size();
  const double nn = static_cast<double>(n);
  auto clamp = [](double f) { return std::clamp(f, kAdClamp, 1.0 - kAdClamp); };
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = clamp(model_cdf_at_sorted[i]);
    const double hi = clamp(model_cdf_at_sorted[n - 1 - i]);
    s += (2.0 * static_cast<double>(i) + 1.0) / nn * (std::log(lo) + std::log1p(-hi));
  }
  return -nn - s;
}

inline double ad_statistic(const EmpiricalCdf& ecdf, const ModelSpec& spec) {
  return ad_statistic(cdf_sorted(spec, ecdf.sorted()));
}

inline double aic(double loglik, int k) {
  detail::require_domain(k >= 1, "aic: k must be >= 1");
  return 2.0 * k - 2.0 * loglik;
}

inline double bic(double loglik, int k, std::size_t n) {
  detail::require_domain(k >= 1 && n >= 1, "bic: need k >= 1 and n >= 1");
  return k * std::log(static_cast<double>(n)) - 2.0 * loglik;
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  int bins_used = 0;
  bool rejected_at_5pct = false;
};

/// Pearson chi-square test on `bins` equal-probability bins under the model,
/// merging adjacent bins until every expected count is at least 5.
inline ChiSquareResult chi_square_test(std::span<const double> data, const ModelSpec& spec, int bins,
                                       int estimated_params) {
  detail::require_domain(bins >= 3, "chi_square_test: need at least 3 bins");
  detail::require_domain(estimated_params >= 0, "chi_square_test: estimated_params must be >= 0");
  detail::require_domain(!data.empty(), "chi_square_test: empty data");
  std::vector<double> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end());
  const auto f = cdf_sorted(spec, sorted);
  // bin j holds (q_{j/b}, q_{(j+1)/b}], i.e. ceil(F b) - 1
  std::vector<double> observed(static_cast<std::size_t>(bins), 0.0);
  for (double u : f) {
    const double pos = std::ceil(u * bins) - 1.0;
    const int j = std::clamp(static_cast<int>(pos), 0, bins - 1);
    observed[static_cast<std::size_t>(j)] += 1.0;
  }
  const double n = static_cast<double>(data.size());
  const double expected_each = n / bins;
  // merge left to right; a short remainder joins the last merged bin
  std::vector<double> obs_m;
  std::vector<double> exp_m;
  double o = 0.0;
  double e = 0.0;
  for (int j = 0; j < bins; ++j) {
    o += observed[static_cast<std::size_t>(j)];
    e += expected_each;
    if (e >= 5.0 - 1e-9) {
      obs_m.push_back(o);
      exp_m.push_back(e);
      o = 0.0;
      e = 0.0;
    }
  }
  if (e > 0.0) {
    if (exp_m.empty()) {
      obs_m.push_back(o);
      exp_m.push_back(e);
    } else {
      obs_m.back() += o;
      exp_m.back() += e;
    }
  }
  ChiSquareResult r;
  r.bins_used = static_cast<int>(obs_m.size());
  r.dof = r.bins_used - 1 - estimated_params;
  if (r.dof < 1) {
    throw DegreesOfFreedomError("chi_square_test: " + std::to_string(r.bins_used) + " bins leave " +
                                std::to_string(r.dof) + " degrees of freedom");
  }
  for (std::size_t j = 0; j < obs_m.size(); ++j) {
    const double d = obs_m[j] - exp_m[j];
    r.statistic += d * d / exp_m[j];
  }
  r.p_value = std::clamp(chi_square_survival(r.statistic, r.dof), 0.0, 1.0);
  r.rejected_at_5pct = r.p_value < 0.05;
  return r;
}

struct GofReport {
  double ks = 0.0;
  double ad = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  double loglik = 0.0;
  int k = 0;
  std::size_t n = 0;
};

inline GofReport gof_report(std::span<const double> data, const FitResult& fit) {
  if (data.size() != fit.n) {
    throw ConsistencyError("gof_report: fit was produced on " + std::to_string(fit.n) + " observations, got " +
                           std::to_string(data.size()));
  }
  const EmpiricalCdf ecdf(data);
  const auto f = cdf_sorted(fit.spec, ecdf.sorted());
  GofReport g;
  g.ks = ks_statistic(f);
  g.ad = ad_statistic(f);
  g.aic = aic(fit.loglik, fit.k);
  g.bic = bic(fit.loglik, fit.k, fit.n);
  g.loglik = fit.loglik;
  g.k = fit.k;
  g.n = fit.n;
  return g;
}

}  // namespace heavytail
