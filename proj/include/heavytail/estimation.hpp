#pragma once

// Maximum-likelihood fitters: closed-form normal, ECME for Student's t, EM
// for Student's t mixtures with fixed degrees of freedom, Nelder-Mead for the
// GH-type families and a Newton ascent for Meixner.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heavytail/distributions.hpp"
#include "heavytail/errors.hpp"
#include "heavytail/optimize.hpp"
#include "heavytail/random.hpp"
#include "heavytail/special_functions.hpp"

namespace heavytail {

struct FitConfig {
  std::optional<int> max_iterations;        // default 2000 (EM/ECME), 5000 (Nelder-Mead)
  std::optional<double> loglik_tolerance;   // default 1e-8 * n
  double param_tolerance = 1e-10;
  int restarts = 5;
  std::uint64_t seed = 0;
  std::vector<double> dofs;                 // only for the general mixture family
  bool keep_trace = true;

  void validate() const {
    detail::require_domain(!max_iterations || *max_iterations >= 1, "FitConfig: max_iterations must be >= 1");
    detail::require_domain(!loglik_tolerance || *loglik_tolerance > 0.0, "FitConfig: loglik_tolerance must be > 0");
    detail::require_domain(param_tolerance > 0.0, "FitConfig: param_tolerance must be > 0");
    detail::require_domain(restarts >= 1, "FitConfig: restarts must be >= 1");
  }
  int iterations_or(int fallback) const { return max_iterations.value_or(fallback); }
  double tolerance_for(std::size_t n) const { return loglik_tolerance.value_or(1e-8 * static_cast<double>(n)); }
};

struct FitResult {
  ModelSpec spec;
  double loglik = 0.0;
  int k = 0;
  std::size_t n = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
  std::vector<std::string> flags;  // e.g. "nu_at_upper_bound", "nu_at_most_2", "newton_fallback"

  Family family() const { return spec.family(); }
  bool has_flag(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

namespace detail {

struct Standardized {
  std::vector<double> y;
  double center = 0.0;
  double scale = 1.0;
};

inline double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline void require_finite_data(std::span<const double> data) {
  for (double x : data) {
    if (!std::isfinite(x)) throw DataError("fit: data contain non-finite values");
  }
}

inline double mean_of(std::span<const double> data) {
  double m = 0.0;
  for (double x : data) m += x;
  return m / static_cast<double>(data.size());
}

inline bool is_constant(std::span<const double> data) {
  return std::all_of(data.begin(), data.end(), [&](double x) { return x == data.front(); });
}

inline double population_sd(std::span<const double> data, double mean) {
  double ss = 0.0;
  for (double x : data) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(data.size()));
}

// y = (x - median) / sd. The fitters work on y and map the parameters back.
inline Standardized standardize(std::span<const double> data) {
  Standardized s;
  s.center = median_of(std::vector<double>(data.begin(), data.end()));
  const double sd = population_sd(data, mean_of(data));
  if (is_constant(data) || !(sd > 0.0)) throw EstimationError("fit: data have zero variance");
  s.scale = sd;
  s.y.reserve(data.size());
  for (double x : data) s.y.push_back((x - s.center) / sd);
  return s;
}

// Log-likelihood shift when mapping a fit on y back to x.
inline double log_jacobian(const Standardized& s) { return -static_cast<double>(s.y.size()) * std::log(s.scale); }

inline double scaled_mad(std::span<const double> y, double center) {
  std::vector<double> dev;
  dev.reserve(y.size());
  for (double v : y) dev.push_back(std::fabs(v - center));
  return 1.482602218505602 * median_of(std::move(dev));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Normal

inline FitResult fit_normal(std::span<const double> data) {
  if (data.size() < 2) throw EstimationError("fit_normal: need at least 2 observations");
  detail::require_finite_data(data);
  const double mu = detail::mean_of(data);
  const double sigma = detail::population_sd(data, mu);
  if (detail::is_constant(data) || !(sigma > 0.0)) throw EstimationError("fit_normal: data have zero variance");
  auto spec = ModelSpec::normal(mu, sigma);
  const double ll = log_likelihood(spec, data);
  return FitResult{spec, ll, 2, data.size(), 0, true, {}, {}};
}

// ---------------------------------------------------------------------------
// Student's t by ECME

namespace detail {

inline constexpr double kNuMin = 0.5;
inline constexpr double kNuMax = 200.0;

inline double student_loglik_std(std::span<const double> y, double nu, double mu, double sigma) {
  const double c = log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * nu) -
                   std::log(sigma);
  const double h = 0.5 * (nu + 1.0);
  double acc = 0.0;
  for (double v : y) {
    const double z = (v - mu) / sigma;
    acc += std::log1p(z * z / nu);
  }
  return static_cast<double>(y.size()) * c - h * acc;
}

}  // namespace detail

inline FitResult fit_student_ecme(std::span<const double> data, const FitConfig& config = {}) {
  config.validate();
  if (data.size() < 10) throw DomainError("fit_student_ecme: need at least 10 observations");
  detail::require_finite_data(data);
  const auto s = detail::standardize(data);
  const auto& y = s.y;
  const std::size_t n = y.size();
  const double tol = config.tolerance_for(n);
  const int max_iter = config.iterations_or(2000);

  double nu = 8.0;
  double mu = detail::mean_of(y);
  double sigma = detail::population_sd(y, mu) * std::sqrt((nu - 2.0) / nu);
  double ll = detail::student_loglik_std(y, nu, mu, sigma);
  std::vector<double> trace{ll};
  bool converged = false;
  int it = 0;
  std::vector<double> w(n);
  while (it < max_iter) {
    ++it;
    // E-step and CM-steps for mu, sigma
    double sw = 0.0;
    double swx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (y[i] - mu) / sigma;
      w[i] = (nu + 1.0) / (nu + z * z);
      sw += w[i];
      swx += w[i] * y[i];
    }
    const double mu_new = swx / sw;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += w[i] * (y[i] - mu_new) * (y[i] - mu_new);
    const double sigma_new = std::sqrt(ss / static_cast<double>(n));
    double ll_new = detail::student_loglik_std(y, nu, mu_new, sigma_new);
    if (ll_new >= ll) {
      mu = mu_new;
      sigma = sigma_new;
    } else {
      ll_new = ll;
    }
    // "either" step: nu maximizes the actual log-likelihood
    const auto best = golden_section_maximize(
        [&](double log_nu) { return detail::student_loglik_std(y, std::exp(log_nu), mu, sigma); },
        std::log(detail::kNuMin), std::log(detail::kNuMax), 1e-7);
    if (best.value > ll_new) {
      nu = std::exp(best.x);
      ll_new = best.value;
    }
    const double gain = ll_new - ll;
    ll = ll_new;
    trace.push_back(ll);
    if (gain < tol) {
      converged = true;
      break;
    }
  }

  auto spec = ModelSpec::student(nu, s.center + s.scale * mu, s.scale * sigma);
  FitResult r{spec, ll + detail::log_jacobian(s), 3, n, it, converged, {}, {}};
  if (config.keep_trace) {
    for (double v : trace) r.trace.push_back(v + detail::log_jacobian(s));
  }
  if (nu >= detail::kNuMax * (1.0 - 1e-6)) r.flags.emplace_back("nu_at_upper_bound");
  if (nu <= 2.0) r.flags.emplace_back("nu_at_most_2");
  return r;
}

// ---------------------------------------------------------------------------
// Student's t mixtures by EM with fixed degrees of freedom

namespace detail {

struct MixtureState {
  std::vector<double> mu, sigma, p;
};

struct MixtureRun {
  MixtureState state;
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool collapsed = false;
  std::vector<double> trace;
};

class MixtureEm {
 public:
  MixtureEm(std::span<const double> y, std::vector<double> dofs) : y_(y), nu_(std::move(dofs)) {
    const std::size_t m = nu_.size();
    for (std::size_t j = 0; j < m; ++j) {
      half_.push_back(0.5 * (nu_[j] + 1.0));
      lognorm_.push_back(log_gamma(half_[j]) - log_gamma(0.5 * nu_[j]) - 0.5 * std::log(std::numbers::pi * nu_[j]));
      const double twice = nu_[j] + 1.0;
      twice_half_.push_back(twice == std::round(twice) && twice <= 400.0 ? static_cast<int>(twice) : -1);
      ratio_.push_back((nu_[j] + 1.0) / nu_[j]);
    }
    tau_.resize(m * y.size());
    u_.resize(m * y.size());
  }

  // E-step: responsibilities tau and latent weights u (row-major n x m) at s;
  // returns the observed-data log-likelihood.
  double expectation(const MixtureState& s) {
    const std::size_t m = nu_.size();
    const std::size_t n = y_.size();
    coef_.assign(m, 0.0);
    logcoef_.assign(m, 0.0);
    scale_.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      logcoef_[j] = s.p[j] > 0.0 ? std::log(s.p[j]) + lognorm_[j] - std::log(s.sigma[j])
                                 : -std::numeric_limits<double>::infinity();
      coef_[j] = std::exp(logcoef_[j]);
      scale_[j] = 1.0 / (nu_[j] * s.sigma[j] * s.sigma[j]);
    }
    double ll = 0.0;
    // row sums are multiplied in batches so that only every 16th row needs a log
    double batch = 1.0;
    int in_batch = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double* tau = &tau_[i * m];
      double* u = &u_[i * m];
      double sum = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double d = y_[i] - s.mu[j];
        const double iq = 1.0 / (1.0 + d * d * scale_[j]);
        u[j] = ratio_[j] * iq;
        tau[j] = coef_[j] * power(iq, j);
        sum += tau[j];
      }
      if (sum > 1e-15 && sum < 1e15) {
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < m; ++j) tau[j] *= inv;
        batch *= sum;
        if (++in_batch == 16) {
          ll += std::log(batch);
          batch = 1.0;
          in_batch = 0;
        }
        continue;
      }
      // far tail: redo the row in log space
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        const double d = y_[i] - s.mu[j];
        tau[j] = logcoef_[j] - half_[j] * std::log1p(d * d * scale_[j]);
        top = std::max(top, tau[j]);
      }
      sum = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        tau[j] = std::exp(tau[j] - top);
        sum += tau[j];
      }
      for (std::size_t j = 0; j < m; ++j) tau[j] /= sum;
      ll += top + std::log(sum);
    }
    return ll + std::log(batch);
  }

  // M-step from the responsibilities and weights of the last E-step.
  MixtureState maximization(const MixtureState& s) const {
    const std::size_t m = nu_.size();
    const std::size_t n = y_.size();
    MixtureState next = s;
    std::vector<double> st(m, 0.0);
    std::vector<double> su(m, 0.0);
    std::vector<double> sux(m, 0.0);
    std::vector<double> suxx(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = y_[i];
      for (std::size_t j = 0; j < m; ++j) {
        const double t = tau_[i * m + j];
        const double tu = t * u_[i * m + j];
        st[j] += t;
        su[j] += tu;
        sux[j] += tu * x;
        suxx[j] += tu * x * x;
      }
    }
    const double total = std::accumulate(st.begin(), st.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      next.p[j] = st[j] / total;
      if (!(su[j] > 1e-300)) continue;  // component carries no mass; keep its location and scale
      const double mu = sux[j] / su[j];
      const double ss = std::max(suxx[j] - mu * sux[j], 0.0);
      next.mu[j] = mu;
      next.sigma[j] = std::sqrt(ss / st[j]);
    }
    return next;
  }

  std::span<const double> responsibilities() const { return tau_; }
  std::size_t components() const { return nu_.size(); }

 private:
  // w^((nu_j + 1) / 2)
  double power(double w, std::size_t j) const {
    const int twice = twice_half_[j];
    if (twice < 0) return std::exp(half_[j] * std::log(w));
    double r = (twice & 1) ? std::sqrt(w) : 1.0;
    double b = w;
    for (int e = twice >> 1; e > 0; e >>= 1) {
      if (e & 1) r *= b;
      b *= b;
    }
    return r;
  }

  std::span<const double> y_;
  std::vector<double> nu_;
  std::vector<double> half_;
  std::vector<double> lognorm_;
  std::vector<int> twice_half_;
  std::vector<double> ratio_;
  std::vector<double> tau_;
  std::vector<double> u_;
  std::vector<double> coef_;
  std::vector<double> logcoef_;
  std::vector<double> scale_;
};

// Starting point for restart r on standardized data. Wider scales go to the
// lower-dof components, which carry the tails.
inline MixtureState mixture_start(std::span<const double> y, std::size_t m, int r, RandomEngine& rng) {
  const double med = median_of(std::vector<double>(y.begin(), y.end()));
  double mad = scaled_mad(y, med);
  if (!(mad > 0.0)) mad = population_sd(y, mean_of(y));
  MixtureState s;
  for (std::size_t j = 0; j < m; ++j) {
    const double frac = m == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(m - 1);
    const double factor = 2.0 * std::pow(0.25, frac);  // 2 ... 0.5
    double mu = med;
    double sigma = mad * factor;
    double p = 1.0 / static_cast<double>(m);
    if (r > 0) {
      mu += 0.1 * mad * rng.normal();
      sigma *= std::exp(0.3 * rng.normal());
      p = 0.5 + rng.uniform();
    } else if (m > 1) {
      mu += 1e-3 * mad * (static_cast<double>(j) - 0.5 * static_cast<double>(m - 1));
    }
    s.mu.push_back(mu);
    s.sigma.push_back(sigma);
    s.p.push_back(p);
  }
  const double total = std::accumulate(s.p.begin(), s.p.end(), 0.0);
  for (auto& p : s.p) p /= total;
  return s;
}

// theta = (mu_j, log sigma_j, log(p_j / p_m)) for the extrapolation step.
inline std::vector<double> pack(const MixtureState& s) {
  std::vector<double> v(s.mu);
  for (double sg : s.sigma) v.push_back(std::log(sg));
  const double last = s.p.back();
  for (std::size_t j = 0; j + 1 < s.p.size(); ++j) v.push_back(std::log(s.p[j] / last));
  return v;
}

inline std::optional<MixtureState> unpack(std::span<const double> v, std::size_t m) {
  MixtureState s;
  s.mu.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  for (std::size_t j = 0; j < m; ++j) s.sigma.push_back(std::exp(v[m + j]));
  double total = 1.0;
  for (std::size_t j = 0; j + 1 < m; ++j) total += std::exp(v[2 * m + j]);
  for (std::size_t j = 0; j + 1 < m; ++j) s.p.push_back(std::exp(v[2 * m + j]) / total);
  s.p.push_back(1.0 / total);
  for (double x : v) {
    if (!std::isfinite(x)) return std::nullopt;
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (!std::isfinite(s.sigma[j]) || !(s.sigma[j] > 0.0) || !std::isfinite(s.p[j])) return std::nullopt;
  }
  return s;
}

inline bool above_floor(const MixtureState& s, double floor) {
  return std::all_of(s.sigma.begin(), s.sigma.end(), [&](double sg) { return std::isfinite(sg) && sg >= floor; });
}

// EM accelerated by squared extrapolation (SQUAREM, scheme S3). An
// extrapolated point is kept only if it beats two plain EM steps, so the
// log-likelihood sequence stays nondecreasing.
inline void advance_mixture_em(MixtureEm& em, MixtureRun& run, double sigma_floor, double tol, int max_iter,
                               bool keep_trace) {
  const std::size_t m = em.components();
  MixtureState& state = run.state;
  double ll = em.expectation(state);
  run.loglik = ll;
  if (keep_trace && run.trace.empty()) run.trace.push_back(ll);
  auto collapse = [&] { run.collapsed = true; };
  while (run.iterations < max_iter) {
    ++run.iterations;
    auto s1 = em.maximization(state);
    if (!above_floor(s1, sigma_floor)) return collapse();
    const double ll1 = em.expectation(s1);
    auto s2 = em.maximization(s1);
    if (!above_floor(s2, sigma_floor)) return collapse();
    double ll_next = em.expectation(s2);
    MixtureState next = s2;
    if (!std::isfinite(ll1) || !std::isfinite(ll_next)) return collapse();

    const auto v0 = pack(state);
    const auto v1 = pack(s1);
    const auto v2 = pack(s2);
    double rr = 0.0;
    double vv = 0.0;
    std::vector<double> r(v0.size());
    std::vector<double> v(v0.size());
    for (std::size_t k = 0; k < v0.size(); ++k) {
      r[k] = v1[k] - v0[k];
      v[k] = v2[k] - v1[k] - r[k];
      rr += r[k] * r[k];
      vv += v[k] * v[k];
    }
    bool tau_current = true;  // responsibilities correspond to `next`
    if (vv > 0.0 && rr > 0.0) {
      // step length -sqrt(rr / vv), halved towards -1 while the stabilized point loses to the current one
      for (double alpha = std::min(-std::sqrt(rr / vv), -1.0); alpha < -1.0; alpha = 0.5 * (alpha - 1.0)) {
        std::vector<double> x(v0.size());
        for (std::size_t k = 0; k < v0.size(); ++k) x[k] = v0[k] - 2.0 * alpha * r[k] + alpha * alpha * v[k];
        auto ext = unpack(x, m);
        if (!ext) continue;
        const double lle = em.expectation(*ext);
        tau_current = false;
        if (!std::isfinite(lle)) continue;
        auto stab = em.maximization(*ext);
        if (!above_floor(stab, sigma_floor)) continue;
        const double lls = em.expectation(stab);
        if (std::isfinite(lls) && lls >= ll) {
          if (lls >= ll_next) {
            next = std::move(stab);
            ll_next = lls;
            tau_current = true;
          }
          break;
        }
        if (alpha > -1.5) break;
      }
    }
    if (!tau_current) ll_next = em.expectation(next);
    const double gain = ll_next - ll;
    state = std::move(next);
    ll = ll_next;
    run.loglik = ll;
    if (keep_trace) run.trace.push_back(ll);
    if (gain < tol) {
      run.converged = true;
      return;
    }
  }
}

}  // namespace detail

/// EM for an m-component Student's t mixture with the given fixed dofs.
/// Components are stored in ascending dof order.
inline FitResult fit_student_mixture_em(std::span<const double> data, std::vector<double> dofs,
                                        const FitConfig& config = {}) {
  config.validate();
  if (data.size() < 50) throw DomainError("fit_student_mixture_em: need at least 50 observations");
  detail::require_domain(!dofs.empty(), "fit_student_mixture_em: need at least one dof");
  for (double d : dofs) detail::require_domain(d > 0.0 && std::isfinite(d), "fit_student_mixture_em: dofs must be > 0");
  std::sort(dofs.begin(), dofs.end());
  detail::require_finite_data(data);
  const auto s = detail::standardize(data);
  const std::size_t m = dofs.size();
  const double tol = config.tolerance_for(data.size());
  const int max_iter = config.iterations_or(2000);
  const double floor = 1e-6;  // 1e-6 sample sd, in standardized units

  detail::MixtureEm em(s.y, dofs);
  RandomEngine rng(config.seed);
  // every start gets a short run; the most promising ones are then run to convergence
  const int screen = std::min(20, max_iter);
  std::vector<detail::MixtureRun> runs(static_cast<std::size_t>(config.restarts));
  std::vector<std::size_t> order;
  int collapsed = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    runs[r].state = detail::mixture_start(s.y, m, static_cast<int>(r), rng);
    detail::advance_mixture_em(em, runs[r], floor, tol, screen, config.keep_trace);
    if (runs[r].collapsed) {
      ++collapsed;
    } else {
      order.push_back(r);
    }
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (runs[a].loglik != runs[b].loglik) return runs[a].loglik > runs[b].loglik;
    if (runs[a].iterations != runs[b].iterations) return runs[a].iterations < runs[b].iterations;
    return a < b;
  };
  std::sort(order.begin(), order.end(), better);
  const detail::MixtureRun* best = nullptr;
  for (std::size_t r : order) {
    auto& run = runs[r];
    if (!run.converged) detail::advance_mixture_em(em, run, floor, tol, max_iter, config.keep_trace);
    if (run.collapsed) {
      ++collapsed;
      continue;
    }
    best = &run;
    break;
  }
  if (best == nullptr) throw EstimationError("fit_student_mixture_em: every restart collapsed");

  StudentMixtureParams p;
  for (std::size_t j = 0; j < m; ++j) {
    p.components.push_back({s.center + s.scale * best->state.mu[j], s.scale * best->state.sigma[j], dofs[j], true});
  }
  p.weights.assign(best->state.p.begin(), best->state.p.end() - 1);
  // clean the last weight of rounding so that the implied p_m stays >= 0
  double head = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
  if (head > 1.0) {
    for (auto& w : p.weights) w /= head;
  }
  auto spec = ModelSpec::mixture(std::move(p));
  const double shift = detail::log_jacobian(s);
  FitResult r{spec, best->loglik + shift, parameter_count(spec), data.size(), best->iterations, best->converged, {},
              {}};
  for (double v : best->trace) r.trace.push_back(v + shift);
  if (collapsed > 0) r.flags.push_back("restarts_collapsed=" + std::to_string(collapsed));
  return r;
}

// ---------------------------------------------------------------------------
// Reparameterizations for unconstrained optimization

namespace detail {

inline std::vector<double> to_unconstrained(const ModelSpec& spec) {
  switch (spec.family()) {
    case Family::NIG: {
      const auto& p = spec.as<NigParams>();
      return {p.beta, std::log(p.alpha - std::fabs(p.beta)), std::log(p.delta), p.mu};
    }
    case Family::VarianceGamma: {
      const auto& p = spec.as<VarianceGammaParams>();
      return {std::log(p.lambda), p.beta, std::log(p.alpha - std::fabs(p.beta)), p.mu};
    }
    case Family::GH: {
      const auto& p = spec.as<GhParams>();
      return {p.lambda, p.beta, std::log(p.alpha - std::fabs(p.beta)), std::log(p.delta), p.mu};
    }
    case Family::Meixner: {
      const auto& p = spec.as<MeixnerParams>();
      return {std::log(p.alpha), std::tan(0.5 * p.beta), p.mu, std::log(p.delta)};
    }
    default: throw DomainError("to_unconstrained: family has no reparameterization");
  }
}

inline ModelSpec from_unconstrained(Family f, std::span<const double> t) {
  switch (f) {
    case Family::NIG: return ModelSpec::nig(std::fabs(t[0]) + std::exp(t[1]), t[0], std::exp(t[2]), t[3]);
    case Family::VarianceGamma:
      return ModelSpec::variance_gamma(std::exp(t[0]), std::fabs(t[1]) + std::exp(t[2]), t[1], t[3]);
    case Family::GH: return ModelSpec::gh(t[0], std::fabs(t[1]) + std::exp(t[2]), t[1], std::exp(t[3]), t[4]);
    case Family::Meixner: return ModelSpec::meixner(std::exp(t[0]), 2.0 * std::atan(t[1]), t[2], std::exp(t[3]));
    default: throw DomainError("from_unconstrained: family has no reparameterization");
  }
}

// Fitted parameters on y = (x - c) / s mapped to parameters on x.
inline ModelSpec unstandardize(const ModelSpec& spec, double c, double s) {
  switch (spec.family()) {
    case Family::NIG: {
      const auto& p = spec.as<NigParams>();
      return ModelSpec::nig(p.alpha / s, p.beta / s, p.delta * s, c + s * p.mu);
    }
    case Family::VarianceGamma: {
      const auto& p = spec.as<VarianceGammaParams>();
      return ModelSpec::variance_gamma(p.lambda, p.alpha / s, p.beta / s, c + s * p.mu);
    }
    case Family::GH: {
      const auto& p = spec.as<GhParams>();
      return ModelSpec::gh(p.lambda, p.alpha / s, p.beta / s, p.delta * s, c + s * p.mu);
    }
    case Family::Meixner: {
      const auto& p = spec.as<MeixnerParams>();
      return ModelSpec::meixner(p.alpha * s, p.beta, c + s * p.mu, p.delta);
    }
    default: throw DomainError("unstandardize: unsupported family");
  }
}

struct SampleMoments {
  double mean, var, skew, kurt;  // kurt is raw (3 for the normal)
};

inline SampleMoments moments(std::span<const double> y) {
  const double m = mean_of(y);
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (double v : y) {
    const double d = v - m;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double n = static_cast<double>(y.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  return {m, m2, m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

// NIG matching mean, variance, skewness and excess kurtosis where possible.
inline NigParams nig_moment_start(const SampleMoments& mo) {
  double excess = std::max(mo.kurt - 3.0, 0.3);
  double skew = mo.skew;
  if (3.0 * excess <= 5.0 * skew * skew) skew = std::copysign(std::sqrt(0.5 * excess), skew);  // keep rho^2 < 1
  const double rho2 = skew * skew / (3.0 * excess - 4.0 * skew * skew);
  const double dg = 3.0 * (1.0 + 4.0 * rho2) / excess;  // delta * gamma
  const double rho = std::copysign(std::sqrt(rho2), skew);
  // var = delta alpha^2 / gamma^3 = dg / (gamma^2 (1 - rho^2))
  const double gamma = std::sqrt(dg / (mo.var * (1.0 - rho2)));
  const double delta = dg / gamma;
  const double alpha = gamma / std::sqrt(1.0 - rho2);
  const double beta = rho * alpha;
  const double mu = mo.mean - delta * beta / gamma;
  return {alpha, beta, delta, mu};
}

inline std::vector<ModelSpec> nelder_mead_starts(Family f, std::span<const double> y, int count, RandomEngine& rng) {
  const auto mo = moments(y);
  const auto nig = nig_moment_start(mo);
  std::vector<ModelSpec> starts;
  for (int r = 0; r < count; ++r) {
    const double jitter = r == 0 ? 0.0 : rng.normal();
    switch (f) {
      case Family::NIG:
        starts.push_back(ModelSpec::nig(nig.alpha * std::exp(0.3 * jitter), nig.beta, nig.delta * std::exp(-0.3 * jitter),
                                        nig.mu));
        if (std::fabs(starts.back().as<NigParams>().beta) >= starts.back().as<NigParams>().alpha) {
          starts.back() = ModelSpec::nig(nig.alpha, nig.beta, nig.delta, nig.mu);
        }
        break;
      case Family::GH: {
        const double lambda = -0.5 + 1.0 * jitter;
        starts.push_back(ModelSpec::gh(lambda, nig.alpha, nig.beta, nig.delta, nig.mu));
        break;
      }
      case Family::VarianceGamma: {
        const double excess = std::max(mo.kurt - 3.0, 0.3);
        const double lambda = 3.0 / excess * std::exp(0.5 * jitter);
        // var = 2 lambda / alpha^2 for beta = 0
        const double alpha = std::sqrt(2.0 * lambda / mo.var);
        starts.push_back(ModelSpec::variance_gamma(lambda, alpha, 0.0, mo.mean));
        break;
      }
      case Family::Meixner: {
        const double excess = std::max(mo.kurt - 3.0, 0.3);
        const double delta = 1.0 / excess * std::exp(0.5 * jitter);
        // var = alpha^2 delta / 2 for beta = 0
        const double alpha = std::sqrt(2.0 * mo.var / delta);
        starts.push_back(ModelSpec::meixner(alpha, 0.0, mo.mean, delta));
        break;
      }
      default: throw DomainError("nelder_mead_starts: unsupported family");
    }
  }
  return starts;
}

inline double safe_loglik(const ModelSpec& spec, std::span<const double> y) {
  try {
    const double v = log_likelihood(spec, y);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  } catch (const DomainError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Maximizes the log-likelihood of a GH, NIG, VG or Meixner model by
/// Nelder-Mead over an unconstrained reparameterization, with restarts.
inline FitResult fit_nelder_mead(Family family, std::span<const double> data, const FitConfig& config = {}) {
  config.validate();
  detail::require_domain(family == Family::GH || family == Family::NIG || family == Family::VarianceGamma ||
                             family == Family::Meixner,
                         "fit_nelder_mead: family must be GH, NIG, VG or Meixner");
  if (data.size() < 50) throw DomainError("fit_nelder_mead: need at least 50 observations");
  detail::require_finite_data(data);
  const auto s = detail::standardize(data);
  const double tol = config.tolerance_for(data.size());
  const int budget = config.iterations_or(5000);
  RandomEngine rng(config.seed);
  const auto starts = detail::nelder_mead_starts(family, s.y, config.restarts, rng);

  auto objective = [&](const std::vector<double>& t) {
    try {
      return -detail::safe_loglik(detail::from_unconstrained(family, t), s.y);
    } catch (const DomainError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  struct Candidate {
    std::vector<double> x;
    double value;
    int iterations;
    int evaluations;
    bool converged;
  };
  std::vector<Candidate> screened;
  const int dim = static_cast<int>(detail::to_unconstrained(starts.front()).size());
  // every start gets a short search; the best one is then polished
  for (const auto& start : starts) {
    NelderMeadOptions opt;
    opt.max_evaluations = std::min(budget, 40 * dim);
    opt.value_tolerance = tol;
    opt.step_tolerance = 1e-6;
    opt.initial_step = 0.3;
    const auto res = nelder_mead(objective, detail::to_unconstrained(start), opt);
    if (!std::isfinite(res.value)) continue;
    screened.push_back({res.x, res.value, res.iterations, res.evaluations, res.converged});
  }
  std::optional<ModelSpec> best_spec;
  double best_ll = -std::numeric_limits<double>::infinity();
  int best_iter = 0;
  bool best_conv = false;
  if (!screened.empty()) {
    const auto& top = *std::min_element(screened.begin(), screened.end(), [](const Candidate& a, const Candidate& b) {
      if (a.value != b.value) return a.value < b.value;
      return a.iterations < b.iterations;
    });
    NelderMeadOptions opt;
    opt.value_tolerance = tol;
    opt.step_tolerance = 1e-6;
    opt.initial_step = 0.1;
    auto x = top.x;
    double value = top.value;
    int iterations = top.iterations;
    int used = top.evaluations;
    bool converged = top.converged;
    // restart the simplex at the optimum until it stops moving
    for (int round = 0; round < 6 && used < budget; ++round) {
      opt.max_evaluations = budget - used;
      const auto res = nelder_mead(objective, x, opt);
      iterations += res.iterations;
      used += res.evaluations;
      converged = res.converged;
      const double gain = value - res.value;
      if (res.value < value) {
        x = res.x;
        value = res.value;
      }
      opt.initial_step = 0.05;
      if (gain < tol) break;
    }
    best_spec = detail::from_unconstrained(family, x);
    best_ll = -value;
    best_iter = iterations;
    best_conv = converged;
  }
  if (!best_spec) throw EstimationError("fit_nelder_mead: no start produced a finite log-likelihood");
  auto spec = detail::unstandardize(*best_spec, s.center, s.scale);
  return FitResult{spec, best_ll + detail::log_jacobian(s), parameter_count(spec), data.size(), best_iter, best_conv,
                   {}, {}};
}

// ---------------------------------------------------------------------------
// Meixner by Newton ascent

/// Score of the Meixner log-likelihood in natural parameters (alpha, beta, mu, delta).
inline std::array<double, 4> meixner_score(const MeixnerParams& p, std::span<const double> data) {
  p.validate();
  const double c_delta = 2.0 * std::log(2.0 * std::cos(0.5 * p.beta)) - 2.0 * digamma(2.0 * p.delta);
  const double c_beta = -p.delta * std::tan(0.5 * p.beta);
  std::array<double, 4> g{};
  double sum_re = 0.0;
  double sum_y = 0.0;
  double sum_im = 0.0;
  double sum_im_y = 0.0;
  for (double x : data) {
    const double y = (x - p.mu) / p.alpha;
    const auto psi = digamma(std::complex<double>(p.delta, y));
    sum_re += psi.real();
    sum_y += y;
    sum_im += psi.imag();
    sum_im_y += psi.imag() * y;
  }
  const double n = static_cast<double>(data.size());
  g[0] = -n / p.alpha - (p.beta * sum_y - 2.0 * sum_im_y) / p.alpha;
  g[1] = n * c_beta + sum_y;
  g[2] = -(n * p.beta - 2.0 * sum_im) / p.alpha;
  g[3] = n * c_delta + 2.0 * sum_re;
  return g;
}

namespace detail {

// Gradient with respect to (log alpha, tan(beta/2), mu, log delta).
inline std::array<double, 4> meixner_score_unconstrained(std::span<const double> t, std::span<const double> y) {
  const auto spec = from_unconstrained(Family::Meixner, t);
  const auto& p = spec.as<MeixnerParams>();
  auto g = meixner_score(p, y);
  g[0] *= p.alpha;
  g[1] *= 2.0 / (1.0 + t[1] * t[1]);
  g[3] *= p.delta;
  return g;
}

// Solves (A) x = b for a 4x4 system by Gaussian elimination with partial pivoting.
inline bool solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b, std::array<double, 4>& x) {
  for (int c = 0; c < 4; ++c) {
    int piv = c;
    for (int r = c + 1; r < 4; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    if (!(std::fabs(a[piv][c]) > 1e-300)) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (int r = c + 1; r < 4; ++r) {
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < 4; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (int c = 3; c >= 0; --c) {
    double v = b[c];
    for (int k = c + 1; k < 4; ++k) v -= a[c][k] * x[k];
    x[c] = v / a[c][c];
  }
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detail

/// Damped Newton ascent for the Meixner model with an analytic score and a
/// finite-difference Hessian; falls back to Nelder-Mead when it cannot ascend.
inline FitResult fit_meixner_newton(std::span<const double> data, const FitConfig& config = {}) {
  config.validate();
  if (data.size() < 50) throw DomainError("fit_meixner_newton: need at least 50 observations");
  detail::require_finite_data(data);
  const auto s = detail::standardize(data);
  const auto& y = s.y;
  const double tol = config.tolerance_for(data.size());
  const int max_iter = config.iterations_or(200);
  RandomEngine rng(config.seed);
  const auto start = detail::nelder_mead_starts(Family::Meixner, y, 1, rng).front();

  auto loglik_at = [&](const std::vector<double>& t) {
    try {
      return detail::safe_loglik(detail::from_unconstrained(Family::Meixner, t), y);
    } catch (const DomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  std::vector<double> t = detail::to_unconstrained(start);
  double ll = loglik_at(t);
  bool ok = std::isfinite(ll);
  bool converged = false;
  int it = 0;
  const double n = static_cast<double>(y.size());
  while (ok && it < max_iter) {
    ++it;
    const auto g = detail::meixner_score_unconstrained(t, y);
    double gnorm = 0.0;
    for (double v : g) gnorm = std::max(gnorm, std::fabs(v));
    if (gnorm <= 1e-8 * n) {
      converged = true;
      break;
    }
    std::array<std::array<double, 4>, 4> h{};
    for (int k = 0; k < 4; ++k) {
      const double step = 1e-5 * std::max(1.0, std::fabs(t[k]));
      auto tp = t;
      auto tm = t;
      tp[k] += step;
      tm[k] -= step;
      std::array<double, 4> gp{};
      std::array<double, 4> gm{};
      try {
        gp = detail::meixner_score_unconstrained(tp, y);
        gm = detail::meixner_score_unconstrained(tm, y);
      } catch (const DomainError&) {
        ok = false;
        break;
      }
      for (int r = 0; r < 4; ++r) h[r][k] = (gp[r] - gm[r]) / (2.0 * step);
    }
    if (!ok) break;
    for (int r = 0; r < 4; ++r) {
      for (int c = r + 1; c < 4; ++c) h[r][c] = h[c][r] = 0.5 * (h[r][c] + h[c][r]);
    }
    // Levenberg damping until the step is an ascent direction with improvement
    double damping = 0.0;
    double diag = 0.0;
    for (int r = 0; r < 4; ++r) diag = std::max(diag, std::fabs(h[r][r]));
    bool improved = false;
    for (int attempt = 0; attempt < 30 && !improved; ++attempt) {
      auto a = h;
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) a[r][c] = -a[r][c];
        a[r][r] += damping;
      }
      std::array<double, 4> d{};
      if (detail::solve4(a, g, d)) {
        double slope = 0.0;
        for (int r = 0; r < 4; ++r) slope += d[r] * g[r];
        if (slope > 0.0) {
          double scale = 1.0;
          for (int ls = 0; ls < 20; ++ls) {
            std::vector<double> trial(t);
            for (int r = 0; r < 4; ++r) trial[r] += scale * d[r];
            const double lt = loglik_at(trial);
            if (lt >= ll + 1e-4 * scale * slope) {
              const double gain = lt - ll;
              t = std::move(trial);
              ll = lt;
              improved = true;
              if (gain < tol) converged = true;
              break;
            }
            scale *= 0.5;
          }
        }
      }
      damping = damping == 0.0 ? 1e-6 * std::max(diag, 1.0) : damping * 10.0;
    }
    if (!improved) {
      ok = false;
      break;
    }
    if (converged) break;
  }

  if (!ok || !converged) {
    auto fallback = fit_nelder_mead(Family::Meixner, data, config);
    fallback.flags.emplace_back("newton_fallback");
    return fallback;
  }
  auto spec = detail::unstandardize(detail::from_unconstrained(Family::Meixner, t), s.center, s.scale);
  return FitResult{spec, ll + detail::log_jacobian(s), 4, data.size(), it, true, {}, {}};
}

// ---------------------------------------------------------------------------
// Dispatcher

inline FitResult fit(Family family, std::span<const double> data, const FitConfig& config = {}) {
  switch (family) {
    case Family::Normal: return fit_normal(data);
    case Family::Student: return fit_student_ecme(data, config);
    case Family::NIG:
    case Family::VarianceGamma:
    case Family::GH: return fit_nelder_mead(family, data, config);
    case Family::Meixner: return fit_meixner_newton(data, config);
    case Family::Mix2St12:
    case Family::Mix2St39:
    case Family::Mix3St: return fit_student_mixture_em(data, canonical_dofs(family), config);
    case Family::MixtureGeneral:
      detail::require_domain(!config.dofs.empty(), "fit: the general mixture needs dofs in the config");
      return fit_student_mixture_em(data, config.dofs, config);
  }
  throw DomainError("fit: unknown family");
}

inline FitResult fit(std::string_view family, std::span<const double> data, const FitConfig& config = {}) {
  return fit(parse_family(family), data, config);
}

}  // namespace heavytail
