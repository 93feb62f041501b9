#pragma once

// Parameter types, log-densities, CDFs, quantiles and samplers for the
// normal, Student's t, GH, NIG, variance gamma, Meixner and Student's t
// mixture families.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "heavytail/errors.hpp"
#include "heavytail/optimize.hpp"
#include "heavytail/quadrature.hpp"
#include "heavytail/random.hpp"
#include "heavytail/special_functions.hpp"

namespace heavytail {

// ---------------------------------------------------------------------------
// Families and parameters

enum class Family { Normal, Student, NIG, VarianceGamma, GH, Meixner, Mix2St12, Mix2St39, Mix3St, MixtureGeneral };

/// Families in the fixed order used for tables and tie-breaking.
inline constexpr std::array<Family, 9> kStandardFamilies = {Family::Normal, Family::Student, Family::NIG,
                                                         Family::VarianceGamma, Family::GH, Family::Meixner,
                                                         Family::Mix2St12, Family::Mix2St39, Family::Mix3St};

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::Normal: return "N";
    case Family::Student: return "St";
    case Family::NIG: return "NIG";
    case Family::VarianceGamma: return "VG";
    case Family::GH: return "GH";
    case Family::Meixner: return "Meixner";
    case Family::Mix2St12: return "2St12";
    case Family::Mix2St39: return "2St39";
    case Family::Mix3St: return "3St";
    case Family::MixtureGeneral: return "mSt";
  }
  return "?";
}

inline Family parse_family(std::string_view name) {
  if (name == "N" || name == "Normal") return Family::Normal;
  if (name == "St" || name == "Student") return Family::Student;
  if (name == "NIG") return Family::NIG;
  if (name == "VG" || name == "VarianceGamma") return Family::VarianceGamma;
  if (name == "GH") return Family::GH;
  if (name == "M" || name == "Meix" || name == "Meixner") return Family::Meixner;
  if (name == "2St12") return Family::Mix2St12;
  if (name == "2St39") return Family::Mix2St39;
  if (name == "3St") return Family::Mix3St;
  if (name == "mSt") return Family::MixtureGeneral;
  throw DomainError("unknown family '" + std::string(name) + "'");
}

/// Fixed degrees of freedom of the canonical mixtures, ascending.
inline std::vector<double> canonical_dofs(Family f) {
  switch (f) {
    case Family::Mix2St12: return {4.0, 12.0};
    case Family::Mix2St39: return {4.0, 39.0};
    case Family::Mix3St: return {4.0, 12.0, 39.0};
    default: throw DomainError("canonical_dofs: not a canonical mixture family");
  }
}

inline bool is_mixture(Family f) {
  return f == Family::Mix2St12 || f == Family::Mix2St39 || f == Family::Mix3St || f == Family::MixtureGeneral;
}

struct NormalParams {
  double mu = 0.0;
  double sigma = 1.0;
  void validate() const {
    detail::require_domain(std::isfinite(mu) && sigma > 0.0 && std::isfinite(sigma), "normal: need sigma > 0");
  }
};

struct StudentParams {
  double nu = 4.0;
  double mu = 0.0;
  double sigma = 1.0;
  void validate() const {
    detail::require_domain(nu > 0.0 && std::isfinite(nu), "student: need nu > 0");
    detail::require_domain(std::isfinite(mu) && sigma > 0.0 && std::isfinite(sigma), "student: need sigma > 0");
  }
};

struct GhParams {
  double lambda = -0.5;
  double alpha = 1.0;
  double beta = 0.0;
  double delta = 1.0;
  double mu = 0.0;
  void validate() const {
    const bool finite = std::isfinite(lambda) && std::isfinite(alpha) && std::isfinite(beta) &&
                        std::isfinite(delta) && std::isfinite(mu);
    detail::require_domain(finite && alpha >= 0.0, "GH: parameters must be finite with alpha >= 0");
    if (lambda > 0.0) {
      detail::require_domain(delta >= 0.0 && std::fabs(beta) < alpha, "GH(lambda > 0): need delta >= 0, |beta| < alpha");
    } else if (lambda == 0.0) {
      detail::require_domain(delta > 0.0 && std::fabs(beta) < alpha, "GH(lambda = 0): need delta > 0, |beta| < alpha");
    } else {
      detail::require_domain(delta > 0.0 && std::fabs(beta) <= alpha, "GH(lambda < 0): need delta > 0, |beta| <= alpha");
    }
  }
};

struct VarianceGammaParams {
  double lambda = 1.0;
  double alpha = 1.0;
  double beta = 0.0;
  double mu = 0.0;
  void validate() const {
    detail::require_domain(std::isfinite(mu) && std::isfinite(lambda) && std::isfinite(alpha),
                           "VG: parameters must be finite");
    detail::require_domain(lambda > 0.0 && alpha > 0.0 && std::fabs(beta) < alpha,
                           "VG: need lambda > 0, alpha > 0, |beta| < alpha");
  }
};

struct NigParams {
  double alpha = 1.0;
  double beta = 0.0;
  double delta = 1.0;
  double mu = 0.0;
  void validate() const {
    detail::require_domain(std::isfinite(alpha) && std::isfinite(delta) && std::isfinite(mu),
                           "NIG: parameters must be finite");
    detail::require_domain(alpha > 0.0 && delta > 0.0 && std::fabs(beta) <= alpha,
                           "NIG: need alpha > 0, delta > 0, |beta| <= alpha");
  }
};

struct MeixnerParams {
  double alpha = 1.0;
  double beta = 0.0;
  double mu = 0.0;
  double delta = 1.0;
  void validate() const {
    detail::require_domain(std::isfinite(alpha) && std::isfinite(delta) && std::isfinite(mu),
                           "Meixner: parameters must be finite");
    detail::require_domain(alpha > 0.0 && delta > 0.0 && beta > -std::numbers::pi && beta < std::numbers::pi,
                           "Meixner: need alpha > 0, delta > 0, -pi < beta < pi");
  }
};

struct StudentComponent {
  double mu = 0.0;
  double sigma = 1.0;
  double nu = 4.0;
  bool fixed_dof = true;
};

/// m-component Student's t mixture. `weights` holds p_1..p_{m-1}; the last
/// component receives 1 - sum(weights).
struct StudentMixtureParams {
  std::vector<StudentComponent> components;
  std::vector<double> weights;

  std::size_t size() const { return components.size(); }

  std::vector<double> all_weights() const {
    std::vector<double> w(weights);
    const double rest = 1.0 - std::accumulate(weights.begin(), weights.end(), 0.0);
    w.push_back(std::max(rest, 0.0));
    return w;
  }

  std::vector<double> dofs() const {
    std::vector<double> d;
    for (const auto& c : components) d.push_back(c.nu);
    return d;
  }

  void validate() const {
    detail::require_domain(!components.empty(), "mixture: need at least one component");
    detail::require_domain(weights.size() + 1 == components.size(), "mixture: need m-1 weights for m components");
    for (const auto& c : components) {
      detail::require_domain(std::isfinite(c.mu) && c.sigma > 0.0 && std::isfinite(c.sigma) && c.nu > 0.0 &&
                                 std::isfinite(c.nu),
                             "mixture: each component needs sigma > 0, nu > 0");
    }
    double sum = 0.0;
    for (double p : weights) {
      detail::require_domain(p >= 0.0 && p <= 1.0, "mixture: weights must lie in [0, 1]");
      sum += p;
    }
    detail::require_domain(sum <= 1.0 + 1e-12, "mixture: weights must sum to at most 1");
  }
};

using Params = std::variant<NormalParams, StudentParams, NigParams, VarianceGammaParams, GhParams, MeixnerParams,
                            StudentMixtureParams>;

/// A family tag together with a matching, validated parameter set.
class ModelSpec {
 public:
  ModelSpec(Family family, Params params) : family_(family), params_(std::move(params)) { validate(); }

  static ModelSpec normal(double mu, double sigma) { return {Family::Normal, NormalParams{mu, sigma}}; }
  static ModelSpec student(double nu, double mu, double sigma) {
    return {Family::Student, StudentParams{nu, mu, sigma}};
  }
  static ModelSpec nig(double alpha, double beta, double delta, double mu) {
    return {Family::NIG, NigParams{alpha, beta, delta, mu}};
  }
  static ModelSpec variance_gamma(double lambda, double alpha, double beta, double mu) {
    return {Family::VarianceGamma, VarianceGammaParams{lambda, alpha, beta, mu}};
  }
  static ModelSpec gh(double lambda, double alpha, double beta, double delta, double mu) {
    return {Family::GH, GhParams{lambda, alpha, beta, delta, mu}};
  }
  static ModelSpec meixner(double alpha, double beta, double mu, double delta) {
    return {Family::Meixner, MeixnerParams{alpha, beta, mu, delta}};
  }
  /// Mixture with the family inferred from the dofs (canonical when they match).
  static ModelSpec mixture(StudentMixtureParams p) {
    const auto d = p.dofs();
    Family f = Family::MixtureGeneral;
    for (Family c : {Family::Mix2St12, Family::Mix2St39, Family::Mix3St}) {
      if (d == canonical_dofs(c) && std::all_of(p.components.begin(), p.components.end(),
                                                [](const StudentComponent& s) { return s.fixed_dof; })) {
        f = c;
      }
    }
    return {f, std::move(p)};
  }

  Family family() const { return family_; }
  const Params& params() const { return params_; }

  template <typename T>
  const T& as() const {
    const T* p = std::get_if<T>(&params_);
    if (p == nullptr) throw DomainError("ModelSpec: parameter type does not match family");
    return *p;
  }

 private:
  void validate() const {
    bool ok = false;
    switch (family_) {
      case Family::Normal: ok = std::holds_alternative<NormalParams>(params_); break;
      case Family::Student: ok = std::holds_alternative<StudentParams>(params_); break;
      case Family::NIG: ok = std::holds_alternative<NigParams>(params_); break;
      case Family::VarianceGamma: ok = std::holds_alternative<VarianceGammaParams>(params_); break;
      case Family::GH: ok = std::holds_alternative<GhParams>(params_); break;
      case Family::Meixner: ok = std::holds_alternative<MeixnerParams>(params_); break;
      case Family::Mix2St12:
      case Family::Mix2St39:
      case Family::Mix3St:
      case Family::MixtureGeneral: ok = std::holds_alternative<StudentMixtureParams>(params_); break;
    }
    detail::require_domain(ok, "ModelSpec: family '" + std::string(family_name(family_)) +
                                   "' does not match its parameter type");
    std::visit([](const auto& p) { p.validate(); }, params_);
    if (is_mixture(family_) && family_ != Family::MixtureGeneral) {
      const auto& m = std::get<StudentMixtureParams>(params_);
      detail::require_domain(m.dofs() == canonical_dofs(family_),
                             "ModelSpec: " + std::string(family_name(family_)) + " requires dofs in canonical order");
    }
  }

  Family family_;
  Params params_;
};

/// Number of free parameters k of a model.
inline int parameter_count(const ModelSpec& spec) {
  switch (spec.family()) {
    case Family::Normal: return 2;
    case Family::Student: return 3;
    case Family::NIG:
    case Family::VarianceGamma:
    case Family::Meixner: return 4;
    case Family::GH: return 5;
    default: break;
  }
  const auto& m = spec.as<StudentMixtureParams>();
  int k = static_cast<int>(m.size()) - 1;
  for (const auto& c : m.components) k += c.fixed_dof ? 2 : 3;
  return k;
}

// ---------------------------------------------------------------------------
// Log-densities

namespace detail {

struct NormalKernel {
  double mu, sigma, c;
  explicit NormalKernel(const NormalParams& p)
      : mu(p.mu), sigma(p.sigma), c(-kHalfLog2Pi - std::log(p.sigma)) {}
  double operator()(double x) const {
    const double z = (x - mu) / sigma;
    return c - 0.5 * z * z;
  }
};

struct StudentKernel {
  double mu, sigma, nu, c, h;
  explicit StudentKernel(const StudentParams& p)
      : mu(p.mu),
        sigma(p.sigma),
        nu(p.nu),
        c(log_gamma(0.5 * (p.nu + 1.0)) - log_gamma(0.5 * p.nu) - 0.5 * std::log(std::numbers::pi * p.nu) -
          std::log(p.sigma)),
        h(0.5 * (p.nu + 1.0)) {}
  double operator()(double x) const {
    const double z = (x - mu) / sigma;
    return c - h * std::log1p(z * z / nu);
  }
};

struct VgKernel {
  double lambda, alpha, beta, mu, c, at_mu;
  explicit VgKernel(const VarianceGammaParams& p)
      : lambda(p.lambda), alpha(p.alpha), beta(p.beta), mu(p.mu) {
    const double gamma2 = (p.alpha - p.beta) * (p.alpha + p.beta);
    c = p.lambda * std::log(gamma2) - 0.5 * std::log(std::numbers::pi) - log_gamma(p.lambda) -
        (p.lambda - 0.5) * std::log(2.0 * p.alpha);
    const double order = p.lambda - 0.5;
    at_mu = order > 0.0 ? c + log_gamma(order) + (order - 1.0) * std::numbers::ln2 - order * std::log(p.alpha)
                        : std::numeric_limits<double>::infinity();
  }
  double operator()(double x) const {
    const double y = x - mu;
    const double ay = std::fabs(y);
    if (ay == 0.0) return at_mu;
    return c + (lambda - 0.5) * std::log(ay) + log_bessel_k(lambda - 0.5, alpha * ay) + beta * y;
  }
};

struct NigKernel {
  double alpha, beta, delta, mu, c;
  explicit NigKernel(const NigParams& p) : alpha(p.alpha), beta(p.beta), delta(p.delta), mu(p.mu) {
    const double gamma = std::sqrt(std::max((p.alpha - p.beta) * (p.alpha + p.beta), 0.0));
    c = std::log(p.alpha) + std::log(p.delta) - std::log(std::numbers::pi) + p.delta * gamma;
  }
  double operator()(double x) const {
    const double y = x - mu;
    const double r = std::hypot(delta, y);
    return c - std::log(r) + log_bessel_k(1.0, alpha * r) + beta * y;
  }
};

struct GhKernel {
  double lambda, alpha, beta, delta, mu, c;
  explicit GhKernel(const GhParams& p) : lambda(p.lambda), alpha(p.alpha), beta(p.beta), delta(p.delta), mu(p.mu) {
    const double gamma2 = std::max((p.alpha - p.beta) * (p.alpha + p.beta), 0.0);
    c = -kHalfLog2Pi - (p.lambda - 0.5) * std::log(p.alpha) - p.lambda * std::log(p.delta);
    if (gamma2 > 0.0) {
      c += 0.5 * p.lambda * std::log(gamma2) - log_bessel_k(p.lambda, p.delta * std::sqrt(gamma2));
    } else {
      // |beta| = alpha with lambda < 0: gamma^lambda / K_lambda(delta gamma) has a finite limit
      c += -log_gamma(-p.lambda) + (p.lambda + 1.0) * std::numbers::ln2 - p.lambda * std::log(p.delta);
    }
  }
  double operator()(double x) const {
    const double y = x - mu;
    const double r = std::hypot(delta, y);
    return c + (lambda - 0.5) * std::log(r) + log_bessel_k(lambda - 0.5, alpha * r) + beta * y;
  }
};

struct MeixnerKernel {
  double alpha, beta, mu, delta, c;
  explicit MeixnerKernel(const MeixnerParams& p) : alpha(p.alpha), beta(p.beta), mu(p.mu), delta(p.delta) {
    c = 2.0 * p.delta * std::log(2.0 * std::cos(0.5 * p.beta)) - std::log(2.0 * p.alpha * std::numbers::pi) -
        log_gamma(2.0 * p.delta);
  }
  double operator()(double x) const {
    const double y = (x - mu) / alpha;
    return c + beta * y + 2.0 * log_abs_gamma_complex(delta, y);
  }
};

struct MixtureKernel {
  std::vector<StudentKernel> parts;
  std::vector<double> log_weights;
  explicit MixtureKernel(const StudentMixtureParams& p) {
    const auto w = p.all_weights();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const auto& comp = p.components[j];
      parts.emplace_back(StudentParams{comp.nu, comp.mu, comp.sigma});
      log_weights.push_back(w[j] > 0.0 ? std::log(w[j]) : -std::numeric_limits<double>::infinity());
    }
  }
  double operator()(double x) const {
    double top = -std::numeric_limits<double>::infinity();
    std::array<double, 8> small{};
    std::vector<double> big;
    double* terms = small.data();
    if (parts.size() > small.size()) {
      big.resize(parts.size());
      terms = big.data();
    }
    for (std::size_t j = 0; j < parts.size(); ++j) {
      terms[j] = log_weights[j] + parts[j](x);
      top = std::max(top, terms[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < parts.size(); ++j) sum += std::exp(terms[j] - top);
    return top + std::log(sum);
  }
};

using Kernel =
    std::variant<NormalKernel, StudentKernel, VgKernel, NigKernel, GhKernel, MeixnerKernel, MixtureKernel>;

inline Kernel make_kernel(const ModelSpec& spec) {
  return std::visit(
      [](const auto& p) -> Kernel {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalParams>) {
          return NormalKernel(p);
        } else if constexpr (std::is_same_v<T, StudentParams>) {
          return StudentKernel(p);
        } else if constexpr (std::is_same_v<T, VarianceGammaParams>) {
          return VgKernel(p);
        } else if constexpr (std::is_same_v<T, NigParams>) {
          return NigKernel(p);
        } else if constexpr (std::is_same_v<T, GhParams>) {
          if (p.alpha == 0.0) {
            // alpha = beta = 0: Student's t with nu = -2 lambda, sigma = delta / sqrt(nu)
            const double nu = -2.0 * p.lambda;
            return StudentKernel(StudentParams{nu, p.mu, p.delta / std::sqrt(nu)});
          }
          if (p.delta == 0.0) return VgKernel(VarianceGammaParams{p.lambda, p.alpha, p.beta, p.mu});
          return GhKernel(p);
        } else if constexpr (std::is_same_v<T, MeixnerParams>) {
          return MeixnerKernel(p);
        } else {
          return MixtureKernel(p);
        }
      },
      spec.params());
}

}  // namespace detail

/// Reusable log-density evaluator; normalizing constants are computed once.
class LogDensity {
 public:
  explicit LogDensity(const ModelSpec& spec) : kernel_(detail::make_kernel(spec)) {}
  double operator()(double x) const {
    return std::visit([x](const auto& k) { return k(x); }, kernel_);
  }

 private:
  detail::Kernel kernel_;
};

inline double log_density(const ModelSpec& spec, double x) { return LogDensity(spec)(x); }

inline double log_likelihood(const ModelSpec& spec, std::span<const double> data) {
  const LogDensity f(spec);
  double sum = 0.0;
  for (double x : data) sum += f(x);
  return sum;
}

// ---------------------------------------------------------------------------
// Location and scale proxies (used for quadrature and root bracketing)

inline double location_proxy(const ModelSpec& spec) {
  return std::visit(
      [](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, StudentMixtureParams>) {
          const auto w = p.all_weights();
          double m = 0.0;
          for (std::size_t j = 0; j < p.size(); ++j) m += w[j] * p.components[j].mu;
          return m;
        } else {
          return p.mu;
        }
      },
      spec.params());
}

inline double scale_proxy(const ModelSpec& spec) {
  auto gh_scale = [](double lambda, double alpha, double beta, double delta) {
    const double gamma2 = std::max((alpha - beta) * (alpha + beta), 0.0);
    double mean_w = 0.0;
    if (alpha == 0.0 || gamma2 == 0.0) {
      mean_w = lambda < -1.0 ? delta * delta / (2.0 * (-lambda - 1.0)) : delta * delta;
    } else if (delta == 0.0) {
      mean_w = 2.0 * lambda / gamma2;
    } else {
      const double g = std::sqrt(gamma2);
      mean_w = delta / g * std::exp(log_bessel_k(lambda + 1.0, delta * g) - log_bessel_k(lambda, delta * g));
    }
    return std::sqrt(mean_w) + std::fabs(beta) * mean_w;
  };
  const double s = std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalParams> || std::is_same_v<T, StudentParams>) {
          return p.sigma;
        } else if constexpr (std::is_same_v<T, GhParams>) {
          return gh_scale(p.lambda, p.alpha, p.beta, p.delta);
        } else if constexpr (std::is_same_v<T, NigParams>) {
          return gh_scale(-0.5, p.alpha, p.beta, p.delta);
        } else if constexpr (std::is_same_v<T, VarianceGammaParams>) {
          return gh_scale(p.lambda, p.alpha, p.beta, 0.0);
        } else if constexpr (std::is_same_v<T, MeixnerParams>) {
          return p.alpha * std::sqrt(p.delta) / (std::numbers::sqrt2 * std::cos(0.5 * p.beta));
        } else {
          double m = 0.0;
          for (const auto& c : p.components) m = std::max(m, c.sigma);
          return m;
        }
      },
      spec.params());
  return std::isfinite(s) && s > 0.0 ? s : 1.0;
}

// ---------------------------------------------------------------------------
// CDF

namespace detail {

inline double student_cdf(double nu, double mu, double sigma, double x) {
  const double t = (x - mu) / sigma;
  if (t == 0.0) return 0.5;
  const double t2 = t * t;
  // lower tail mass P(T < -|t|) = I_{nu/(nu+t^2)}(nu/2, 1/2) / 2
  double tail = 0.0;
  if (t2 < nu) {
    tail = 0.5 * (1.0 - regularized_incomplete_beta(0.5, 0.5 * nu, t2 / (nu + t2)));
  } else {
    tail = 0.5 * regularized_incomplete_beta(0.5 * nu, 0.5, nu / (nu + t2));
  }
  return t < 0.0 ? tail : 1.0 - tail;
}

inline bool has_closed_form_cdf(const ModelSpec& spec) {
  switch (spec.family()) {
    case Family::Normal:
    case Family::Student:
    case Family::Mix2St12:
    case Family::Mix2St39:
    case Family::Mix3St:
    case Family::MixtureGeneral: return true;
    case Family::GH: return spec.as<GhParams>().alpha == 0.0;
    default: return false;
  }
}

inline double closed_form_cdf(const ModelSpec& spec, double x) {
  return std::visit(
      [x](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalParams>) {
          return normal_cdf((x - p.mu) / p.sigma);
        } else if constexpr (std::is_same_v<T, StudentParams>) {
          return student_cdf(p.nu, p.mu, p.sigma, x);
        } else if constexpr (std::is_same_v<T, StudentMixtureParams>) {
          const auto w = p.all_weights();
          double f = 0.0;
          for (std::size_t j = 0; j < p.size(); ++j) {
            if (w[j] > 0.0) f += w[j] * student_cdf(p.components[j].nu, p.components[j].mu, p.components[j].sigma, x);
          }
          return std::clamp(f, 0.0, 1.0);
        } else if constexpr (std::is_same_v<T, GhParams>) {
          const double nu = -2.0 * p.lambda;
          return student_cdf(nu, p.mu, p.delta / std::sqrt(nu), x);
        } else {
          throw DomainError("closed_form_cdf: no closed form for this family");
        }
      },
      spec.params());
}

inline constexpr QuadratureOptions kCdfQuadrature{1e-15, 1e-12, 4000};

}  // namespace detail

/// F(x) for the model. Families without a closed form are integrated from
/// the nearer infinite end, split at the location parameter.
inline double cdf(const ModelSpec& spec, double x) {
  if (std::isnan(x)) throw DomainError("cdf: NaN argument");
  if (x == -std::numeric_limits<double>::infinity()) return 0.0;
  if (x == std::numeric_limits<double>::infinity()) return 1.0;
  if (detail::has_closed_form_cdf(spec)) return detail::closed_form_cdf(spec, x);
  const LogDensity logf(spec);
  auto f = [&](double t) { return std::exp(logf(t)); };
  const double loc = location_proxy(spec);
  const double s = scale_proxy(spec);
  if (x <= loc) {
    return std::clamp(integrate_lower(f, x, s, detail::kCdfQuadrature).value, 0.0, 1.0);
  }
  return std::clamp(1.0 - integrate_upper(f, x, s, detail::kCdfQuadrature).value, 0.0, 1.0);
}

/// F at every point of an ascending sample. Quadrature families integrate
/// between consecutive points instead of restarting from the tails.
inline std::vector<double> cdf_sorted(const ModelSpec& spec, std::span<const double> sorted) {
  std::vector<double> out(sorted.size());
  if (sorted.empty()) return out;
  if (!std::is_sorted(sorted.begin(), sorted.end())) throw DomainError("cdf_sorted: input must be ascending");
  if (detail::has_closed_form_cdf(spec)) {
    for (std::size_t i = 0; i < sorted.size(); ++i) out[i] = detail::closed_form_cdf(spec, sorted[i]);
    return out;
  }
  const LogDensity logf(spec);
  auto f = [&](double t) { return std::exp(logf(t)); };
  const double loc = location_proxy(spec);
  const double s = scale_proxy(spec);
  const auto split = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), loc) - sorted.begin());
  if (split > 0) {
    double acc = integrate_lower(f, sorted[0], s, detail::kCdfQuadrature).value;
    out[0] = acc;
    for (std::size_t i = 1; i < split; ++i) {
      if (sorted[i] != sorted[i - 1]) acc += integrate(f, sorted[i - 1], sorted[i], detail::kCdfQuadrature).value;
      out[i] = acc;
    }
  }
  if (split < sorted.size()) {
    const std::size_t last = sorted.size() - 1;
    double acc = integrate_upper(f, sorted[last], s, detail::kCdfQuadrature).value;
    out[last] = 1.0 - acc;
    for (std::size_t i = last; i-- > split;) {
      if (sorted[i] != sorted[i + 1]) acc += integrate(f, sorted[i], sorted[i + 1], detail::kCdfQuadrature).value;
      out[i] = 1.0 - acc;
    }
  }
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

/// x with |F(x) - p| <= 1e-9, by bracket expansion and root search.
inline double quantile(const ModelSpec& spec, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: p must lie in (0, 1)");
  const double loc = location_proxy(spec);
  const double s = scale_proxy(spec);
  auto g = [&](double x) { return cdf(spec, x) - p; };
  double half = 50.0 * s;
  double lo = loc - half;
  double hi = loc + half;
  double glo = g(lo);
  double ghi = g(hi);
  for (int i = 0; i < 2000 && glo > 0.0; ++i) {
    hi = lo;
    ghi = glo;
    half *= 2.0;
    lo = loc - half;
    glo = g(lo);
  }
  for (int i = 0; i < 2000 && ghi < 0.0; ++i) {
    lo = hi;
    glo = ghi;
    half *= 2.0;
    hi = loc + half;
    ghi = g(hi);
  }
  return bracketed_root(g, lo, hi, glo, ghi, 1e-11);
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

// Rejection envelope for the Meixner density: a Cauchy centred at the mean
// with the Meixner standard deviation as scale.
struct MeixnerEnvelope {
  double center;
  double scale;
  double log_bound;  // max over x of log f(x) - log g(x), padded

  static double log_cauchy(double z, double scale) {
    return -std::log(std::numbers::pi * scale) - std::log1p(z * z);
  }

  explicit MeixnerEnvelope(const MeixnerParams& p) {
    const MeixnerKernel f(p);
    center = p.mu + p.alpha * p.delta * std::tan(0.5 * p.beta);
    scale = p.alpha * std::sqrt(p.delta) / (std::numbers::sqrt2 * std::cos(0.5 * p.beta));
    auto log_ratio = [&](double x) {
      const double z = (x - center) / scale;
      return f(x) - log_cauchy(z, scale);
    };
    const double reach = std::max(80.0, 4.0 * (2.0 * p.delta + 1.0) / std::sqrt(2.0 * p.delta));
    constexpr int kGrid = 8001;
    double best_x = center;
    double best = log_ratio(center);
    for (int i = 0; i < kGrid; ++i) {
      const double x = center + scale * reach * (2.0 * i / (kGrid - 1) - 1.0);
      const double v = log_ratio(x);
      if (v > best) {
        best = v;
        best_x = x;
      }
    }
    const double cell = 2.0 * scale * reach / (kGrid - 1);
    const auto opt = golden_section_maximize(log_ratio, best_x - cell, best_x + cell, cell * 1e-8);
    log_bound = std::max(best, opt.value) + 0.02;
  }

  double draw(RandomEngine& rng, const MeixnerKernel& f) const {
    for (;;) {
      const double z = std::tan(std::numbers::pi * (rng.uniform() - 0.5));
      const double x = center + scale * z;
      const double log_accept = f(x) - log_cauchy(z, scale) - log_bound;
      if (std::log(rng.uniform()) <= log_accept) return x;
    }
  }
};

inline double draw_student(RandomEngine& rng, double nu, double mu, double sigma) {
  const double z = rng.normal();
  return mu + sigma * z / std::sqrt(rng.chi_square(nu) / nu);
}

// normal mean-variance mixture X = mu + beta W + sqrt(W) Z, W ~ GIG(lambda, delta^2, gamma^2)
inline double draw_gh(RandomEngine& rng, double lambda, double alpha, double beta, double delta, double mu) {
  const double gamma2 = std::max((alpha - beta) * (alpha + beta), 0.0);
  const double w = sample_gig(rng, lambda, delta * delta, gamma2);
  return mu + beta * w + std::sqrt(w) * rng.normal();
}

}  // namespace detail

/// n i.i.d. draws; the same (spec, n, seed) always yields the same draws.
inline std::vector<double> sample(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample: n must be at least 1");
  RandomEngine rng(seed);
  std::vector<double> out;
  out.reserve(n);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalParams>) {
          for (std::size_t i = 0; i < n; ++i) out.push_back(p.mu + p.sigma * rng.normal());
        } else if constexpr (std::is_same_v<T, StudentParams>) {
          for (std::size_t i = 0; i < n; ++i) out.push_back(detail::draw_student(rng, p.nu, p.mu, p.sigma));
        } else if constexpr (std::is_same_v<T, GhParams>) {
          if (p.alpha == 0.0) {
            const double nu = -2.0 * p.lambda;
            for (std::size_t i = 0; i < n; ++i) {
              out.push_back(detail::draw_student(rng, nu, p.mu, p.delta / std::sqrt(nu)));
            }
          } else {
            for (std::size_t i = 0; i < n; ++i) {
              out.push_back(detail::draw_gh(rng, p.lambda, p.alpha, p.beta, p.delta, p.mu));
            }
          }
        } else if constexpr (std::is_same_v<T, NigParams>) {
          for (std::size_t i = 0; i < n; ++i) out.push_back(detail::draw_gh(rng, -0.5, p.alpha, p.beta, p.delta, p.mu));
        } else if constexpr (std::is_same_v<T, VarianceGammaParams>) {
          const double gamma2 = (p.alpha - p.beta) * (p.alpha + p.beta);
          for (std::size_t i = 0; i < n; ++i) {
            const double w = rng.gamma(p.lambda) * 2.0 / gamma2;
            out.push_back(p.mu + p.beta * w + std::sqrt(w) * rng.normal());
          }
        } else if constexpr (std::is_same_v<T, MeixnerParams>) {
          const detail::MeixnerKernel f(p);
          const detail::MeixnerEnvelope env(p);
          for (std::size_t i = 0; i < n; ++i) out.push_back(env.draw(rng, f));
        } else {
          const auto w = p.all_weights();
          std::vector<double> cumulative(w.size());
          std::partial_sum(w.begin(), w.end(), cumulative.begin());
          for (std::size_t i = 0; i < n; ++i) {
            const auto& c = p.components[rng.categorical(cumulative)];
            out.push_back(detail::draw_student(rng, c.nu, c.mu, c.sigma));
          }
        }
      },
      spec.params());
  return out;
}

// ---------------------------------------------------------------------------
// Structural relations within the GH family

/// NIG(alpha, beta, delta, mu) = GH(-1/2, alpha, beta, delta, mu).
inline GhParams nig_as_gh(const NigParams& p) {
  p.validate();
  return {-0.5, p.alpha, p.beta, p.delta, p.mu};
}

/// Point on the GH path lambda = -nu/2, alpha = eps, beta = 0, delta = sigma sqrt(nu),
/// which tends to Student's t as eps -> 0.
inline GhParams gh_student_path(const StudentParams& p, double eps) {
  p.validate();
  detail::require_domain(eps > 0.0, "gh_student_path: eps must be positive");
  return {-0.5 * p.nu, eps, 0.0, p.sigma * std::sqrt(p.nu), p.mu};
}

inline std::vector<GhParams> gh_limit_student(double nu, double mu, double sigma, std::span<const double> eps) {
  std::vector<GhParams> out;
  for (double e : eps) out.push_back(gh_student_path(StudentParams{nu, mu, sigma}, e));
  return out;
}

/// GH(lambda, alpha, beta, delta, mu), which tends to VG(lambda, alpha, beta, mu) as delta -> 0.
inline GhParams gh_variance_gamma_path(const VarianceGammaParams& p, double delta) {
  p.validate();
  detail::require_domain(delta > 0.0, "gh_variance_gamma_path: delta must be positive");
  return {p.lambda, p.alpha, p.beta, delta, p.mu};
}

/// GH(lambda, delta / sigma^2, 0, delta, mu), which tends to N(mu, sigma^2) as delta -> infinity.
inline GhParams gh_normal_path(const NormalParams& p, double delta, double lambda = 1.0) {
  p.validate();
  detail::require_domain(delta > 0.0, "gh_normal_path: delta must be positive");
  return {lambda, delta / (p.sigma * p.sigma), 0.0, delta, p.mu};
}

}  // namespace heavytail
