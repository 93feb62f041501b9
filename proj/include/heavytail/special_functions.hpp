#pragma once

// Real and complex gamma-family functions, the modified Bessel function of
// the second kind, and the regularized incomplete beta/gamma functions.
// Everything is computed so that a log-scale value is available; the
// densities built on top of this header never leave log space.

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include "heavytail/errors.hpp"

namespace heavytail {

namespace detail {

// Lanczos approximation, g = 607/128, 15 terms (Godfrey).
inline constexpr double kLanczosG = 607.0 / 128.0;
inline constexpr std::array<double, 15> kLanczosCoef = {
    0.99999999999999709182,     57.156235665862923517,     -59.597960355475491248,
    14.136097974741747174,      -0.49191381609762019978,   .33994649984811888699e-4,
    .46523628927048575665e-4,   -.98374475304879564677e-4, .15808870322491248884e-3,
    -.21026444172410488319e-3,  .21743961811521264320e-3,  -.16431810653676389022e-3,
    .84418223983852743293e-4,   -.26190838401581408670e-4, .36899182659531622704e-5};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Taylor coefficients of 1/Gamma(z) about 0: 1/Gamma(z) = sum_k c_k z^k.
inline constexpr std::array<double, 31> kRecipGammaTaylor = {
    0.0,
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
    -2.2987456844353702066e-19,
    1.7144063219273374334e-20};

template <typename T>
T lanczos_log_gamma(T z) {
  // z - 1 convention: Gamma(z) = sqrt(2 pi) t^(z - 1/2) e^-t A(z), t = z - 1/2 + g
  T series = T(kLanczosCoef[0]);
  for (std::size_t k = 1; k < kLanczosCoef.size(); ++k) {
    series += kLanczosCoef[k] / (z - 1.0 + static_cast<double>(k));
  }
  const T t = z - 0.5 + kLanczosG;
  return kHalfLog2Pi + (z - 0.5) * std::log(t) - t + std::log(series);
}

// Gamma1(mu) = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu), Gamma2 = (... + ...) / 2,
// plus 1/Gamma(1+mu) and 1/Gamma(1-mu), for |mu| <= 1/2.
struct TemmeGammas {
  double gam1;
  double gam2;
  double gampl;
  double gammi;
};

inline TemmeGammas temme_gammas(double mu) {
  double even = 0.0;  // sum_{k even} c_k mu^(k-2)
  double odd = 0.0;   // sum_{k odd}  c_k mu^(k-1)
  for (std::size_t k = kRecipGammaTaylor.size() - 1; k >= 1; --k) {
    if (k % 2 == 0) {
      even = even * mu * mu + kRecipGammaTaylor[k];
    } else {
      odd = odd * mu * mu + kRecipGammaTaylor[k];
    }
  }
  TemmeGammas g{};
  g.gam1 = -even;
  g.gam2 = odd;
  g.gampl = odd + mu * even;  // 1/Gamma(1+mu) = sum_k c_k mu^(k-1)
  g.gammi = odd - mu * even;
  return g;
}

}  // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0) || std::isinf(x)) {
    throw DomainError("log_gamma: argument must be positive and finite");
  }
  if (x < 0.5) return detail::lanczos_log_gamma(x + 1.0) - std::log(x);
  return detail::lanczos_log_gamma(x);
}

/// ln |Gamma(re + i im)| for re > 0.
inline double log_abs_gamma_complex(double re, double im) {
  if (!(re > 0.0) || !std::isfinite(im) || std::isinf(re)) {
    throw DomainError("log_abs_gamma_complex: real part must be positive");
  }
  if (im == 0.0) return log_gamma(re);
  std::complex<double> z(re, im);
  double shift = 0.0;
  if (re < 0.5) {
    shift = std::log(std::abs(z));
    z += 1.0;
  }
  return detail::lanczos_log_gamma(z).real() - shift;
}

/// Digamma of a complex argument with positive real part.
inline std::complex<double> digamma(std::complex<double> z) {
  if (!(z.real() > 0.0)) throw DomainError("digamma: real part must be positive");
  std::complex<double> acc(0.0, 0.0);
  while (z.real() < 10.0) {
    acc -= 1.0 / z;
    z += 1.0;
  }
  const std::complex<double> inv2 = 1.0 / (z * z);
  // B_2k / (2k), k = 1..7
  constexpr std::array<double, 7> b = {1.0 / 12.0,  -1.0 / 120.0,     1.0 / 252.0, -1.0 / 240.0,
                                       1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0};
  std::complex<double> tail(0.0, 0.0);
  for (std::size_t k = b.size(); k-- > 0;) tail = (tail + b[k]) * inv2;
  return acc + std::log(z) - 0.5 / z - tail;
}

inline double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
  return digamma(std::complex<double>(x, 0.0)).real();
}

/// ln K_nu(x), the log of the modified Bessel function of the second kind.
/// Never overflows or underflows; valid for any real order and x > 0.
inline double log_bessel_k(double nu, double x) {
  if (!(x > 0.0) || std::isinf(x)) throw DomainError("log_bessel_k: x must be positive and finite");
  if (!std::isfinite(nu)) throw DomainError("log_bessel_k: order must be finite");
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 100000;
  constexpr double pi = std::numbers::pi;

  const double anu = std::fabs(nu);
  const int nl = static_cast<int>(std::floor(anu + 0.5));
  const double mu = anu - nl;  // in [-1/2, 1/2)
  const double mu2 = mu * mu;

  double log_kmu = 0.0;  // ln K_mu(x)
  double ratio = 0.0;    // K_{mu+1}(x) / K_mu(x)

  if (x <= 2.0) {
    // Temme's series
    const double x2 = 0.5 * x;
    const double pimu = pi * mu;
    const double fact = std::fabs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::fabs(e) < kEps ? 1.0 : std::sinh(e) / e;
    const auto g = detail::temme_gammas(mu);
    double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / g.gampl;
    double q = 0.5 / (e * g.gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    for (int i = 1; i <= kMaxIter; ++i) {
      const double di = i;
      ff = (di * ff + p + q) / (di * di - mu2);
      c *= d / di;
      p /= di - mu;
      q /= di + mu;
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - di * ff);
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    log_kmu = std::log(sum);
    ratio = sum1 * (2.0 / x) / sum;
  } else {
    // Steed's continued fraction (CF2), exponentially scaled
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 2; i <= kMaxIter; ++i) {
      a -= 2.0 * (i - 1);
      c = -a * c / i;
      const double qnew = (q1 - b * q2) / a;
      q1 = q2;
      q2 = qnew;
      q += c * qnew;
      b += 2.0;
      d = 1.0 / (b + a * d);
      delh = (b * d - 1.0) * delh;
      h += delh;
      const double dels = q * delh;
      s += dels;
      if (std::fabs(dels / s) < kEps) break;
    }
    h = a1 * h;
    log_kmu = 0.5 * std::log(pi / (2.0 * x)) - x - std::log(s);
    ratio = (mu + x + 0.5 - h) / x;
  }

  // Upward recurrence K_{v+1} = K_{v-1} + (2v/x) K_v, carried as ratios.
  double log_k = log_kmu;
  double prod = 1.0;
  for (int k = 1; k <= nl; ++k) {
    prod *= ratio;
    if (prod > 1e250 || prod < 1e-250) {
      log_k += std::log(prod);
      prod = 1.0;
    }
    ratio = 1.0 / ratio + 2.0 * (mu + k) / x;
  }
  return log_k + std::log(prod);
}

/// K_nu(x); underflows to 0 for very large x (use log_bessel_k there).
inline double bessel_k(double nu, double x) { return std::exp(log_bessel_k(nu, x)); }

namespace detail {

// Modified Lentz continued fraction for the incomplete beta function.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// I_x(a, b), the regularized incomplete beta function.
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw DomainError("regularized_incomplete_beta: need a > 0, b > 0, 0 <= x <= 1");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Q(a, x) = Gamma(a, x) / Gamma(a), the regularized upper incomplete gamma function.
inline double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw DomainError("regularized_gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  const double log_front = -x + a * std::log(x) - log_gamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < kMaxIter; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return 1.0 - sum * std::exp(log_front);
  }
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::exp(log_front) * h;
}

/// Upper tail probability of the chi-square distribution.
inline double chi_square_survival(double statistic, double dof) {
  if (!(dof > 0.0)) throw DomainError("chi_square_survival: dof must be positive");
  if (statistic <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * dof, 0.5 * statistic);
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

}  // namespace heavytail
