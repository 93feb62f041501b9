#pragma once

// Mixture diagnostics (posterior probabilities, ablations, rescaled
// residues), QQ data, descriptive statistics and the model comparison table.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "heavytail/distributions.hpp"
#include "heavytail/errors.hpp"
#include "heavytail/estimation.hpp"
#include "heavytail/gof.hpp"
#include "heavytail/ingestion.hpp"

namespace heavytail {

// ---------------------------------------------------------------------------
// Posterior component probabilities

struct PosteriorTrace {
  std::vector<double> x;
  std::vector<std::array<double, 3>> tau;
};

inline const StudentMixtureParams& require_three_components(const ModelSpec& spec, const char* who) {
  const auto* p = std::get_if<StudentMixtureParams>(&spec.params());
  if (p == nullptr || p->size() != 3) throw DomainError(std::string(who) + ": need a 3-component Student's t mixture");
  return *p;
}

/// tau_j(x) = p_j f_j(x) / f(x), evaluated in log space.
inline PosteriorTrace posterior_probabilities(const ModelSpec& spec, std::span<const double> xs) {
  const auto& m = require_three_components(spec, "posterior_probabilities");
  const auto w = m.all_weights();
  std::array<LogDensity, 3> comp = {
      LogDensity(ModelSpec::student(m.components[0].nu, m.components[0].mu, m.components[0].sigma)),
      LogDensity(ModelSpec::student(m.components[1].nu, m.components[1].mu, m.components[1].sigma)),
      LogDensity(ModelSpec::student(m.components[2].nu, m.components[2].mu, m.components[2].sigma))};
  PosteriorTrace out;
  out.x.assign(xs.begin(), xs.end());
  for (double x : xs) {
    std::array<double, 3> l{};
    double top = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < 3; ++j) {
      l[j] = w[j] > 0.0 ? std::log(w[j]) + comp[j](x) : -std::numeric_limits<double>::infinity();
      top = std::max(top, l[j]);
    }
    double sum = 0.0;
    for (auto& v : l) {
      v = std::exp(v - top);
      sum += v;
    }
    for (auto& v : l) v /= sum;
    out.tau.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

/// Removes the components with the listed dofs and renormalizes the remaining
/// weights; retained components are not re-estimated.
inline ModelSpec ablate_mixture(const ModelSpec& spec, const std::set<double>& drop) {
  const auto& m = require_three_components(spec, "ablate_mixture");
  for (double d : drop) {
    detail::require_domain(d == 4.0 || d == 12.0, "ablate_mixture: only the dof-4 and dof-12 components can be dropped");
    const bool present = std::any_of(m.components.begin(), m.components.end(),
                                     [&](const StudentComponent& c) { return c.nu == d; });
    detail::require_domain(present, "ablate_mixture: no component with the requested dof");
  }
  if (drop.empty()) return spec;
  const auto w = m.all_weights();
  StudentMixtureParams out;
  std::vector<double> kept;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (drop.count(m.components[j].nu) != 0) continue;
    out.components.push_back(m.components[j]);
    kept.push_back(w[j]);
  }
  const double mass = std::accumulate(kept.begin(), kept.end(), 0.0);
  if (!(mass > 0.0)) throw DomainError("ablate_mixture: the retained components carry no weight");
  for (std::size_t j = 0; j + 1 < kept.size(); ++j) out.weights.push_back(kept[j] / mass);
  return ModelSpec::mixture(std::move(out));
}

inline ModelSpec ablate_mixture(const ModelSpec& spec, std::initializer_list<double> drop) {
  return ablate_mixture(spec, std::set<double>(drop));
}

// ---------------------------------------------------------------------------
// Residues

/// a = max|res| / 40.
inline double rescale_constant(std::span<const double> res) {
  double m = 0.0;
  for (double r : res) m = std::max(m, std::fabs(r));
  return m / 40.0;
}

/// arctan(res / a) / pi, elementwise.
inline std::vector<double> rescale_residues(std::span<const double> res, double a) {
  detail::require_domain(a > 0.0 && std::isfinite(a), "rescale_residues: a must be positive");
  std::vector<double> out;
  out.reserve(res.size());
  for (double r : res) out.push_back(std::atan(r / a) / std::numbers::pi);
  return out;
}

inline constexpr std::array<std::string_view, 3> kResidueVariants = {"3St", "3Stm4", "3Stm4m12"};

struct ResidueAnalysis {
  std::vector<double> bin_edges;
  std::vector<double> empirical_freq;
  std::array<std::vector<double>, 3> model_freq;  // 3St, 3Stm4, 3Stm4m12
  std::array<std::vector<double>, 3> res;
  double a = 0.0;
  std::array<std::vector<double>, 3> rescaled;
};

/// Equal-width bins over [min, max] of the data; residues of the full mixture
/// and its two ablations.
inline ResidueAnalysis residue_analysis(std::span<const double> data, const ModelSpec& spec3st, int bins = 500) {
  require_three_components(spec3st, "residue_analysis");
  detail::require_domain(bins >= 10, "residue_analysis: need at least 10 bins");
  detail::require_domain(!data.empty(), "residue_analysis: empty data");
  const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw DomainError("residue_analysis: data range is degenerate (min = max)");
  ResidueAnalysis ra;
  const auto nb = static_cast<std::size_t>(bins);
  ra.bin_edges.resize(nb + 1);
  const double width = (hi - lo) / bins;
  for (std::size_t i = 0; i <= nb; ++i) ra.bin_edges[i] = lo + width * static_cast<double>(i);
  ra.bin_edges[nb] = hi;
  ra.empirical_freq.assign(nb, 0.0);
  for (double x : data) {
    auto j = static_cast<std::size_t>(std::upper_bound(ra.bin_edges.begin(), ra.bin_edges.end(), x) -
                                      ra.bin_edges.begin());
    j = j == 0 ? 0 : std::min(j - 1, nb - 1);
    ra.empirical_freq[j] += 1.0;
  }
  const double n = static_cast<double>(data.size());
  for (auto& f : ra.empirical_freq) f /= n;

  const std::array<ModelSpec, 3> variants = {spec3st, ablate_mixture(spec3st, {4.0}),
                                             ablate_mixture(spec3st, {4.0, 12.0})};
  for (std::size_t v = 0; v < 3; ++v) {
    const auto f = cdf_sorted(variants[v], ra.bin_edges);
    ra.model_freq[v].resize(nb);
    ra.res[v].resize(nb);
    for (std::size_t i = 0; i < nb; ++i) {
      ra.model_freq[v][i] = std::max(f[i + 1] - f[i], 0.0);
      ra.res[v][i] = ra.empirical_freq[i] - ra.model_freq[v][i];
    }
  }
  ra.a = rescale_constant(ra.res[2]);
  if (!(ra.a > 0.0)) throw DomainError("residue_analysis: residues of 3Stm4m12 are all zero");
  for (std::size_t v = 0; v < 3; ++v) ra.rescaled[v] = rescale_residues(ra.res[v], ra.a);
  return ra;
}

// ---------------------------------------------------------------------------
// QQ data

struct QqData {
  std::vector<double> probs;
  std::vector<double> empirical_q;
  std::vector<double> model_q;
};

inline QqData qq_data(std::span<const double> data, const ModelSpec& spec) {
  detail::require_domain(data.size() >= 2, "qq_data: need at least 2 observations");
  QqData q;
  q.empirical_q.assign(data.begin(), data.end());
  std::sort(q.empirical_q.begin(), q.empirical_q.end());
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double p = (static_cast<double>(i) + 0.5) / n;
    q.probs.push_back(p);
    q.model_q.push_back(quantile(spec, p));
  }
  // root-search noise must not break the ordering
  for (std::size_t i = 1; i < q.model_q.size(); ++i) q.model_q[i] = std::max(q.model_q[i], q.model_q[i - 1]);
  return q;
}

// ---------------------------------------------------------------------------
// Descriptive statistics

struct DescriptiveStats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;                  // n - 1 denominator
  std::optional<double> skewness;   // m3 / m2^(3/2); empty for constant data
  std::optional<double> kurtosis;   // m4 / m2^2, raw; empty for constant data
  double min = 0.0;
  double max = 0.0;
};

inline DescriptiveStats descriptive_stats(std::span<const double> data) {
  detail::require_domain(data.size() >= 2, "descriptive_stats: need at least 2 observations");
  DescriptiveStats s;
  s.n = data.size();
  const double n = static_cast<double>(s.n);
  s.mean = detail::mean_of(data);
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (double x : data) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  s.sd = std::sqrt(m2 / (n - 1.0));
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2);
  }
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

// ---------------------------------------------------------------------------
// Model comparison

enum class Criterion { KS, AD, AIC, BIC };
inline constexpr std::array<Criterion, 4> kCriteria = {Criterion::KS, Criterion::AD, Criterion::AIC, Criterion::BIC};

inline std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::KS: return "KS";
    case Criterion::AD: return "AD";
    case Criterion::AIC: return "AIC";
    case Criterion::BIC: return "BIC";
  }
  return "?";
}

inline double criterion_value(const GofReport& g, Criterion c) {
  switch (c) {
    case Criterion::KS: return g.ks;
    case Criterion::AD: return g.ad;
    case Criterion::AIC: return g.aic;
    case Criterion::BIC: return g.bic;
  }
  return 0.0;
}

struct ComparisonCell {
  std::optional<FitResult> fit;
  std::optional<GofReport> gof;
  std::string error;  // empty on success
};

struct ComparisonTable {
  std::vector<std::string> series;
  std::vector<Family> families;
  std::vector<std::vector<ComparisonCell>> rows;  // [series][family]
  // winners[series][criterion] = family column, or nullopt when every cell of the row failed
  std::vector<std::array<std::optional<std::size_t>, 4>> winners;
  std::vector<std::string> row_errors;  // nonempty when the whole row failed
  std::array<std::vector<int>, 4> tally;  // [criterion][family column]
};

namespace detail {

inline int family_rank(Family f) {
  for (std::size_t i = 0; i < kStandardFamilies.size(); ++i) {
    if (kStandardFamilies[i] == f) return static_cast<int>(i);
  }
  return static_cast<int>(kStandardFamilies.size());
}

// splitmix64 finalizer, used to derive per-cell seeds
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic seed of the (series, family) cell.
inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t series_index, Family family) {
  return detail::mix_seed(detail::mix_seed(seed ^ (static_cast<std::uint64_t>(series_index) << 8)) +
                          static_cast<std::uint64_t>(detail::family_rank(family)));
}

/// Fits every family to every series and picks per-criterion winners. Cells
/// run on `jobs` threads; the result does not depend on the schedule.
inline ComparisonTable compare_models(const std::vector<ReturnSeries>& series_set, const std::vector<Family>& families,
                                      const FitConfig& config, int jobs = 1) {
  detail::require_domain(!series_set.empty(), "compare_models: no series");
  detail::require_domain(!families.empty(), "compare_models: no families");
  ComparisonTable t;
  for (const auto& s : series_set) t.series.push_back(s.label);
  t.families = families;
  const std::size_t ns = series_set.size();
  const std::size_t nf = families.size();
  t.rows.assign(ns, std::vector<ComparisonCell>(nf));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t cell = next++; cell < ns * nf; cell = next++) {
      const std::size_t i = cell / nf;
      const std::size_t j = cell % nf;
      auto& out = t.rows[i][j];
      FitConfig cfg = config;
      cfg.seed = cell_seed(config.seed, i, families[j]);
      cfg.keep_trace = false;
      try {
        auto f = fit(families[j], series_set[i].returns, cfg);
        out.gof = gof_report(series_set[i].returns, f);
        out.fit = std::move(f);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(ns * nf)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (auto& col : t.tally) col.assign(nf, 0);
  t.winners.resize(ns);
  t.row_errors.assign(ns, "");
  for (std::size_t i = 0; i < ns; ++i) {
    bool any = false;
    for (std::size_t c = 0; c < kCriteria.size(); ++c) {
      std::optional<std::size_t> best;
      for (std::size_t j = 0; j < nf; ++j) {
        const auto& g = t.rows[i][j].gof;
        if (!g) continue;
        const double v = criterion_value(*g, kCriteria[c]);
        if (!std::isfinite(v)) continue;
        if (!best) {
          best = j;
          continue;
        }
        const double bv = criterion_value(*t.rows[i][*best].gof, kCriteria[c]);
        if (v < bv || (v == bv && detail::family_rank(families[j]) < detail::family_rank(families[*best]))) best = j;
      }
      t.winners[i][c] = best;
      if (best) {
        ++t.tally[c][*best];
        any = true;
      }
    }
    if (!any) {
      std::string msg = "every fit failed for series '" + t.series[i] + "'";
      for (std::size_t j = 0; j < nf; ++j) {
        msg += "; " + std::string(family_name(families[j])) + ": " + t.rows[i][j].error;
      }
      t.row_errors[i] = msg;
    }
  }
  return t;
}

}  // namespace heavytail
