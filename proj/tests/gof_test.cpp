#include <gtest/gtest.h>

#include <random>

#include "heavytail/analysis.hpp"
#include "heavytail/estimation.hpp"
#include "heavytail/gof.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace ht = heavytail;
using testing_support::canonical_3st;

namespace {

std::vector<double> model_quantiles(const ht::ModelSpec& spec, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = ht::quantile(spec, (static_cast<double>(i) + 0.5) / static_cast<double>(n));
  return x;
}

std::vector<double> sorted_cdf(const ht::ModelSpec& spec, std::vector<double> x) {
  std::sort(x.begin(), x.end());
  return ht::cdf_sorted(spec, x);
}

}  // namespace

TEST(EmpiricalCdf, StepFunction) {
  const std::vector<double> x{3.0, 1.0, 2.0, 2.0};
  const ht::EmpiricalCdf F(x);
  EXPECT_EQ(F.size(), 4u);
  EXPECT_EQ(F(0.5), 0.0);
  EXPECT_EQ(F(1.0), 0.25);
  EXPECT_EQ(F(2.0), 0.75);
  EXPECT_EQ(F(10.0), 1.0);
  EXPECT_TRUE(std::is_sorted(F.sorted().begin(), F.sorted().end()));
}

TEST(Ks, SinglePointAtMedian) {
  const std::vector<double> x{0.0};
  EXPECT_NEAR(ht::ks_statistic(ht::EmpiricalCdf(x), ht::ModelSpec::normal(0, 1)), 0.5, 1e-15);
}

TEST(Ks, ModelQuantilesGiveHalfStep) {
  const auto spec = ht::ModelSpec::student(4, 0.1, 2.0);
  const std::size_t n = 400;
  const auto x = model_quantiles(spec, n);
  EXPECT_NEAR(ht::ks_statistic(ht::EmpiricalCdf(x), spec), 1.0 / (2.0 * n), 1e-9);
}

TEST(Ks, ThreePointsMatchEnumeration) {
  const std::vector<double> x{-1.0, 0.0, 1.0};
  const auto spec = ht::ModelSpec::normal(0, 1);
  const double expected = oracle::ks_enumerate(sorted_cdf(spec, x));
  EXPECT_NEAR(ht::ks_statistic(ht::EmpiricalCdf(x), spec), expected, 1e-15);
  EXPECT_NEAR(expected, 1.0 / 3.0 - static_cast<double>(oracle::normal_cdf(-1.0L)), 1e-15);
}

TEST(Ks, RandomSamplesMatchEnumerationAndStayInRange) {
  std::mt19937_64 rng(51);
  for (auto f : ht::kStandardFamilies) {
    const auto spec = testing_support::random_spec(f, rng);
    const auto x = ht::sample(spec, 300, 52);
    const auto other = testing_support::random_spec(f, rng);
    for (const auto& m : {spec, other}) {
      const double ks = ht::ks_statistic(ht::EmpiricalCdf(x), m);
      EXPECT_NEAR(ks, oracle::ks_enumerate(sorted_cdf(m, x)), 1e-15);
      EXPECT_GE(ks, 0.0);
      EXPECT_LE(ks, 1.0);
    }
  }
}

TEST(Ad, SinglePointAtMedian) {
  const std::vector<double> x{0.0};
  EXPECT_NEAR(ht::ad_statistic(ht::EmpiricalCdf(x), ht::ModelSpec::normal(0, 1)), -1.0 + 2.0 * std::log(2.0), 1e-14);
}

TEST(Ad, MatchesIntegralFormOnModelSample) {
  const auto spec = ht::ModelSpec::nig(2.0, 0.5, 1.0, 0.0);
  const auto x = ht::sample(spec, 200, 53);
  const auto u = sorted_cdf(spec, x);
  EXPECT_NEAR(ht::ad_statistic(u), oracle::ad_integral(u), 1e-6);
}

TEST(Ad, MatchesIntegralFormOnMisfitSamples) {
  // misfit pairs: a model sample pushed through a random affine map
  std::mt19937_64 rng(54);
  auto u01 = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  for (int i = 0; i < 20; ++i) {
    const auto f = ht::kStandardFamilies[static_cast<std::size_t>(i) % ht::kStandardFamilies.size()];
    const auto model = testing_support::random_spec(f, rng);
    const std::size_t n = 20 + static_cast<std::size_t>(i) * 24;
    auto x = ht::sample(model, n, static_cast<std::uint64_t>(i));
    const double shift = u01(-1.0, 1.0) * ht::scale_proxy(model);
    const double stretch = u01(0.5, 2.0);
    const double c = ht::location_proxy(model);
    for (auto& v : x) v = c + shift + stretch * (v - c);
    const auto u = sorted_cdf(model, x);
    const double ad = ht::ad_statistic(u);
    EXPECT_NEAR(ad, oracle::ad_integral(u), 1e-6 * std::max(1.0, ad)) << i;
  }
}

TEST(Ad, GrowsAsModelMovesAway) {
  const auto x = ht::sample(ht::ModelSpec::normal(0, 1), 500, 55);
  const ht::EmpiricalCdf F(x);
  double prev = ht::ad_statistic(F, ht::ModelSpec::normal(0, 1));
  for (double shift = 0.1; shift <= 1.0; shift += 0.1) {
    const double ad = ht::ad_statistic(F, ht::ModelSpec::normal(shift, 1));
    EXPECT_GT(ad, prev);
    prev = ad;
  }
}

TEST(InformationCriteria, Arithmetic) {
  EXPECT_EQ(ht::aic(0.0, 2), 4.0);
  EXPECT_EQ(ht::aic(100.0, 5), -190.0);
  EXPECT_EQ(ht::aic(-12852.5, 8), 25721.0);
  EXPECT_NEAR(ht::bic(0.0, 3, 100), 13.815510557964274, 1e-12);
  EXPECT_EQ(ht::bic(0.0, 4, 1), 0.0);
  EXPECT_THROW(ht::aic(0.0, 0), ht::DomainError);
  for (int k = 1; k < 10; ++k) {
    for (std::size_t n : {10u, 1000u, 123456u}) {
      EXPECT_NEAR(ht::bic(-321.5, k, n) - ht::aic(-321.5, k), k * (std::log(static_cast<double>(n)) - 2.0), 1e-9);
    }
  }
}

TEST(ChiSquare, PerfectFit) {
  const auto spec = canonical_3st();
  const auto x = model_quantiles(spec, 5000);
  const auto r = ht::chi_square_test(x, spec, 500, 8);
  EXPECT_NEAR(r.statistic, 0.0, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  EXPECT_EQ(r.bins_used, 500);
  EXPECT_EQ(r.dof, 491);
  EXPECT_FALSE(r.rejected_at_5pct);
}

TEST(ChiSquare, MergesSparseBins) {
  const auto spec = ht::ModelSpec::normal(0, 1);
  const auto x = ht::sample(spec, 1000, 56);
  const auto r = ht::chi_square_test(x, spec, 500, 2);
  // expected 2 per bin, so bins merge in threes (6 each) with the remainder in the last
  EXPECT_EQ(r.bins_used, 166);
  EXPECT_EQ(r.dof, 163);
}

TEST(ChiSquare, DegreesOfFreedomError) {
  const auto spec = ht::ModelSpec::normal(0, 1);
  const auto x = ht::sample(spec, 30, 57);
  EXPECT_THROW(ht::chi_square_test(x, spec, 10, 8), ht::DegreesOfFreedomError);
  EXPECT_THROW(ht::chi_square_test(x, spec, 2, 0), ht::DomainError);
}

TEST(ChiSquare, AblationOnThreeComponentDraws) {
  // fit 3St to each 20k sample, then test the fit and its nu = 39 component alone
  int kept = 0;
  int rejected_39 = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto x = ht::sample(canonical_3st(), 20000, static_cast<std::uint64_t>(1000 + seed));
    ht::FitConfig c;
    c.seed = static_cast<std::uint64_t>(seed);
    c.keep_trace = false;
    const auto fit = ht::fit_student_mixture_em(x, {4, 12, 39}, c);
    if (!ht::chi_square_test(x, fit.spec, 500, 8).rejected_at_5pct) ++kept;
    const auto only39 = ht::ablate_mixture(fit.spec, {4.0, 12.0});
    if (ht::chi_square_test(x, only39, 500, 2).rejected_at_5pct) ++rejected_39;
  }
  EXPECT_GE(kept, 90);
  EXPECT_GE(rejected_39, 90);
}

TEST(GofReport, IdentitiesAndConsistency) {
  const auto x = ht::sample(ht::ModelSpec::student(4, 0, 0.01), 2000, 58);
  const auto fit = ht::fit_student_ecme(x);
  const auto g = ht::gof_report(x, fit);
  EXPECT_NEAR(g.bic - g.aic, fit.k * (std::log(static_cast<double>(x.size())) - 2.0), 1e-8);
  EXPECT_GE(g.ks, 0.0);
  EXPECT_LE(g.ks, 1.0);
  EXPECT_EQ(g.loglik, fit.loglik);
  const std::vector<double> shorter(x.begin(), x.end() - 1);
  EXPECT_THROW(ht::gof_report(shorter, fit), ht::ConsistencyError);
}

TEST(GofReport, NormalLosesToStudentOnHeavyTails) {
  int wins = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto x = ht::sample(ht::ModelSpec::student(4, 0, 1), 5000, static_cast<std::uint64_t>(seed));
    const auto gn = ht::gof_report(x, ht::fit_normal(x));
    const auto gs = ht::gof_report(x, ht::fit_student_ecme(x));
    if (gn.aic > gs.aic) ++wins;
  }
  EXPECT_GE(wins, 95);
}
