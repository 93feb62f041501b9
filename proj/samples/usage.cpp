// Library walk-through: draw from a three-component Student's t mixture,
// fit a few families, compare them, and run the mixture diagnostics.

#include <cstdio>

#include "heavytail/heavytail.hpp"

namespace ht = heavytail;

int main() {
  ht::StudentMixtureParams truth;
  truth.components = {{-0.002, 0.02, 4.0, true}, {0.0, 0.01, 12.0, true}, {0.001, 0.005, 39.0, true}};
  truth.weights = {0.2, 0.3};
  const auto model = ht::ModelSpec::mixture(truth);
  const auto x = ht::sample(model, 20000, 42);

  const auto s = ht::descriptive_stats(x);
  std::printf("n=%zu mean=%.6f sd=%.6f kurtosis=%.2f\n", s.n, s.mean, s.sd, s.kurtosis.value_or(0.0));

  ht::FitConfig cfg;
  cfg.seed = 7;
  for (auto f : {ht::Family::Normal, ht::Family::Student, ht::Family::NIG, ht::Family::Mix3St}) {
    const auto fit = ht::fit(f, x, cfg);
    const auto g = ht::gof_report(x, fit);
    std::printf("%-4s loglik=%.2f AIC=%.2f BIC=%.2f KS=%.4f AD=%.3f\n", std::string(ht::family_name(f)).c_str(),
                fit.loglik, g.aic, g.bic, g.ks, g.ad);
  }

  const auto fit3 = ht::fit(ht::Family::Mix3St, x, cfg);
  std::printf("3St fit: %s\n", ht::to_json(fit3.spec).dump().c_str());

  const int est[3] = {8, 5, 2};
  const std::array<ht::ModelSpec, 3> variants = {fit3.spec, ht::ablate_mixture(fit3.spec, {4.0}),
                                                 ht::ablate_mixture(fit3.spec, {4.0, 12.0})};
  for (std::size_t v = 0; v < 3; ++v) {
    const auto c = ht::chi_square_test(x, variants[v], 500, est[v]);
    std::printf("%-9s chi2=%.1f dof=%d p=%.4f %s\n", std::string(ht::kResidueVariants[v]).c_str(), c.statistic, c.dof,
                c.p_value, c.rejected_at_5pct ? "rejected" : "not rejected");
  }

  const auto post = ht::posterior_probabilities(fit3.spec, std::vector<double>{-0.1, 0.0, 0.1});
  for (std::size_t i = 0; i < post.x.size(); ++i) {
    std::printf("x=%+.2f tau=(%.3f, %.3f, %.3f)\n", post.x[i], post.tau[i][0], post.tau[i][1], post.tau[i][2]);
  }
  return 0;
}
