// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "heavytail/heavytail.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace ht = heavytail;
namespace fs = std::filesystem;
using testing_support::canonical_3st;

namespace {

const std::string kCli = HEAVYTAIL_CLI_PATH;
const std::string kFixtures = HEAVYTAIL_FIXTURES;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Result {
  int id = 0;
  std::string title;
  Outcome outcome;
  double seconds = 0.0;
};

// log-likelihood traces of every EM/ECME fit run by the other criteria
std::vector<std::vector<double>> g_traces;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ht::Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return ht::Json::parse(in);
}

// 1
Outcome special_functions() {
  std::mt19937_64 rng(101);
  auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const int n = 250;
  int bad_lg = 0;
  int bad_cg = 0;
  int bad_k = 0;
  int bad_ib = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::exp(u(std::log(1e-3), std::log(1e6)));
    const double e = static_cast<double>(oracle::log_gamma(x));
    if (!(std::fabs(ht::log_gamma(x) - e) <= std::max(1e-12, 1e-15 * std::fabs(e)))) ++bad_lg;
  }
  for (int i = 0; i < n; ++i) {
    const double re = std::exp(u(std::log(1e-2), std::log(1e3)));
    const double im = (u(0, 1) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, u(-3.0, 4.0));
    const double e = static_cast<double>(oracle::log_abs_gamma_complex(re, im));
    if (!(std::fabs(ht::log_abs_gamma_complex(re, im) - e) <= 1e-10 * std::max(1.0, std::fabs(e)))) ++bad_cg;
  }
  for (int i = 0; i < n; ++i) {
    const double x = std::exp(u(std::log(1e-6), std::log(700.0)));
    const double v = u(-100.0, 100.0);
    const double e = static_cast<double>(oracle::log_bessel_k(v, x));
    if (!(std::fabs(ht::log_bessel_k(v, x) - e) <= 1e-10 * std::max(1.0, std::fabs(e)))) ++bad_k;
  }
  for (int i = 0; i < n; ++i) {
    const double a = std::exp(u(std::log(0.1), std::log(60.0)));
    const double b = std::exp(u(std::log(0.1), std::log(60.0)));
    const double x = u(0.0, 1.0);
    const double e = static_cast<double>(oracle::incomplete_beta(a, b, x));
    if (!(std::fabs(ht::regularized_incomplete_beta(a, b, x) - e) <= 1e-12)) ++bad_ib;
  }
  const bool ok = bad_lg + bad_cg + bad_k + bad_ib == 0;
  return {ok, std::to_string(n) + " points each; mismatches log_gamma=" + std::to_string(bad_lg) +
                  " log_abs_gamma_complex=" + std::to_string(bad_cg) + " bessel_k=" + std::to_string(bad_k) +
                  " incomplete_beta=" + std::to_string(bad_ib)};
}

// 2
Outcome normalization() {
  double worst = 0.0;
  std::string where;
  for (auto f : ht::kStandardFamilies) {
    std::mt19937_64 rng(200 + static_cast<int>(f));
    for (int i = 0; i < 50; ++i) {
      const auto spec = testing_support::random_spec(f, rng);
      const double err = std::fabs(testing_support::oracle_mass(spec) - 1.0);
      if (!(err <= worst)) {
        worst = err;
        where = std::string(ht::family_name(f));
      }
    }
  }
  return {worst <= 1e-6, "9 families x 50 sets; max |mass - 1| = " + fmt("%.3g", worst) + " (" + where + ")"};
}

// 3
Outcome structure() {
  std::mt19937_64 rng(301);
  auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  double worst = 0.0;
  for (int s = 0; s < 10; ++s) {
    const double a = u(0.5, 50.0);
    const ht::NigParams p{a, a * u(-0.9, 0.9), u(0.01, 3.0), u(-1.0, 1.0)};
    const ht::ModelSpec nig(ht::Family::NIG, p);
    const ht::ModelSpec gh(ht::Family::GH, ht::nig_as_gh(p));
    const double c = ht::location_proxy(nig);
    const double w = ht::scale_proxy(nig);
    for (int i = 0; i <= 1000; ++i) {
      const double x = c + w * (-20.0 + 40.0 * i / 1000.0);
      worst = std::max(worst, std::fabs(ht::log_density(nig, x) - ht::log_density(gh, x)));
    }
  }
  int breaks = 0;
  const ht::StudentParams st{4.0, 0.1, 0.5};
  const auto st_target = ht::ModelSpec::student(st.nu, st.mu, st.sigma);
  for (double x : {st.mu, st.mu + 2.0 * st.sigma, st.mu + 5.0 * st.sigma}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double eps = 1e-1; eps > 1e-6; eps *= 0.5) {
      const double d = std::fabs(ht::log_density(ht::ModelSpec(ht::Family::GH, ht::gh_student_path(st, eps)), x) -
                                 ht::log_density(st_target, x));
      if (!(d < prev)) ++breaks;
      prev = d;
    }
  }
  const ht::VarianceGammaParams vg{1.7, 3.0, -0.8, 0.2};
  const auto vg_target = ht::ModelSpec::variance_gamma(vg.lambda, vg.alpha, vg.beta, vg.mu);
  for (double x : {-2.0, -0.5, 0.1, 0.6, 3.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double delta = 0.0625; delta > 1e-6; delta *= 0.5) {
      const double d =
          std::fabs(ht::log_density(ht::ModelSpec(ht::Family::GH, ht::gh_variance_gamma_path(vg, delta)), x) -
                    ht::log_density(vg_target, x));
      if (!(d < prev)) ++breaks;
      prev = d;
    }
  }
  return {worst <= 1e-10 && breaks == 0, "NIG vs GH(-1/2) max |diff| = " + fmt("%.3g", worst) +
                                             " on 10 x 1001 points; monotonicity breaks on GH->St/VG paths = " +
                                             std::to_string(breaks)};
}

// 4
Outcome ad_equivalence() {
  std::mt19937_64 rng(401);
  auto u01 = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  double worst = 0.0;
  int bad = 0;
  for (int i = 0; i < 20; ++i) {
    const auto f = ht::kStandardFamilies[static_cast<std::size_t>(i) % ht::kStandardFamilies.size()];
    const auto model = testing_support::random_spec(f, rng);
    const std::size_t n = 25 + static_cast<std::size_t>(i) * 25;
    auto x = ht::sample(model, n, static_cast<std::uint64_t>(400 + i));
    const double shift = u01(-1.0, 1.0) * ht::scale_proxy(model);
    const double stretch = u01(0.5, 2.0);
    const double c = ht::location_proxy(model);
    for (auto& v : x) v = c + shift + stretch * (v - c);
    std::sort(x.begin(), x.end());
    const auto cdf = ht::cdf_sorted(model, x);
    const double ad = ht::ad_statistic(cdf);
    const double err = std::fabs(ad - oracle::ad_integral(cdf)) / std::max(1.0, ad);
    worst = std::max(worst, err);
    if (!(err <= 1e-6)) ++bad;
  }
  return {bad == 0, "20 pairs, n <= 500; max scaled |diff| = " + fmt("%.3g", worst)};
}

ht::FitConfig traced(std::uint64_t seed) {
  ht::FitConfig c;
  c.seed = seed;
  c.keep_trace = true;
  return c;
}

// 6
Outcome round_trip() {
  const std::array<double, 3> tw{0.2, 0.3, 0.5};
  const std::array<double, 3> ts{0.02, 0.01, 0.005};
  int good = 0;
  for (int s = 0; s < 100; ++s) {
    const auto x = ht::sample(canonical_3st(), 100000, static_cast<std::uint64_t>(600 + s));
    const auto r = ht::fit_student_mixture_em(x, {4, 12, 39}, traced(static_cast<std::uint64_t>(s)));
    g_traces.push_back(r.trace);
    const auto& m = r.spec.as<ht::StudentMixtureParams>();
    const auto w = m.all_weights();
    bool ok = true;
    for (std::size_t j = 0; j < 3; ++j) {
      ok = ok && std::fabs(w[j] - tw[j]) <= 0.03 && std::fabs(m.components[j].sigma / ts[j] - 1.0) <= 0.10;
    }
    if (ok) ++good;
  }
  return {good >= 90, std::to_string(good) + "/100 seeds within tolerance"};
}

// 7
Outcome model_selection() {
  int wins = 0;
  for (int s = 0; s < 100; ++s) {
    const auto x = ht::sample(ht::ModelSpec::student(4, 0, 1), 5000, static_cast<std::uint64_t>(700 + s));
    const auto st = ht::fit_student_ecme(x, traced(static_cast<std::uint64_t>(s)));
    g_traces.push_back(st.trace);
    if (ht::gof_report(x, st).aic < ht::gof_report(x, ht::fit_normal(x)).aic) ++wins;
  }
  return {wins >= 95, "AIC(St) < AIC(N) in " + std::to_string(wins) + "/100 samples"};
}

// 8
Outcome ablation() {
  int kept = 0;
  int rejected = 0;
  for (int s = 0; s < 100; ++s) {
    const auto x = ht::sample(canonical_3st(), 20000, static_cast<std::uint64_t>(800 + s));
    const auto fit = ht::fit_student_mixture_em(x, {4, 12, 39}, traced(static_cast<std::uint64_t>(s)));
    g_traces.push_back(fit.trace);
    if (!ht::chi_square_test(x, fit.spec, 500, 8).rejected_at_5pct) ++kept;
    if (ht::chi_square_test(x, ht::ablate_mixture(fit.spec, {4.0, 12.0}), 500, 2).rejected_at_5pct) ++rejected;
  }
  return {kept >= 90 && rejected >= 90,
          "3St not rejected " + std::to_string(kept) + "/100; 3Stm4m12 rejected " + std::to_string(rejected) + "/100"};
}

// 5
Outcome monotonicity() {
  std::size_t violations = 0;
  std::size_t steps = 0;
  for (const auto& t : g_traces) {
    for (std::size_t i = 1; i < t.size(); ++i) {
      ++steps;
      if (t[i] < t[i - 1] - 1e-8) ++violations;
    }
  }
  const bool ok = g_traces.size() >= 100 && violations == 0;
  return {ok, std::to_string(g_traces.size()) + " fits, " + std::to_string(steps) + " steps, " +
                  std::to_string(violations) + " violations"};
}

// 9
Outcome posterior_pattern() {
  std::vector<double> xs;
  for (double x = 0.05; x <= 1.0 + 1e-12; x += 0.0005) {
    xs.push_back(x);
    xs.push_back(-x);
  }
  for (double x : {2.0, 5.0, 10.0, 100.0}) {
    xs.push_back(x);
    xs.push_back(-x);
  }
  const auto post = ht::posterior_probabilities(canonical_3st(), xs);
  int bad = 0;
  for (const auto& t : post.tau) {
    if (!(t[0] > std::max(t[1], t[2]))) ++bad;
  }
  const auto c = ht::posterior_probabilities(canonical_3st(), std::vector<double>{0.0}).tau[0];
  const bool centre = c[2] > std::max(c[0], c[1]);
  return {bad == 0 && centre, std::to_string(xs.size()) + " tail points, " + std::to_string(bad) +
                                  " where tau1 is not largest; tau at 0 = (" + fmt("%.3f", c[0]) + ", " +
                                  fmt("%.3f", c[1]) + ", " + fmt("%.3f", c[2]) + ")"};
}

bool residue_contract(const ht::ResidueAnalysis& ra) {
  double m = 0.0;
  for (double r : ra.res[2]) m = std::max(m, std::fabs(r));
  bool ok = ra.a == m / 40.0;
  for (const auto& v : ra.rescaled) {
    for (double r : v) ok = ok && r > -0.5 && r < 0.5;
  }
  return ok;
}

// 10
Outcome residues(const fs::path& work) {
  int runs = 0;
  int bad = 0;
  for (int s = 0; s < 20; ++s) {
    const auto x = ht::sample(canonical_3st(), 20000, static_cast<std::uint64_t>(1000 + s));
    ++runs;
    if (!residue_contract(ht::residue_analysis(x, canonical_3st(), 500))) ++bad;
  }
  // CLI run on the fixture, checked against the independent golden file
  const auto out = work / "diagnose.json";
  const int code = shell(kCli + " diagnose --input " + kFixtures + "/diag_returns.csv --params " + kFixtures +
                         "/diag_3st.json > " + out.string());
  if (code != 0) return {false, "diagnose exited with " + std::to_string(code)};
  const auto j = read_json(out);
  const auto& res = j.at("residues");
  const auto golden = read_json(kFixtures + "/residues_golden.json");
  double m = 0.0;
  for (const auto& v : res.at("variants").at("3Stm4m12").at("res")) m = std::max(m, std::fabs(v.get<double>()));
  ++runs;
  bool cli_ok = res.at("a").get<double>() == m / 40.0;
  double worst = 0.0;
  for (std::size_t v = 0; v < 3; ++v) {
    const auto name = std::string(ht::kResidueVariants[v]);
    const auto& got = res.at("variants").at(name).at("rescaled");
    const auto& want = golden.at("rescaled")[v];
    if (got.size() != want.size()) return {false, "golden size mismatch for " + name};
    for (std::size_t i = 0; i < got.size(); ++i) {
      const double g = got[i].get<double>();
      cli_ok = cli_ok && g > -0.5 && g < 0.5;
      worst = std::max(worst, std::fabs(g - want[i].get<double>()));
    }
  }
  if (!cli_ok) ++bad;
  const double da = std::fabs(res.at("a").get<double>() - golden.at("a").get<double>());
  const bool golden_ok = worst <= 1e-8 && da <= 1e-12;
  return {bad == 0 && golden_ok, std::to_string(runs - bad) + "/" + std::to_string(runs) +
                                     " runs meet the contract; golden max |diff| = " + fmt("%.3g", worst) +
                                     ", |a - a_golden| = " + fmt("%.3g", da)};
}

// one simulate -> fit -> compare pass; returns the files it wrote
std::vector<fs::path> pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> corpus{{"st4", "St"}, {"nig", "NIG"}, {"mix3", "3St"}};
  std::vector<fs::path> files;
  std::string inputs;
  for (const auto& [name, family] : corpus) {
    const auto sim = dir / (name + ".csv");
    const auto fit = dir / (name + "_fit.json");
    if (shell(kCli + " simulate --params " + kFixtures + "/pipeline/" + name + ".json --n 2000 --seed 11 --out " +
              sim.string()) != 0) {
      throw std::runtime_error("simulate failed for " + name);
    }
    if (shell(kCli + " fit --input " + sim.string() + " --family " + family + " --seed 12 --out " + fit.string()) != 0) {
      throw std::runtime_error("fit failed for " + name);
    }
    files.push_back(sim);
    files.push_back(fit);
    inputs += " " + sim.string();
  }
  const auto cmp = dir / "compare";
  if (shell(kCli + " compare --input" + inputs + " --seed 13 --jobs 1 --out " + cmp.string()) != 0) {
    throw std::runtime_error("compare failed");
  }
  files.push_back(cmp / "comparison.json");
  return files;
}

// 11
Outcome determinism(const fs::path& work) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto a = pipeline(work / "run1");
  const double first = std::chrono::duration<double>(clock::now() - t0).count();
  const auto b = pipeline(work / "run2");
  int diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = slurp(a[i]);
    if (x.empty() || x != slurp(b[i])) ++diff;
  }
  return {diff == 0 && first < 180.0, std::to_string(a.size()) + " outputs, " + std::to_string(diff) +
                                          " differ; one pipeline took " + fmt("%.1f", first) + " s"};
}

}  // namespace

int main() {
  const auto work = fs::temp_directory_path() / ("heavytail_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  struct Item {
    int id;
    std::string title;
    double limit_s;  // <= 0 means no runtime bound
    std::function<Outcome()> run;
  };
  // 5 runs after 6-8 because it audits their fits
  const std::vector<Item> items{
      {1, "special-function oracle suite", 30, special_functions},
      {2, "density normalization", 120, normalization},
      {3, "structural identities", 60, structure},
      {4, "AD formula equivalence", 120, ad_equivalence},
      {6, "3St round trip", 300, round_trip},
      {7, "model-selection sanity", 0, model_selection},
      {8, "chi-square ablation", 600, ablation},
      {5, "EM/ECME monotonicity", 0, monotonicity},
      {9, "posterior tail pattern", 1, posterior_pattern},
      {10, "rescaled-residue contract", 0, [&] { return residues(work); }},
      {11, "end-to-end determinism", 0, [&] { return determinism(work); }},
  };

  std::vector<Result> results;
  for (const auto& item : items) {
    std::cerr << "running criterion " << item.id << " (" << item.title << ")...\n";
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = item.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (item.limit_s > 0 && secs >= item.limit_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", item.limit_s) + " s budget";
    }
    results.push_back({item.id, item.title, o, secs});
  }
  std::sort(results.begin(), results.end(), [](const Result& a, const Result& b) { return a.id < b.id; });

  int failed = 0;
  for (const auto& r : results) {
    if (!r.outcome.pass) ++failed;
    std::printf("%s criterion %2d %-30s %8.1f s  %s\n", r.outcome.pass ? "PASS" : "FAIL", r.id, r.title.c_str(),
                r.seconds, r.outcome.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  std::error_code ec;
  fs::remove_all(work, ec);
  return failed == 0 ? 0 : 1;
}
