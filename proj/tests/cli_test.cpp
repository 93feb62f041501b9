#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "heavytail/ingestion.hpp"
#include "heavytail/serialization.hpp"
#include "oracles.hpp"

namespace ht = heavytail;
namespace fs = std::filesystem;

namespace {

const std::string kCli = HEAVYTAIL_CLI_PATH;
const std::string kFixtures = HEAVYTAIL_FIXTURES;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("heavytail_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// args are passed through the shell; callers quote where needed
Run run(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const auto err = scratch() / ("stderr_" + std::to_string(counter++));
  const std::string cmd = env + (env.empty() ? "" : " ") + kCli + " " + args + " 2>" + err.string();
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& rec : ht::parse_csv(text)) rows.push_back(rec.fields);
  return rows;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string fixture(const std::string& name) { return kFixtures + "/" + name; }

}  // namespace

TEST(CliStats, MatchesGoldenRows) {
  const auto r = run("stats --input " + fixture("prices_a.csv") + " " + fixture("prices_b.csv") + " --format csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto got = csv_rows(r.out);
  const auto want = csv_rows(slurp(fixture("stats_golden.csv")));
  ASSERT_EQ(got.size(), want.size());
  EXPECT_EQ(got[0], want[0]);
  EXPECT_EQ(got[0], (std::vector<std::string>{"label", "n", "mean", "sd", "skewness", "kurtosis", "min", "max"}));
  for (std::size_t i = 1; i < want.size(); ++i) {
    ASSERT_EQ(got[i].size(), want[i].size());
    EXPECT_EQ(got[i][0], want[i][0]);
    EXPECT_EQ(got[i][1], want[i][1]);
    for (std::size_t c = 2; c < want[i].size(); ++c) {
      const double g = std::stod(got[i][c]);
      const double w = std::stod(want[i][c]);
      EXPECT_NEAR(g, w, 1e-12 * std::max(1.0, std::fabs(w))) << want[0][c] << " of " << want[i][0];
    }
  }
}

TEST(CliStats, JsonMatchesOracleOnReturnsFile) {
  const auto path = fixture("t4_corpus/t4_01.csv");
  const auto r = run("stats --input " + path);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = ht::Json::parse(r.out);
  ASSERT_TRUE(j.is_array());
  const auto o = oracle::moments(ht::load_returns_csv(path).returns);
  const auto& s = j[0];
  EXPECT_EQ(s.at("label"), "t4_01");
  EXPECT_EQ(s.at("n"), 1500);
  EXPECT_NEAR(s.at("mean").get<double>(), o.mean, 1e-15);
  EXPECT_NEAR(s.at("sd").get<double>(), o.sd, 1e-14 * o.sd);
  EXPECT_NEAR(s.at("skewness").get<double>(), o.skewness, 1e-10);
  EXPECT_NEAR(s.at("kurtosis").get<double>(), o.kurtosis, 1e-10 * o.kurtosis);
}

TEST(CliStats, EmptySeriesNamesTheSeries) {
  const auto p = scratch() / "lonely.csv";
  write_file(p, "timestamp,price\n2020-01-01,100\n");
  const auto r = run("stats --input " + p.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("lonely"), std::string::npos) << r.err;
}

TEST(CliStats, BadInputsExitWithDataError) {
  const auto p = scratch() / "bad.csv";
  write_file(p, "timestamp,price\n2020-01-01,100\n2020-01-02,N/A\n");
  const auto r = run("stats --input " + p.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  EXPECT_EQ(run("stats --input " + (scratch() / "missing.csv").string()).code, 2);
}

TEST(CliStats, WindowAndSchema) {
  const auto p = scratch() / "renamed.csv";
  write_file(p, "Date,Close\n2020-01-01,100\n2020-01-02,101\n2020-01-03,99\n2020-01-04,98\n");
  const auto r = run("stats --input " + p.string() + " --schema Date,Close --from 2020-01-02 --to 2020-01-04");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ht::Json::parse(r.out)[0].at("n"), 2);
  EXPECT_EQ(run("stats --input " + p.string()).code, 2);
}

TEST(CliFit, NormalMatchesClosedForm) {
  const auto path = fixture("t4_corpus/t4_02.csv");
  const auto r = run("fit --input " + path + " --family N --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = ht::Json::parse(r.out);
  const auto x = ht::load_returns_csv(path).returns;
  long double s = 0;
  for (double v : x) s += v;
  const long double mean = s / x.size();
  long double ss = 0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const long double sigma = std::sqrt(ss / x.size());
  EXPECT_EQ(j.at("family"), "N");
  EXPECT_NEAR(j.at("params").at("mu").get<double>(), static_cast<double>(mean), 1e-15);
  EXPECT_NEAR(j.at("params").at("sigma").get<double>(), static_cast<double>(sigma), 1e-14 * static_cast<double>(sigma));
  EXPECT_EQ(j.at("k"), 2);
  EXPECT_EQ(j.at("n"), 1500);
  EXPECT_EQ(j.at("seed"), 1);
  const double ll = j.at("loglik").get<double>();
  EXPECT_NEAR(ll, -0.5 * 1500 * (std::log(2 * M_PI * static_cast<double>(sigma * sigma)) + 1.0), 1e-8);
  EXPECT_NEAR(j.at("aic").get<double>(), -2 * ll + 4, 1e-9);
  for (const char* key : {"ks", "ad", "bic", "iterations", "converged", "flags"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(run("fit --input " + path + " --family N --seed 1").out, r.out);
}

TEST(CliFit, SameSeedSameBytes) {
  const auto args = "fit --input " + fixture("t4_corpus/t4_03.csv") + " --family 3St --seed 9";
  const auto a = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(run(args).out, a.out);
  EXPECT_EQ(run(args, "HEAVYTAIL_SEED=9").out, a.out);
}

TEST(CliFit, UsageErrors) {
  const auto path = fixture("t4_corpus/t4_00.csv");
  EXPECT_EQ(run("fit --input " + path + " --family Cauchy --seed 1").code, 64);
  EXPECT_EQ(run("fit --input " + path + " --family N", "env -u HEAVYTAIL_SEED").code, 64);
  EXPECT_EQ(run("fit --input " + path + " --family N", "HEAVYTAIL_SEED=4").code, 0);
  EXPECT_EQ(run("fit --family N --seed 1").code, 64);
  EXPECT_EQ(run("frobnicate").code, 64);
  EXPECT_EQ(run("fit --input " + path + " --family N --seed 1 --from 2020-01-01").code, 64);
}

TEST(CliFit, EstimationFailureExitsThree) {
  const auto p = scratch() / "flat_returns.csv";
  std::string text = "return\n";
  for (int i = 0; i < 100; ++i) text += "0.01\n";
  write_file(p, text);
  const auto r = run("fit --input " + p.string() + " --family St --seed 1");
  EXPECT_EQ(r.code, 3) << r.err;
  const auto j = ht::Json::parse(r.out);
  EXPECT_EQ(j.at("error").at("kind"), "estimation");
}

TEST(CliCompare, SingleCell) {
  const auto r = run("compare --input " + fixture("t4_corpus/t4_00.csv") + " --families N --seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = ht::Json::parse(r.out);
  for (const char* c : {"KS", "AD", "AIC", "BIC"}) {
    EXPECT_EQ(j.at("criteria").at(c).at("winners")[0], "N");
    EXPECT_EQ(j.at("tally").at(c).at("N"), 1);
  }
}

TEST(CliCompare, StudentAtLeastAsGoodAsNormalOnCorpus) {
  std::string inputs;
  for (int k = 0; k < 6; ++k) inputs += " " + fixture("t4_corpus/t4_0" + std::to_string(k) + ".csv");
  const auto args = "compare --input" + inputs + " --families N,St --seed 5 --jobs 2";
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = ht::Json::parse(r.out);
  for (const char* c : {"KS", "AD", "AIC", "BIC"}) {
    const auto& t = j.at("tally").at(c);
    EXPECT_GE(t.at("St").get<int>(), t.at("N").get<int>()) << c;
    EXPECT_EQ(t.at("St").get<int>() + t.at("N").get<int>(), 6) << c;
  }
  EXPECT_EQ(run(args).out, r.out);
  EXPECT_EQ(run("compare --input" + inputs + " --families N,St --seed 5 --jobs 1").out, r.out);
}

TEST(CliCompare, CsvTables) {
  const auto dir = scratch() / "compare_csv";
  fs::remove_all(dir);
  const auto r = run("compare --input " + fixture("t4_corpus/t4_00.csv") + " " + fixture("t4_corpus/t4_01.csv") +
                     " --families N,St --seed 5 --format csv --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"ks.csv", "ad.csv", "aic.csv", "bic.csv", "tally.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto aic = csv_rows(slurp(dir / "aic.csv"));
  ASSERT_EQ(aic.size(), 3u);
  EXPECT_EQ(aic[0][1], "N");
  EXPECT_EQ(aic[0][2], "St");
  EXPECT_EQ(aic[1][0], "t4_00");
  EXPECT_EQ(run("compare --input " + fixture("t4_corpus/t4_00.csv") + " --seed 5 --format csv").code, 64);
}

TEST(CliDiagnose, PosteriorResiduesAndChiSquare) {
  const auto r = run("diagnose --input " + fixture("diag_returns.csv") + " --params " + fixture("diag_3st.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = ht::Json::parse(r.out);
  const auto& post = j.at("posterior");
  const auto n = post.at("x").size();
  EXPECT_EQ(n, 5000u);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = post.at("tau1")[i].get<double>() + post.at("tau2")[i].get<double>() + post.at("tau3")[i].get<double>();
    EXPECT_NEAR(s, 1.0, 1e-12);
    if (i > 0) {
      EXPECT_LE(post.at("x")[i - 1].get<double>(), post.at("x")[i].get<double>());
    }
  }
  const auto& chi = j.at("chi_square");
  ASSERT_EQ(chi.size(), 3u);
  EXPECT_EQ(chi[0].at("variant"), "3St");
  EXPECT_EQ(chi[1].at("variant"), "3Stm4");
  EXPECT_EQ(chi[2].at("variant"), "3Stm4m12");
  const auto& res = j.at("residues");
  double m = 0.0;
  for (const auto& v : res.at("variants").at("3Stm4m12").at("res")) m = std::max(m, std::fabs(v.get<double>()));
  EXPECT_EQ(res.at("a").get<double>(), m / 40.0);
  for (const char* v : {"3St", "3Stm4", "3Stm4m12"}) {
    const auto& vals = res.at("variants").at(v).at("rescaled");
    EXPECT_EQ(vals.size(), 500u);
    for (const auto& x : vals) {
      EXPECT_GT(x.get<double>(), -0.5);
      EXPECT_LT(x.get<double>(), 0.5);
    }
  }
}

TEST(CliDiagnose, CsvOutputAndBadParams) {
  const auto dir = scratch() / "diag_csv";
  fs::remove_all(dir);
  const auto r = run("diagnose --input " + fixture("diag_returns.csv") + " --params " + fixture("diag_3st.json") +
                     " --format csv --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"posterior.csv", "residues.csv", "chisquare.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto chi = csv_rows(slurp(dir / "chisquare.csv"));
  ASSERT_EQ(chi.size(), 4u);
  EXPECT_EQ(chi[1][0], "3St");
  const auto inline_st = "'{\"family\":\"St\",\"params\":{\"nu\":4,\"mu\":0,\"sigma\":0.01}}'";
  EXPECT_NE(run("diagnose --input " + fixture("diag_returns.csv") + " --params " + inline_st).code, 0);
}

TEST(CliSimulate, DrawsAndRoundTrip) {
  EXPECT_EQ(run("simulate --params " + fixture("pipeline/st4.json") + " --n 0 --seed 1").code, 64);
  const auto a = run("simulate --params " + fixture("pipeline/st4.json") + " --n 5000 --seed 11");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out.rfind("return\n", 0), 0u);
  EXPECT_EQ(run("simulate --params " + fixture("pipeline/st4.json") + " --n 5000 --seed 11").out, a.out);
  EXPECT_NE(run("simulate --params " + fixture("pipeline/st4.json") + " --n 5000 --seed 12").out, a.out);
  const auto p = scratch() / "sim_st4.csv";
  write_file(p, a.out);
  const auto f = run("fit --input " + p.string() + " --family St --seed 1");
  ASSERT_EQ(f.code, 0) << f.err;
  const auto j = ht::Json::parse(f.out);
  EXPECT_NEAR(j.at("params").at("nu").get<double>(), 4.0, 1.0);
  EXPECT_NEAR(j.at("params").at("sigma").get<double>(), 0.01, 0.001);
  EXPECT_EQ(j.at("n"), 5000);
  EXPECT_EQ(run("simulate --family NIG --params " + fixture("pipeline/st4.json") + " --n 5 --seed 1").code, 64);
}
