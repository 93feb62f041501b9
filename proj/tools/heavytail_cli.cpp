// heavytail: fit heavy-tailed distributions to log-returns.
//
// Exit codes: 0 success, 2 data or domain error, 3 estimation failure,
// 64 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "heavytail/heavytail.hpp"

namespace ht = heavytail;
namespace fs = std::filesystem;

namespace {

constexpr int kExitData = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::vector<std::string> inputs;
  std::string schema = "timestamp,price";
  std::string from;
  std::string to;
  std::string frequency = "daily";
  bool intraday_only = false;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
  int jobs = 1;
  int restarts = 5;
  int bins = 500;
  std::string family;
  std::vector<std::string> families;
  std::string params;
  long long n = -1;
};

std::string num(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t require_seed(const Options& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("HEAVYTAIL_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("HEAVYTAIL_SEED is not an unsigned integer");
    return v;
  }
  throw UsageError("a seed is required: pass --seed or set HEAVYTAIL_SEED");
}

ht::Family require_family(const std::string& name) {
  try {
    return ht::parse_family(name);
  } catch (const ht::DomainError&) {
    throw UsageError("unknown family '" + name + "'");
  }
}

std::vector<ht::Family> family_list(const Options& o) {
  if (o.families.empty()) return {ht::kStandardFamilies.begin(), ht::kStandardFamilies.end()};
  std::vector<ht::Family> out;
  for (const auto& f : o.families) out.push_back(require_family(f));
  return out;
}

ht::FitConfig fit_config(const Options& o, std::uint64_t seed) {
  ht::FitConfig c;
  c.restarts = o.restarts;
  c.seed = seed;
  c.keep_trace = false;
  return c;
}

// Price files (schema columns present) become log-returns; files with a
// "return" column are taken as returns.
ht::ReturnSeries load_series(const std::string& path, const Options& o) {
  const auto schema = ht::parse_schema(o.schema);
  const auto freq = ht::parse_frequency(o.frequency);
  const auto text = ht::read_file(path);
  const auto records = ht::parse_csv(text);
  if (records.empty()) throw ht::DataError(path + ": line 1: missing header row");
  const auto& header = records.front().fields;
  auto has = [&](const std::string& name) {
    return std::any_of(header.begin(), header.end(), [&](const std::string& h) { return ht::detail::trim(h) == name; });
  };
  if (has(schema.price_column)) {
    ht::PriceSeries prices;
    try {
      prices = ht::parse_price_csv(text, schema, fs::path(path).stem().string(), freq);
    } catch (const ht::DataError& e) {
      throw ht::DataError(path + ": " + e.what());
    }
    if (!o.from.empty() || !o.to.empty()) {
      const auto lo = o.from.empty() ? ht::Timestamp{std::numeric_limits<std::int64_t>::min(), false}
                                     : ht::require_timestamp(o.from);
      const auto hi = o.to.empty() ? ht::Timestamp{std::numeric_limits<std::int64_t>::max(), false}
                                   : ht::require_timestamp(o.to);
      prices = ht::window(prices, lo, hi);
    }
    return ht::log_returns(prices, {true, o.intraday_only});
  }
  if (has("return")) {
    if (!o.from.empty() || !o.to.empty()) throw UsageError(path + ": --from/--to need a timestamped price file");
    return ht::load_returns_csv(path, "return", freq);
  }
  throw ht::DataError(path + ": header needs columns '" + schema.timestamp_column + "," + schema.price_column +
                      "' or 'return'");
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw ht::DataError("cannot write '" + o.out + "'");
  f << text;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ht::DataError("cannot write '" + path.string() + "'");
  f << text;
}

fs::path output_dir(const Options& o) {
  fs::create_directories(o.out);
  return fs::path(o.out);
}

ht::Json read_json_arg(const std::string& arg) {
  std::string text = arg;
  if (arg.empty()) throw UsageError("--params is required");
  if (arg.front() != '{') text = ht::read_file(arg);
  try {
    return ht::Json::parse(text);
  } catch (const ht::Json::parse_error& e) {
    throw ht::DomainError("parameter JSON is malformed: " + std::string(e.what()));
  }
}

// ---------------------------------------------------------------------------

int cmd_stats(const Options& o) {
  if (o.inputs.empty()) throw UsageError("stats needs --input");
  std::vector<std::pair<std::string, ht::DescriptiveStats>> rows;
  for (const auto& path : o.inputs) {
    const auto series = load_series(path, o);
    if (series.size() < 2) {
      throw ht::DataError("series '" + series.label + "' has " + std::to_string(series.size()) +
                          " nonzero returns; at least 2 are needed");
    }
    rows.emplace_back(series.label, ht::descriptive_stats(series.returns));
  }
  std::ostringstream out;
  if (o.format == "csv") {
    out << "label,n,mean,sd,skewness,kurtosis,min,max\n";
    for (const auto& [label, s] : rows) {
      out << label << ',' << s.n << ',' << num(s.mean) << ',' << num(s.sd) << ','
          << (s.skewness ? num(*s.skewness) : "NA") << ',' << (s.kurtosis ? num(*s.kurtosis) : "NA") << ','
          << num(s.min) << ',' << num(s.max) << '\n';
    }
  } else {
    ht::Json arr = ht::Json::array();
    for (const auto& [label, s] : rows) {
      ht::Json j;
      j["label"] = label;
      j["n"] = s.n;
      j["mean"] = s.mean;
      j["sd"] = s.sd;
      j["skewness"] = s.skewness ? ht::Json(*s.skewness) : ht::Json(nullptr);
      j["kurtosis"] = s.kurtosis ? ht::Json(*s.kurtosis) : ht::Json(nullptr);
      j["min"] = s.min;
      j["max"] = s.max;
      arr.push_back(j);
    }
    out << arr.dump(2) << '\n';
  }
  emit(o, out.str());
  return 0;
}

int cmd_fit(const Options& o) {
  if (o.inputs.size() != 1) throw UsageError("fit needs exactly one --input");
  if (o.family.empty()) throw UsageError("fit needs --family");
  const auto family = require_family(o.family);
  const auto seed = require_seed(o);
  const auto series = load_series(o.inputs.front(), o);
  ht::Json j;
  j["series"] = series.label;
  j["seed"] = seed;
  try {
    const auto r = ht::fit(family, series.returns, fit_config(o, seed));
    const auto g = ht::gof_report(series.returns, r);
    j["family"] = std::string(ht::family_name(r.family()));
    j["params"] = ht::params_to_json(r.spec);
    j["loglik"] = r.loglik;
    j["k"] = r.k;
    j["n"] = r.n;
    j["ks"] = g.ks;
    j["ad"] = g.ad;
    j["aic"] = g.aic;
    j["bic"] = g.bic;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["flags"] = r.flags;
  } catch (const ht::EstimationError& e) {
    j["family"] = std::string(ht::family_name(family));
    j["error"] = {{"kind", "estimation"}, {"message", e.what()}};
    emit(o, j.dump(2) + "\n");
    std::cerr << "heavytail: " << e.what() << '\n';
    return kExitEstimation;
  }
  emit(o, j.dump(2) + "\n");
  return 0;
}

int cmd_compare(const Options& o) {
  if (o.inputs.empty()) throw UsageError("compare needs at least one --input");
  const auto families = family_list(o);
  const auto seed = require_seed(o);
  if (o.jobs < 1) throw UsageError("--jobs must be >= 1");
  std::vector<ht::ReturnSeries> series;
  for (const auto& path : o.inputs) series.push_back(load_series(path, o));
  const auto table = ht::compare_models(series, families, fit_config(o, seed), o.jobs);

  auto value = [&](std::size_t i, std::size_t f, ht::Criterion c) -> std::optional<double> {
    const auto& g = table.rows[i][f].gof;
    if (!g) return std::nullopt;
    return ht::criterion_value(*g, c);
  };

  if (o.format == "csv") {
    if (o.out.empty()) throw UsageError("--format csv for compare needs --out <directory>");
    const auto dir = output_dir(o);
    for (std::size_t c = 0; c < ht::kCriteria.size(); ++c) {
      std::ostringstream out;
      out << "series";
      for (auto f : families) out << ',' << ht::family_name(f);
      out << '\n';
      for (std::size_t i = 0; i < series.size(); ++i) {
        out << table.series[i];
        for (std::size_t f = 0; f < families.size(); ++f) {
          const auto v = value(i, f, ht::kCriteria[c]);
          out << ',' << (v ? num(*v) : "NA");
          if (table.winners[i][c] && *table.winners[i][c] == f) out << '*';
        }
        out << '\n';
      }
      std::string name(ht::criterion_name(ht::kCriteria[c]));
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
      write_file(dir / (name + ".csv"), out.str());
    }
    std::ostringstream tally;
    tally << "criterion";
    for (auto f : families) tally << ',' << ht::family_name(f);
    tally << '\n';
    for (std::size_t c = 0; c < ht::kCriteria.size(); ++c) {
      tally << ht::criterion_name(ht::kCriteria[c]);
      for (int v : table.tally[c]) tally << ',' << v;
      tally << '\n';
    }
    write_file(dir / "tally.csv", tally.str());
    std::ostringstream errors;
    errors << "series,family,error\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
      for (std::size_t f = 0; f < families.size(); ++f) {
        if (!table.rows[i][f].error.empty()) {
          std::string msg = table.rows[i][f].error;
          std::replace(msg.begin(), msg.end(), '"', '\'');
          errors << table.series[i] << ',' << ht::family_name(families[f]) << ",\"" << msg << "\"\n";
        }
      }
    }
    write_file(dir / "errors.csv", errors.str());
    return 0;
  }

  ht::Json j;
  j["seed"] = seed;
  j["families"] = ht::Json::array();
  for (auto f : families) j["families"].push_back(std::string(ht::family_name(f)));
  j["series"] = table.series;
  j["criteria"] = ht::Json::object();
  for (std::size_t c = 0; c < ht::kCriteria.size(); ++c) {
    ht::Json crit;
    crit["values"] = ht::Json::array();
    crit["winners"] = ht::Json::array();
    for (std::size_t i = 0; i < series.size(); ++i) {
      ht::Json row = ht::Json::array();
      for (std::size_t f = 0; f < families.size(); ++f) {
        const auto v = value(i, f, ht::kCriteria[c]);
        row.push_back(v && std::isfinite(*v) ? ht::Json(*v) : ht::Json(nullptr));
      }
      crit["values"].push_back(row);
      const auto& w = table.winners[i][c];
      crit["winners"].push_back(w ? ht::Json(std::string(ht::family_name(families[*w]))) : ht::Json(nullptr));
    }
    j["criteria"][std::string(ht::criterion_name(ht::kCriteria[c]))] = crit;
  }
  j["tally"] = ht::Json::object();
  for (std::size_t c = 0; c < ht::kCriteria.size(); ++c) {
    ht::Json t;
    for (std::size_t f = 0; f < families.size(); ++f) t[std::string(ht::family_name(families[f]))] = table.tally[c][f];
    j["tally"][std::string(ht::criterion_name(ht::kCriteria[c]))] = t;
  }
  j["fits"] = ht::Json::array();
  for (std::size_t i = 0; i < series.size(); ++i) {
    ht::Json row = ht::Json::array();
    for (std::size_t f = 0; f < families.size(); ++f) {
      const auto& cell = table.rows[i][f];
      ht::Json cj;
      cj["family"] = std::string(ht::family_name(families[f]));
      if (cell.fit) {
        cj["params"] = ht::params_to_json(cell.fit->spec);
        cj["loglik"] = cell.fit->loglik;
        cj["k"] = cell.fit->k;
        cj["n"] = cell.fit->n;
        cj["converged"] = cell.fit->converged;
      } else {
        cj["error"] = cell.error;
      }
      row.push_back(cj);
    }
    j["fits"].push_back(row);
  }
  j["row_errors"] = ht::Json::array();
  for (const auto& e : table.row_errors) j["row_errors"].push_back(e.empty() ? ht::Json(nullptr) : ht::Json(e));
  const auto text = j.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_file(output_dir(o) / "comparison.json", text);
  }
  return 0;
}

int cmd_diagnose(const Options& o) {
  if (o.inputs.size() != 1) throw UsageError("diagnose needs exactly one --input");
  const auto spec = ht::spec_from_json(read_json_arg(o.params));
  ht::require_three_components(spec, "diagnose");
  const auto series = load_series(o.inputs.front(), o);
  if (series.size() < 2) throw ht::DataError("series '" + series.label + "' has fewer than 2 returns");
  std::vector<double> xs(series.returns);
  std::sort(xs.begin(), xs.end());
  const auto post = ht::posterior_probabilities(spec, xs);
  const auto ra = ht::residue_analysis(series.returns, spec, o.bins);
  const std::array<ht::ModelSpec, 3> variants = {spec, ht::ablate_mixture(spec, {4.0}),
                                                 ht::ablate_mixture(spec, {4.0, 12.0})};
  struct Chi {
    std::optional<ht::ChiSquareResult> result;
    std::string error;
  };
  std::array<Chi, 3> chi;
  for (std::size_t v = 0; v < 3; ++v) {
    try {
      chi[v].result = ht::chi_square_test(series.returns, variants[v], o.bins, ht::parameter_count(variants[v]));
    } catch (const ht::DomainError& e) {
      chi[v].error = e.what();
    }
  }

  if (o.format == "csv") {
    if (o.out.empty()) throw UsageError("--format csv for diagnose needs --out <directory>");
    const auto dir = output_dir(o);
    std::ostringstream p;
    p << "x,tau1,tau2,tau3\n";
    for (std::size_t i = 0; i < post.x.size(); ++i) {
      p << num(post.x[i]) << ',' << num(post.tau[i][0]) << ',' << num(post.tau[i][1]) << ',' << num(post.tau[i][2])
        << '\n';
    }
    write_file(dir / "posterior.csv", p.str());
    std::ostringstream r;
    r << "bin_lo,bin_hi,empirical";
    for (auto name : ht::kResidueVariants) r << ",model_" << name;
    for (auto name : ht::kResidueVariants) r << ",res_" << name;
    for (auto name : ht::kResidueVariants) r << ",rescaled_" << name;
    r << '\n';
    for (std::size_t i = 0; i < ra.empirical_freq.size(); ++i) {
      r << num(ra.bin_edges[i]) << ',' << num(ra.bin_edges[i + 1]) << ',' << num(ra.empirical_freq[i]);
      for (const auto& col : ra.model_freq) r << ',' << num(col[i]);
      for (const auto& col : ra.res) r << ',' << num(col[i]);
      for (const auto& col : ra.rescaled) r << ',' << num(col[i]);
      r << '\n';
    }
    write_file(dir / "residues.csv", r.str());
    std::ostringstream c;
    c << "variant,statistic,dof,p_value,bins_used,rejected_at_5pct,a\n";
    for (std::size_t v = 0; v < 3; ++v) {
      c << ht::kResidueVariants[v];
      if (chi[v].result) {
        const auto& x = *chi[v].result;
        c << ',' << num(x.statistic) << ',' << x.dof << ',' << num(x.p_value) << ',' << x.bins_used << ','
          << (x.rejected_at_5pct ? "true" : "false");
      } else {
        c << ",NA,NA,NA,NA,NA";
      }
      c << ',' << num(ra.a) << '\n';
    }
    write_file(dir / "chisquare.csv", c.str());
    return 0;
  }

  ht::Json j;
  j["series"] = series.label;
  j["model"] = ht::to_json(spec);
  j["chi_square"] = ht::Json::array();
  for (std::size_t v = 0; v < 3; ++v) {
    ht::Json cj;
    cj["variant"] = std::string(ht::kResidueVariants[v]);
    if (chi[v].result) {
      cj.update(ht::to_json(*chi[v].result));
    } else {
      cj["error"] = chi[v].error;
    }
    j["chi_square"].push_back(cj);
  }
  ht::Json res;
  res["a"] = ra.a;
  res["bin_edges"] = ra.bin_edges;
  res["empirical_freq"] = ra.empirical_freq;
  for (std::size_t v = 0; v < 3; ++v) {
    ht::Json vj;
    vj["model_freq"] = ra.model_freq[v];
    vj["res"] = ra.res[v];
    vj["rescaled"] = ra.rescaled[v];
    res["variants"][std::string(ht::kResidueVariants[v])] = vj;
  }
  j["residues"] = res;
  ht::Json pj;
  pj["x"] = post.x;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> col;
    for (const auto& t : post.tau) col.push_back(t[static_cast<std::size_t>(k)]);
    pj["tau" + std::to_string(k + 1)] = col;
  }
  j["posterior"] = pj;
  const auto text = j.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_file(output_dir(o) / "diagnose.json", text);
  }
  return 0;
}

int cmd_simulate(const Options& o) {
  if (o.n < 1) throw UsageError("simulate needs --n >= 1");
  const auto seed = require_seed(o);
  auto pj = read_json_arg(o.params);
  if (!pj.contains("family")) {
    if (o.family.empty()) throw UsageError("simulate needs --family or a 'family' key in --params");
    pj = ht::Json{{"family", o.family}, {"params", pj}};
  } else if (!o.family.empty() && ht::parse_family(pj.at("family").get<std::string>()) != require_family(o.family)) {
    throw UsageError("--family does not match the family in --params");
  }
  if (!o.family.empty()) require_family(o.family);
  const auto spec = ht::spec_from_json(pj);
  const auto draws = ht::sample(spec, static_cast<std::size_t>(o.n), seed);
  std::string text = "return\n";
  text.reserve(draws.size() * 24);
  for (double x : draws) {
    text += num(x);
    text += '\n';
  }
  emit(o, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit heavy-tailed distributions to log-returns"};
  app.require_subcommand(1);
  Options o;

  auto add_input = [&](CLI::App* c, bool many) {
    auto* opt = c->add_option("--input", o.inputs, many ? "CSV files (prices or returns)" : "CSV file (prices or returns)");
    if (!many) opt->expected(1);
    c->add_option("--schema", o.schema, "timestamp and price column names, e.g. timestamp=Date,price=Close");
    c->add_option("--from", o.from, "first timestamp kept (ISO-8601, inclusive)");
    c->add_option("--to", o.to, "last timestamp kept (ISO-8601, inclusive)");
    c->add_option("--frequency", o.frequency, "daily or hourly")->check(CLI::IsMember({"daily", "hourly"}));
    c->add_flag("--intraday-only", o.intraday_only, "drop returns spanning more than twice the modal spacing");
  };
  auto add_format = [&](CLI::App* c) {
    c->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "random seed (falls back to HEAVYTAIL_SEED)"); };

  auto* stats = app.add_subcommand("stats", "descriptive statistics of the log-returns");
  add_input(stats, true);
  add_format(stats);
  stats->add_option("--out", o.out, "output file (default stdout)");

  auto* fitc = app.add_subcommand("fit", "fit one family to one series");
  add_input(fitc, false);
  fitc->add_option("--family", o.family, "N, St, NIG, VG, GH, Meixner, 2St12, 2St39 or 3St");
  add_seed(fitc);
  fitc->add_option("--restarts", o.restarts, "number of starts")->check(CLI::PositiveNumber);
  add_format(fitc);
  fitc->add_option("--out", o.out, "output file (default stdout)");

  auto* cmp = app.add_subcommand("compare", "fit several families to several series and rank them");
  add_input(cmp, true);
  cmp->add_option("--families", o.families, "families to compare (default: all nine)")->delimiter(',');
  add_seed(cmp);
  cmp->add_option("--restarts", o.restarts, "number of starts")->check(CLI::PositiveNumber);
  cmp->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  add_format(cmp);
  cmp->add_option("--out", o.out, "output directory (default: JSON on stdout)");

  auto* diag = app.add_subcommand("diagnose", "posterior probabilities, residues and chi-square tests of a 3St fit");
  add_input(diag, false);
  diag->add_option("--params", o.params, "3St model JSON (file or inline)");
  diag->add_option("--bins", o.bins, "number of bins")->check(CLI::Range(10, 1000000));
  add_format(diag);
  diag->add_option("--out", o.out, "output directory (default: JSON on stdout)");

  auto* sim = app.add_subcommand("simulate", "draw a sample from a model");
  sim->add_option("--family", o.family, "model family (optional when --params names it)");
  sim->add_option("--params", o.params, "model JSON (file or inline)");
  sim->add_option("--n", o.n, "number of draws");
  add_seed(sim);
  sim->add_option("--out", o.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*stats) return cmd_stats(o);
    if (*fitc) return cmd_fit(o);
    if (*cmp) return cmd_compare(o);
    if (*diag) return cmd_diagnose(o);
    if (*sim) return cmd_simulate(o);
  } catch (const UsageError& e) {
    std::cerr << "heavytail: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ht::EstimationError& e) {
    std::cerr << "heavytail: estimation failed: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const ht::DataError& e) {
    std::cerr << "heavytail: data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ht::DomainError& e) {
    std::cerr << "heavytail: invalid input: " << e.what() << '\n';
    return kExitData;
  } catch (const ht::ConsistencyError& e) {
    std::cerr << "heavytail: inconsistent input: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "heavytail: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
