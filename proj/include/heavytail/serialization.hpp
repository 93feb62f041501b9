#pragma once

// JSON encoding of model specifications, fit results and GOF reports.

#include <string>

#include "heavytail/analysis.hpp"
#include "heavytail/distributions.hpp"
#include "heavytail/errors.hpp"
#include "heavytail/estimation.hpp"
#include "heavytail/gof.hpp"
#include "json.hpp"

namespace heavytail {

using Json = nlohmann::ordered_json;

inline Json params_to_json(const ModelSpec& spec) {
  return std::visit(
      [](const auto& p) -> Json {
        using T = std::decay_t<decltype(p)>;
        Json j;
        if constexpr (std::is_same_v<T, NormalParams>) {
          j["mu"] = p.mu;
          j["sigma"] = p.sigma;
        } else if constexpr (std::is_same_v<T, StudentParams>) {
          j["nu"] = p.nu;
          j["mu"] = p.mu;
          j["sigma"] = p.sigma;
        } else if constexpr (std::is_same_v<T, NigParams>) {
          j["alpha"] = p.alpha;
          j["beta"] = p.beta;
          j["delta"] = p.delta;
          j["mu"] = p.mu;
        } else if constexpr (std::is_same_v<T, VarianceGammaParams>) {
          j["lambda"] = p.lambda;
          j["alpha"] = p.alpha;
          j["beta"] = p.beta;
          j["mu"] = p.mu;
        } else if constexpr (std::is_same_v<T, GhParams>) {
          j["lambda"] = p.lambda;
          j["alpha"] = p.alpha;
          j["beta"] = p.beta;
          j["delta"] = p.delta;
          j["mu"] = p.mu;
        } else if constexpr (std::is_same_v<T, MeixnerParams>) {
          j["alpha"] = p.alpha;
          j["beta"] = p.beta;
          j["mu"] = p.mu;
          j["delta"] = p.delta;
        } else {
          j["components"] = Json::array();
          for (const auto& c : p.components) {
            Json cj;
            cj["mu"] = c.mu;
            cj["sigma"] = c.sigma;
            cj["nu"] = c.nu;
            cj["fixed_dof"] = c.fixed_dof;
            j["components"].push_back(cj);
          }
          j["weights"] = p.all_weights();
        }
        return j;
      },
      spec.params());
}

inline Json to_json(const ModelSpec& spec) {
  Json j;
  j["family"] = std::string(family_name(spec.family()));
  j["params"] = params_to_json(spec);
  return j;
}

namespace detail {

inline double number_at(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DomainError(std::string("parameter '") + key + "' is missing");
  const auto& v = j.at(key);
  if (!v.is_number()) throw DomainError(std::string("parameter '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace detail

/// Reads {"family": ..., "params": {...}}; mixtures accept m or m-1 weights.
inline ModelSpec spec_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("family") || !j.at("family").is_string()) {
    throw DomainError("model JSON needs a string 'family'");
  }
  const Family f = parse_family(j.at("family").get<std::string>());
  if (!j.contains("params")) throw DomainError("model JSON needs a 'params' object");
  const auto& p = j.at("params");
  using detail::number_at;
  switch (f) {
    case Family::Normal: return ModelSpec::normal(number_at(p, "mu"), number_at(p, "sigma"));
    case Family::Student: return ModelSpec::student(number_at(p, "nu"), number_at(p, "mu"), number_at(p, "sigma"));
    case Family::NIG:
      return ModelSpec::nig(number_at(p, "alpha"), number_at(p, "beta"), number_at(p, "delta"), number_at(p, "mu"));
    case Family::VarianceGamma:
      return ModelSpec::variance_gamma(number_at(p, "lambda"), number_at(p, "alpha"), number_at(p, "beta"),
                                       number_at(p, "mu"));
    case Family::GH:
      return ModelSpec::gh(number_at(p, "lambda"), number_at(p, "alpha"), number_at(p, "beta"), number_at(p, "delta"),
                           number_at(p, "mu"));
    case Family::Meixner:
      return ModelSpec::meixner(number_at(p, "alpha"), number_at(p, "beta"), number_at(p, "mu"), number_at(p, "delta"));
    default: break;
  }
  if (!p.contains("components") || !p.at("components").is_array()) {
    throw DomainError("mixture JSON needs a 'components' array");
  }
  StudentMixtureParams m;
  for (const auto& c : p.at("components")) {
    const bool fixed = !c.contains("fixed_dof") || c.at("fixed_dof").get<bool>();
    m.components.push_back({number_at(c, "mu"), number_at(c, "sigma"), number_at(c, "nu"), fixed});
  }
  if (!p.contains("weights") || !p.at("weights").is_array()) throw DomainError("mixture JSON needs a 'weights' array");
  std::vector<double> w;
  for (const auto& v : p.at("weights")) {
    if (!v.is_number()) throw DomainError("mixture weights must be numbers");
    w.push_back(v.get<double>());
  }
  if (w.size() == m.components.size() && !w.empty()) {
    double total = 0.0;
    for (double v : w) total += v;
    detail::require_domain(std::fabs(total - 1.0) <= 1e-9, "mixture weights must sum to 1");
    w.pop_back();
  }
  m.weights = std::move(w);
  auto spec = ModelSpec::mixture(std::move(m));
  if (f != Family::MixtureGeneral && spec.family() != f) {
    throw DomainError("family '" + std::string(family_name(f)) + "' does not match the component dofs");
  }
  return spec;
}

inline Json to_json(const GofReport& g) {
  Json j;
  j["ks"] = g.ks;
  j["ad"] = g.ad;
  j["aic"] = g.aic;
  j["bic"] = g.bic;
  return j;
}

inline Json to_json(const FitResult& r) {
  Json j = to_json(r.spec);
  j["loglik"] = r.loglik;
  j["k"] = r.k;
  j["n"] = r.n;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["flags"] = r.flags;
  return j;
}

inline Json to_json(const ChiSquareResult& c) {
  Json j;
  j["statistic"] = c.statistic;
  j["dof"] = c.dof;
  j["p_value"] = c.p_value;
  j["bins_used"] = c.bins_used;
  j["rejected_at_5pct"] = c.rejected_at_5pct;
  return j;
}

}  // namespace heavytail
