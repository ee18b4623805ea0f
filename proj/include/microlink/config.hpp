// Apache License, Version 2.0, refer to LICENSE.txt
//
// Run configuration (JSON): prior block, sampler block, model block and an
// optional list of (a, b) distortion-prior settings to sweep over.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "microlink/errors.hpp"
#include "microlink/model.hpp"
#include "microlink/priors.hpp"
#include "microlink/sampler.hpp"

namespace microlink {

using Json = nlohmann::ordered_json;

// Prior as configured; concrete parameters that depend on I are resolved by
// build(). Unset optionals fall back to the elicited defaults.
struct PriorBlock {
  std::string type = "ABP";  // UP | EPP | NBNBP | NBDP | ABP
  // ABP
  int max_size = 2;
  double pi = 0.8;  // prior probability that a record is a singleton
  double cv = 0.5;
  std::optional<std::vector<double>> a, b;  // explicit per-level Beta parameters
  // EPP
  std::optional<double> theta, a_theta, b_theta;
  // NBNBP / NBDP
  std::optional<double> nb_a, nb_q;
  std::optional<double> a_eta, b_eta;
  // NBDP
  double alpha = 1.0;
  double mu0_p = 0.5;

  PriorSpec build(std::size_t records) const {
    if (type == "UP") return UpPrior{};
    if (type == "ABP") {
      if (a || b) {
        AbpPrior p;
        p.max_size = max_size;
        p.a = a.value_or(std::vector<double>{});
        p.b = b.value_or(std::vector<double>{});
        if (p.a.size() != static_cast<std::size_t>(max_size - 1) || p.b.size() != p.a.size())
          throw ConfigError("/prior", "ABP needs M - 1 values in both a and b");
        for (std::size_t k = 0; k < p.a.size(); ++k) p.theta.push_back(p.a[k] / (p.a[k] + p.b[k]));
        return p;
      }
      return make_abp(max_size, pi, cv);
    }
    if (type == "EPP") {
      EppPrior p = (a_theta || b_theta) ? EppPrior{} : epp_elicit(pi, cv, records);
      if (a_theta) p.a_theta = *a_theta;
      if (b_theta) p.b_theta = *b_theta;
      if (a_theta || b_theta) p.theta = p.a_theta / p.b_theta;
      if (theta) p.theta = *theta;
      return p;
    }
    if (type == "NBNBP") {
      NbnbPrior p = make_nbnb(records);
      if (nb_a) p.a = *nb_a;
      if (nb_q) p.q = *nb_q;
      if (a_eta) p.a_eta = *a_eta;
      if (b_eta) p.b_eta = *b_eta;
      if (a_theta) p.a_theta = *a_theta;
      if (b_theta) p.b_theta = *b_theta;
      p.eta = p.a_eta / p.b_eta;
      p.theta = p.a_theta / (p.a_theta + p.b_theta);
      return p;
    }
    if (type == "NBDP") {
      NbdpPrior p = make_nbdp(records);
      if (nb_a) p.a = *nb_a;
      if (nb_q) p.q = *nb_q;
      p.alpha = alpha;
      p.mu0_p = mu0_p;
      return p;
    }
    throw ConfigError("/prior/type", "unknown prior '" + type + "' (expected UP, EPP, NBNBP, NBDP or ABP)");
  }

  std::string label() const { return type == "ABP" ? "ABP" + std::to_string(max_size) : type; }
};

struct ModelBlock {
  std::size_t dim = 2;
  std::vector<std::string> fields;  // profile columns to use; empty = all
  std::optional<double> omega, a_sigma, b_sigma;
  double alpha = 1.0;  // symmetric Dirichlet on each field
  double a = 1.0;      // Beta(a, b) on the distortion probabilities
  double b = 99.0;

  HyperParams build(std::size_t records, std::span<const int> domains) const {
    HyperParams h;
    if (!(omega && a_sigma && b_sigma)) {
      const NetworkHypers net = elicit_network_hypers(records, dim);
      h.omega = net.omega;
      h.a_sigma = net.a_sigma;
      h.b_sigma = net.b_sigma;
    }
    if (omega) h.omega = *omega;
    if (a_sigma) h.a_sigma = *a_sigma;
    if (b_sigma) h.b_sigma = *b_sigma;
    h.dim = dim;
    h.a_dist = a;
    h.b_dist = b;
    for (int m : domains) h.alpha_field.emplace_back(static_cast<std::size_t>(m), alpha);
    return h;
  }
};

struct SweepPoint {
  double a;
  double b;
};

struct RunConfig {
  PriorBlock prior;
  SamplerConfig sampler;
  ModelBlock model;
  std::vector<SweepPoint> sweep;
};

// The distortion-prior grid explored in the sensitivity study: fixed mean
// 0.002, then a + b = 100, then a + b = 10.
inline std::vector<SweepPoint> sensitivity_grid() {
  return {{0.004, 1.996}, {0.01, 4.99},  {0.02, 9.98},  {0.04, 19.96}, {0.1, 49.9},  {0.2, 99.8},
          {0.03, 99.97},  {0.1, 99.9},   {0.3, 99.7},   {1.0, 99.0},   {3.0, 97.0},  {10.0, 90.0},
          {0.003, 9.997}, {0.01, 9.99},  {0.03, 9.97},  {0.1, 9.9},    {0.3, 9.7},   {1.0, 9.0}};
}

namespace detail {

inline const Json& member(const Json& obj, const char* key, const std::string& ptr) {
  if (!obj.contains(key)) throw ConfigError(ptr + "/" + key, "missing required member");
  return obj.at(key);
}

inline double number(const Json& j, const std::string& ptr) {
  if (!j.is_number()) throw ConfigError(ptr, "expected a number");
  return j.get<double>();
}

inline long integer(const Json& j, const std::string& ptr) {
  if (!j.is_number_integer()) throw ConfigError(ptr, "expected an integer");
  return j.get<long>();
}

inline std::string text(const Json& j, const std::string& ptr) {
  if (!j.is_string()) throw ConfigError(ptr, "expected a string");
  return j.get<std::string>();
}

inline std::vector<double> numbers(const Json& j, const std::string& ptr) {
  if (!j.is_array()) throw ConfigError(ptr, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], ptr + "/" + std::to_string(k)));
  return out;
}

inline void check_keys(const Json& obj, const std::string& ptr, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(ptr.empty() ? "/" : ptr, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(ptr + "/" + key, "unknown member");
  }
}

}  // namespace detail

inline PriorBlock parse_prior(const Json& j, const std::string& ptr = "/prior") {
  using namespace detail;
  check_keys(j, ptr, {"type", "M", "pi", "cv", "a", "b", "theta", "a_theta", "b_theta", "nb_a", "nb_q",
                      "a_eta", "b_eta", "alpha", "mu0_p"});
  PriorBlock p;
  p.type = text(member(j, "type", ptr), ptr + "/type");
  if (p.type != "UP" && p.type != "EPP" && p.type != "NBNBP" && p.type != "NBDP" && p.type != "ABP")
    throw ConfigError(ptr + "/type", "unknown prior '" + p.type + "'");
  if (j.contains("M")) {
    p.max_size = static_cast<int>(integer(j["M"], ptr + "/M"));
    if (p.max_size < 1) throw ConfigError(ptr + "/M", "must be at least 1");
  }
  if (j.contains("pi")) p.pi = number(j["pi"], ptr + "/pi");
  if (j.contains("cv")) p.cv = number(j["cv"], ptr + "/cv");
  if (!(p.pi > 0 && p.pi < 1)) throw ConfigError(ptr + "/pi", "must lie in (0, 1)");
  if (!(p.cv > 0)) throw ConfigError(ptr + "/cv", "must be positive");
  if (j.contains("a")) p.a = numbers(j["a"], ptr + "/a");
  if (j.contains("b")) p.b = numbers(j["b"], ptr + "/b");
  auto opt = [&](const char* key, std::optional<double>& dst) {
    if (!j.contains(key)) return;
    dst = number(j[key], ptr + "/" + key);
    if (!(*dst > 0)) throw ConfigError(ptr + "/" + key, "must be positive");
  };
  opt("theta", p.theta);
  opt("a_theta", p.a_theta);
  opt("b_theta", p.b_theta);
  opt("nb_a", p.nb_a);
  opt("nb_q", p.nb_q);
  opt("a_eta", p.a_eta);
  opt("b_eta", p.b_eta);
  if (j.contains("alpha")) p.alpha = number(j["alpha"], ptr + "/alpha");
  if (j.contains("mu0_p")) p.mu0_p = number(j["mu0_p"], ptr + "/mu0_p");
  return p;
}

inline Json to_json(const PriorBlock& p) {
  Json j;
  j["type"] = p.type;
  if (p.type == "ABP") {
    j["M"] = p.max_size;
    if (p.a) j["a"] = *p.a;
    if (p.b) j["b"] = *p.b;
  }
  if (p.type == "ABP" || p.type == "EPP") {
    j["pi"] = p.pi;
    j["cv"] = p.cv;
  }
  if (p.theta) j["theta"] = *p.theta;
  if (p.a_theta) j["a_theta"] = *p.a_theta;
  if (p.b_theta) j["b_theta"] = *p.b_theta;
  if (p.nb_a) j["nb_a"] = *p.nb_a;
  if (p.nb_q) j["nb_q"] = *p.nb_q;
  if (p.a_eta) j["a_eta"] = *p.a_eta;
  if (p.b_eta) j["b_eta"] = *p.b_eta;
  if (p.type == "NBDP") {
    j["alpha"] = p.alpha;
    j["mu0_p"] = p.mu0_p;
  }
  return j;
}

inline SamplerConfig parse_sampler(const Json& j, const std::string& ptr = "/sampler") {
  using namespace detail;
  check_keys(j, ptr, {"burn_in", "samples", "thin", "seed", "network_kernel", "rw_target_accept", "sghmc",
                      "record_scan_order", "xi_move"});
  SamplerConfig c;
  if (j.contains("burn_in")) c.burn_in = integer(j["burn_in"], ptr + "/burn_in");
  if (j.contains("samples")) c.samples = integer(j["samples"], ptr + "/samples");
  if (j.contains("thin")) c.thin = integer(j["thin"], ptr + "/thin");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError(ptr + "/seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (c.burn_in < 0) throw ConfigError(ptr + "/burn_in", "must be non-negative");
  if (c.samples < 1) throw ConfigError(ptr + "/samples", "must be positive");
  if (c.thin < 1) throw ConfigError(ptr + "/thin", "must be positive");
  if (j.contains("network_kernel")) {
    const std::string k = text(j["network_kernel"], ptr + "/network_kernel");
    if (k == "RW") c.network_kernel = NetworkKernel::RW;
    else if (k == "SGHMC") c.network_kernel = NetworkKernel::SGHMC;
    else throw ConfigError(ptr + "/network_kernel", "expected \"RW\" or \"SGHMC\"");
  }
  if (j.contains("rw_target_accept")) {
    c.rw_target_accept = number(j["rw_target_accept"], ptr + "/rw_target_accept");
    if (!(c.rw_target_accept > 0 && c.rw_target_accept < 1))
      throw ConfigError(ptr + "/rw_target_accept", "must lie in (0, 1)");
  }
  if (j.contains("sghmc")) {
    const std::string sp = ptr + "/sghmc";
    const Json& s = j["sghmc"];
    check_keys(s, sp, {"epsilon", "L", "minibatch_frac", "mass"});
    if (s.contains("epsilon")) c.sghmc.epsilon = number(s["epsilon"], sp + "/epsilon");
    if (s.contains("L")) c.sghmc.leapfrog = static_cast<int>(integer(s["L"], sp + "/L"));
    if (s.contains("minibatch_frac")) c.sghmc.minibatch_frac = number(s["minibatch_frac"], sp + "/minibatch_frac");
    if (s.contains("mass")) c.sghmc.mass = number(s["mass"], sp + "/mass");
    if (!(c.sghmc.epsilon > 0)) throw ConfigError(sp + "/epsilon", "must be positive");
    if (c.sghmc.leapfrog < 1) throw ConfigError(sp + "/L", "must be at least 1");
    if (!(c.sghmc.minibatch_frac > 0 && c.sghmc.minibatch_frac <= 1))
      throw ConfigError(sp + "/minibatch_frac", "must lie in (0, 1]");
    if (!(c.sghmc.mass > 0)) throw ConfigError(sp + "/mass", "must be positive");
  }
  if (j.contains("record_scan_order")) {
    const std::string k = text(j["record_scan_order"], ptr + "/record_scan_order");
    if (k == "sequential") c.record_scan_order = ScanOrder::Sequential;
    else if (k == "shuffled") c.record_scan_order = ScanOrder::Shuffled;
    else throw ConfigError(ptr + "/record_scan_order", "expected \"sequential\" or \"shuffled\"");
  }
  if (j.contains("xi_move")) {
    const std::string k = text(j["xi_move"], ptr + "/xi_move");
    if (k == "mh") c.xi_move = XiMove::Metropolized;
    else if (k == "gibbs") c.xi_move = XiMove::Gibbs;
    else throw ConfigError(ptr + "/xi_move", "expected \"mh\" or \"gibbs\"");
  }
  return c;
}

inline Json to_json(const SamplerConfig& c) {
  Json j;
  j["burn_in"] = c.burn_in;
  j["samples"] = c.samples;
  j["thin"] = c.thin;
  j["seed"] = c.seed;
  j["network_kernel"] = c.network_kernel == NetworkKernel::RW ? "RW" : "SGHMC";
  j["rw_target_accept"] = c.rw_target_accept;
  j["sghmc"] = {{"epsilon", c.sghmc.epsilon},
                {"L", c.sghmc.leapfrog},
                {"minibatch_frac", c.sghmc.minibatch_frac},
                {"mass", c.sghmc.mass}};
  j["record_scan_order"] = c.record_scan_order == ScanOrder::Shuffled ? "shuffled" : "sequential";
  j["xi_move"] = c.xi_move == XiMove::Metropolized ? "mh" : "gibbs";
  return j;
}

inline ModelBlock parse_model(const Json& j, const std::string& ptr = "/model") {
  using namespace detail;
  check_keys(j, ptr, {"K", "fields", "omega", "a_sigma", "b_sigma", "alpha", "a", "b"});
  ModelBlock m;
  if (j.contains("K")) {
    const long k = integer(j["K"], ptr + "/K");
    if (k < 1) throw ConfigError(ptr + "/K", "must be at least 1");
    m.dim = static_cast<std::size_t>(k);
  }
  if (j.contains("fields")) {
    if (!j["fields"].is_array()) throw ConfigError(ptr + "/fields", "expected an array of column names");
    for (std::size_t k = 0; k < j["fields"].size(); ++k)
      m.fields.push_back(text(j["fields"][k], ptr + "/fields/" + std::to_string(k)));
  }
  auto pos = [&](const char* key, double& dst) {
    dst = number(j[key], ptr + "/" + key);
    if (!(dst > 0)) throw ConfigError(ptr + "/" + key, "must be positive");
  };
  auto opt = [&](const char* key, std::optional<double>& dst) {
    if (!j.contains(key)) return;
    double v;
    pos(key, v);
    dst = v;
  };
  opt("omega", m.omega);
  opt("a_sigma", m.a_sigma);
  opt("b_sigma", m.b_sigma);
  if (j.contains("alpha")) pos("alpha", m.alpha);
  if (j.contains("a")) pos("a", m.a);
  if (j.contains("b")) pos("b", m.b);
  return m;
}

inline Json to_json(const ModelBlock& m) {
  Json j;
  j["K"] = m.dim;
  j["fields"] = m.fields;
  if (m.omega) j["omega"] = *m.omega;
  if (m.a_sigma) j["a_sigma"] = *m.a_sigma;
  if (m.b_sigma) j["b_sigma"] = *m.b_sigma;
  j["alpha"] = m.alpha;
  j["a"] = m.a;
  j["b"] = m.b;
  return j;
}

inline RunConfig parse_config(const Json& j) {
  using namespace detail;
  check_keys(j, "", {"prior", "sampler", "model", "sweep"});
  RunConfig c;
  if (j.contains("prior")) c.prior = parse_prior(j["prior"]);
  if (j.contains("sampler")) c.sampler = parse_sampler(j["sampler"]);
  if (j.contains("model")) c.model = parse_model(j["model"]);
  if (j.contains("sweep")) {
    if (!j["sweep"].is_array()) throw ConfigError("/sweep", "expected an array of {a, b} objects");
    for (std::size_t k = 0; k < j["sweep"].size(); ++k) {
      const std::string p = "/sweep/" + std::to_string(k);
      const Json& e = j["sweep"][k];
      check_keys(e, p, {"a", "b"});
      const double a = number(member(e, "a", p), p + "/a");
      const double b = number(member(e, "b", p), p + "/b");
      if (!(a > 0)) throw ConfigError(p + "/a", "must be positive");
      if (!(b > 0)) throw ConfigError(p + "/b", "must be positive");
      c.sweep.push_back({a, b});
    }
  }
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline Json to_json(const RunConfig& c) {
  Json j;
  j["prior"] = to_json(c.prior);
  j["sampler"] = to_json(c.sampler);
  j["model"] = to_json(c.model);
  if (!c.sweep.empty()) {
    Json arr = Json::array();
    for (const auto& s : c.sweep) arr.push_back({{"a", s.a}, {"b", s.b}});
    j["sweep"] = arr;
  }
  return j;
}

inline std::string dump(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

// FNV-1a over the canonical serialization.
inline std::uint64_t config_hash(const RunConfig& c, const std::string& extra = "") {
  const std::string s = dump(c) + extra;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace microlink
