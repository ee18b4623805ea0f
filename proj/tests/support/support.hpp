// Apache License, Version 2.0, refer to LICENSE.txt
//
// Shared test harnesses: exhaustive partition enumeration, the
// getting-it-right simulator, finite-difference gradient checks and the
// leapfrog energy-error slope. Used by the unit tests and the acceptance
// binary.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "microlink/microlink.hpp"

namespace mltest {

// Calls f on every set partition of {0..n-1} as a restricted growth string.
inline void for_each_partition(std::size_t n, const std::function<void(const microlink::LinkageState&)>& f) {
  std::vector<int> a(n, 0), m(n, 0);
  if (n == 0) return;
  for (;;) {
    f(microlink::LinkageState::from_labels(a));
    std::size_t i = n - 1;
    while (i > 0 && a[i] > m[i - 1]) --i;
    if (i == 0) return;
    ++a[i];
    for (std::size_t j = i; j < n; ++j) {
      if (j > i) a[j] = 0;
      m[j] = std::max(m[j - 1], a[j]);
    }
  }
}

inline std::vector<microlink::LinkageState> all_partitions(std::size_t n) {
  std::vector<microlink::LinkageState> out;
  for_each_partition(n, [&](const microlink::LinkageState& xi) { out.push_back(xi); });
  return out;
}

// ---------------------------------------------------------------------------
// Getting-it-right

// Small model used by the getting-it-right and gradient checks: L fields
// with 3 categories each.
inline microlink::HyperParams small_hypers(std::size_t fields = 2, std::size_t dim = 2) {
  microlink::HyperParams h;
  h.omega = 1.0;
  h.a_sigma = 3.0;
  h.b_sigma = 2.0;
  h.a_dist = 2.0;
  h.b_dist = 8.0;
  h.dim = dim;
  h.alpha_field.assign(fields, std::vector<double>(3, 1.0));
  return h;
}

inline const std::vector<std::string>& geweke_stat_names() {
  static const std::vector<std::string> names = {"N", "beta", "sigma2", "sum_w"};
  return names;
}

inline std::vector<double> geweke_stats(const microlink::ChainState& s) {
  double sum_w = 0.0;
  for (auto w : s.latent.distorted) sum_w += w;
  return {static_cast<double>(s.xi.clusters()), s.latent.beta, s.latent.sigma2, sum_w};
}

struct GewekeStat {
  std::string name;
  double mean_marginal, se_marginal;
  double mean_successive, se_successive;
  double z() const {
    return (mean_marginal - mean_successive) / std::sqrt(se_marginal * se_marginal + se_successive * se_successive);
  }
};

// Mean and standard error; batch means with `batches` batches when > 0,
// otherwise the iid formula.
inline std::pair<double, double> mean_se(const std::vector<double>& xs, std::size_t batches = 0) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x / n;
  if (batches == 0) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
  }
  const std::size_t len = xs.size() / batches;
  double ss = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    double m = 0.0;
    for (std::size_t k = b * len; k < (b + 1) * len; ++k) m += xs[k] / static_cast<double>(len);
    ss += (m - mean) * (m - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches))};
}

struct GewekeOptions {
  std::size_t records = 8;
  std::size_t draws = 10000;
  std::size_t sweeps_per_draw = 2;
  std::size_t batches = 50;
  microlink::NetworkKernel kernel = microlink::NetworkKernel::RW;
  double rw_beta = 0.5;
  double rw_u = 0.8;
  double sghmc_epsilon = 0.05;
  int sghmc_leapfrog = 10;
  std::uint64_t seed = 1;
};

// Marginal-conditional draws from the joint prior versus a
// successive-conditional chain alternating sweeps and data regeneration.
inline std::vector<GewekeStat> geweke(const microlink::PriorSpec& prior, const GewekeOptions& o) {
  using namespace microlink;
  const HyperParams h = small_hypers();
  const std::vector<int> domains(h.alpha_field.size(), 3);
  Rng rng(o.seed);
  const std::size_t k_stats = geweke_stat_names().size();
  std::vector<std::vector<double>> marginal(k_stats), successive(k_stats);
  for (std::size_t d = 0; d < o.draws; ++d) {
    const auto g = geweke_stats(draw_joint(prior, o.records, h, domains, rng).state);
    for (std::size_t k = 0; k < k_stats; ++k) marginal[k].push_back(g[k]);
  }
  JointDraw start = draw_joint(prior, o.records, h, domains, rng);
  SamplerConfig cfg;
  cfg.network_kernel = o.kernel;
  cfg.sghmc.epsilon = o.sghmc_epsilon;
  cfg.sghmc.leapfrog = o.sghmc_leapfrog;
  cfg.sghmc.minibatch_frac = 1.0;
  Sampler sampler(start.table, start.net, h, start.state.prior, cfg);
  sampler.set_state(start.state);
  sampler.set_rw_scales(o.rw_beta, o.rw_u);
  for (std::size_t d = 0; d < o.draws; ++d) {
    for (std::size_t t = 0; t < o.sweeps_per_draw; ++t) sampler.gibbs_sweep(rng, false);
    const ChainState s = sampler.state();
    sampler.set_table(simulate_profiles(s.xi, s.latent, domains, rng));
    sampler.set_network(simulate_network(s.xi, s.latent.beta, s.latent.positions, s.latent.dim, rng));
    const auto g = geweke_stats(s);
    for (std::size_t k = 0; k < k_stats; ++k) successive[k].push_back(g[k]);
  }
  std::vector<GewekeStat> out;
  for (std::size_t k = 0; k < k_stats; ++k) {
    const auto [m1, s1] = mean_se(marginal[k]);
    const auto [m2, s2] = mean_se(successive[k], o.batches);
    out.push_back({geweke_stat_names()[k], m1, s1, m2, s2});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradients and the leapfrog integrator

// A random network state at `records` records with well-separated clusters.
inline microlink::JointDraw random_network_state(std::size_t records, microlink::Rng& rng) {
  using namespace microlink;
  HyperParams h = small_hypers(1);
  h.omega = 3.0;
  h.b_sigma = 8.0;
  const std::vector<int> domains = {3};
  return draw_joint(make_abp(2, 0.5, 0.5), records, h, domains, rng);
}

inline microlink::Sampler sampler_for(const microlink::JointDraw& jd, microlink::SamplerConfig cfg = {}) {
  microlink::HyperParams h = small_hypers(1);
  h.omega = 3.0;
  h.b_sigma = 8.0;
  microlink::Sampler s(jd.table, jd.net, h, jd.state.prior, cfg);
  s.set_state(jd.state);
  return s;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

struct GradientCheck {
  double max_rel_beta = 0.0;
  double max_rel_u = 0.0;
};

// Analytic gradients of the beta and u_n potentials against central
// differences at `states` random states.
inline GradientCheck gradient_check(std::size_t states, std::size_t records, std::uint64_t seed) {
  using namespace microlink;
  Rng rng(seed);
  GradientCheck out;
  for (std::size_t t = 0; t < states; ++t) {
    const JointDraw jd = random_network_state(records, rng);
    Sampler s = sampler_for(jd);
    const auto pairs = s.all_pairs();
    const double beta = jd.state.latent.beta;
    const double hb = 1e-5 * std::max(1.0, std::abs(beta));
    const double g = s.potential_and_grad_beta(pairs, 1.0, beta).grad[0];
    const double fd = (s.potential_and_grad_beta(pairs, 1.0, beta + hb).value -
                       s.potential_and_grad_beta(pairs, 1.0, beta - hb).value) /
                      (2.0 * hb);
    out.max_rel_beta = std::max(out.max_rel_beta, relative_error(g, fd));
    for (std::size_t n = 0; n < jd.state.xi.clusters(); ++n) {
      const auto cp = s.cluster_pairs(n);
      const auto pos = s.latent().position(n);
      std::vector<double> u(pos.begin(), pos.end());
      const auto grad = s.potential_and_grad_u(cp, nullptr, 1.0, u).grad;
      for (std::size_t k = 0; k < u.size(); ++k) {
        const double hu = 1e-5 * std::max(1.0, std::abs(u[k]));
        std::vector<double> up = u, dn = u;
        up[k] += hu;
        dn[k] -= hu;
        const double fdu = (s.potential_and_grad_u(cp, nullptr, 1.0, up).value -
                            s.potential_and_grad_u(cp, nullptr, 1.0, dn).value) /
                           (2.0 * hu);
        out.max_rel_u = std::max(out.max_rel_u, relative_error(grad[k], fdu));
      }
    }
  }
  return out;
}

struct IntegratorSlope {
  std::vector<double> epsilons;
  std::vector<double> mean_abs_dh_beta;
  std::vector<double> mean_abs_dh_u;
  double slope_beta = 0.0;
  double slope_u = 0.0;
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]) / static_cast<double>(x.size());
    my += std::log(y[k]) / static_cast<double>(x.size());
  }
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
    sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
  }
  return sxy / sxx;
}

// Full-batch |Delta H| of one trajectory of fixed length `horizon` as the
// step size shrinks, averaged over `repeats` momentum draws.
inline IntegratorSlope integrator_slope(std::uint64_t seed, std::vector<double> epsilons = {1e-3, 5e-4, 2.5e-4},
                                        double horizon = 0.05, int repeats = 20) {
  using namespace microlink;
  Rng state_rng(seed);
  const JointDraw jd = random_network_state(20, state_rng);
  IntegratorSlope out;
  out.epsilons = epsilons;
  for (double eps : epsilons) {
    SamplerConfig cfg;
    cfg.network_kernel = NetworkKernel::SGHMC;
    cfg.sghmc.epsilon = eps;
    cfg.sghmc.leapfrog = static_cast<int>(std::lround(horizon / eps));
    cfg.sghmc.minibatch_frac = 1.0;
    Sampler s = sampler_for(jd, cfg);
    const auto pairs = s.all_pairs();
    const auto cp = s.cluster_pairs(0);
    double sum_b = 0.0, sum_u = 0.0;
    for (int r = 0; r < repeats; ++r) {
      Rng rng(seed * 1000 + static_cast<std::uint64_t>(r));
      AcceptCounter counter;
      double dh = 0.0;
      s.hamiltonian_step(
          {jd.state.latent.beta},
          [&](const std::vector<double>& th, bool v) { return s.potential_and_grad_beta(pairs, 1.0, th[0], v); },
          rng, counter, &dh);
      sum_b += std::abs(dh);
      const auto pos = s.latent().position(0);
      s.hamiltonian_step(
          std::vector<double>(pos.begin(), pos.end()),
          [&](const std::vector<double>& th, bool v) { return s.potential_and_grad_u(cp, nullptr, 1.0, th, v); },
          rng, counter, &dh);
      sum_u += std::abs(dh);
    }
    out.mean_abs_dh_beta.push_back(sum_b / repeats);
    out.mean_abs_dh_u.push_back(sum_u / repeats);
  }
  out.slope_beta = loglog_slope(out.epsilons, out.mean_abs_dh_beta);
  out.slope_u = loglog_slope(out.epsilons, out.mean_abs_dh_u);
  return out;
}

}  // namespace mltest
