// Apache License, Version 2.0, refer to LICENSE.txt
//
// Synthetic data: latent distance networks, hit-miss profiles, a replica of
// the RLdata500 birth-date fields, and joint draws of parameters and data
// from the full model.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "microlink/errors.hpp"
#include "microlink/linkage.hpp"
#include "microlink/model.hpp"
#include "microlink/priors.hpp"
#include "microlink/random.hpp"
#include "microlink/sampler.hpp"

namespace microlink {

struct ScenarioSpec {
  double beta = 10.0;
  double sigma2 = 178.0;
  std::size_t dim = 2;

  void validate() const {
    MICROLINK_REQUIRE(sigma2 > 0, "sigma2 must be positive");
    MICROLINK_REQUIRE(dim >= 1, "dimension must be at least 1");
  }
};

inline ScenarioSpec scenario(int which) {
  switch (which) {
    case 1:
      return {10.0, 178.0, 2};
    case 2:
      return {10.0, 278.0, 2};
    default:
      throw std::invalid_argument("unknown scenario " + std::to_string(which) + " (expected 1 or 2)");
  }
}

// Every record pair i < j gets an edge w.p. expit(beta - ||u_{xi_i} - u_{xi_j}||).
inline Network simulate_network(const LinkageState& xi, double beta, std::span<const double> positions,
                                std::size_t dim, Rng& rng) {
  MICROLINK_REQUIRE(positions.size() == xi.clusters() * dim, "positions must be N x K");
  const std::size_t n = xi.records();
  const std::size_t nc = xi.clusters();
  std::vector<double> prob(nc * nc);
  for (std::size_t a = 0; a < nc; ++a)
    for (std::size_t b = 0; b < nc; ++b)
      prob[a * nc + b] =
          expit(beta - (a == b ? 0.0 : distance(positions.subspan(a * dim, dim), positions.subspan(b * dim, dim))));
  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() <
          prob[static_cast<std::size_t>(xi.label(i)) * nc + static_cast<std::size_t>(xi.label(j))])
        edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return Network(n, std::move(edges));
}

// Draws u_n ~ N(0, sigma2 I_K) per entity and then the edges. Entity
// positions are returned through `positions_out` when given.
inline Network synth_network(const LinkageState& truth, const ScenarioSpec& scen, Rng& rng,
                             std::vector<double>* positions_out = nullptr) {
  scen.validate();
  std::vector<double> u(truth.clusters() * scen.dim);
  const double sd = std::sqrt(scen.sigma2);
  for (double& v : u) v = rng.normal(0.0, sd);
  Network net = simulate_network(truth, scen.beta, u, scen.dim, rng);
  if (positions_out != nullptr) *positions_out = std::move(u);
  return net;
}

// Entity values pi_{n,l} ~ Cat(theta_l); each record copies them and each
// cell is independently redrawn from Cat(theta_l) with probability
// `distortion`. theta_l ~ Dirichlet(1) unless `field_probs` is supplied.
inline RecordTable synth_profiles(const LinkageState& truth, std::span<const int> domains,
                                  double distortion, Rng& rng,
                                  const std::vector<std::vector<double>>* field_probs = nullptr) {
  MICROLINK_REQUIRE(distortion >= 0.0 && distortion <= 1.0, "distortion must lie in [0, 1]");
  const std::size_t l_count = domains.size();
  std::vector<std::vector<double>> theta;
  if (field_probs != nullptr) {
    MICROLINK_REQUIRE(field_probs->size() == l_count, "one probability vector per field");
    theta = *field_probs;
  } else {
    for (int m : domains) {
      const std::vector<double> ones(static_cast<std::size_t>(m), 1.0);
      theta.push_back(rng.dirichlet(ones));
    }
  }
  std::vector<int> pi(truth.clusters() * l_count);
  for (std::size_t c = 0; c < truth.clusters(); ++c)
    for (std::size_t l = 0; l < l_count; ++l)
      pi[c * l_count + l] = static_cast<int>(rng.categorical(theta[l]));
  std::vector<int> codes(truth.records() * l_count);
  for (std::size_t i = 0; i < truth.records(); ++i)
    for (std::size_t l = 0; l < l_count; ++l)
      codes[i * l_count + l] = rng.bernoulli(distortion)
                                   ? static_cast<int>(rng.categorical(theta[l]))
                                   : pi[static_cast<std::size_t>(truth.label(i)) * l_count + l];
  return RecordTable(truth.records(), std::vector<int>(domains.begin(), domains.end()), std::move(codes));
}

struct Dataset {
  RecordTable table;
  std::optional<Network> net;
  std::optional<LinkageState> truth;
  std::vector<std::string> field_names;
  std::vector<std::vector<std::string>> codebooks;  // code -> label per field
};

// Stand-in for RLdata500: 450 entities, 50 of them recorded twice, fields
// year/month/day of birth. Each second copy carries exactly one error in one
// of seven underlying fields (two per name, three date parts), so only the
// date errors are visible here. Records are shuffled.
inline Dataset rldata_replica(Rng& rng, std::size_t entities = 450, std::size_t duplicated = 50) {
  MICROLINK_REQUIRE(duplicated <= entities, "cannot duplicate more entities than exist");
  const int years = 90;  // 1920..2009
  const std::vector<int> domains = {years, 12, 31};
  std::vector<std::array<int, 3>> entity(entities);
  for (auto& e : entity) {
    e[0] = static_cast<int>(rng.index(static_cast<std::size_t>(years)));
    e[1] = static_cast<int>(rng.index(12));
    e[2] = static_cast<int>(rng.index(31));
  }
  std::vector<std::size_t> order(entities);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::pair<int, std::array<int, 3>>> recs;
  for (std::size_t n = 0; n < entities; ++n) recs.push_back({static_cast<int>(n), entity[n]});
  for (std::size_t k = 0; k < duplicated; ++k) {
    const std::size_t n = order[k];
    auto copy = entity[n];
    const std::size_t field = rng.index(7);
    if (field >= 4) {
      const std::size_t l = field - 4;
      const int m = domains[l];
      int v;
      do {
        v = static_cast<int>(rng.index(static_cast<std::size_t>(m)));
      } while (v == copy[l]);
      copy[l] = v;
    }
    recs.push_back({static_cast<int>(n), copy});
  }
  rng.shuffle(recs);
  // Re-encode on the observed values so every code is used.
  Dataset out;
  out.field_names = {"by", "bm", "bd"};
  const std::size_t n_rec = recs.size();
  std::vector<int> codes(n_rec * 3);
  std::vector<int> domain_sizes(3);
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<int> seen;
    for (const auto& r : recs) seen.push_back(r.second[l]);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    domain_sizes[l] = static_cast<int>(seen.size());
    std::vector<std::string> book;
    const int offset = l == 0 ? 1920 : 1;
    for (int v : seen) book.push_back(std::to_string(v + offset));
    out.codebooks.push_back(std::move(book));
    for (std::size_t i = 0; i < n_rec; ++i)
      codes[i * 3 + l] = static_cast<int>(std::lower_bound(seen.begin(), seen.end(), recs[i].second[l]) - seen.begin());
  }
  out.table = RecordTable(n_rec, domain_sizes, std::move(codes));
  std::vector<int> ids;
  for (const auto& r : recs) ids.push_back(r.first + 1);
  out.truth = LinkageState::from_labels(ids);
  return out;
}

// ---------------------------------------------------------------------------
// Joint draws from the full model (for getting-it-right tests)

// Draws beta, sigma2, u, theta, psi, pi and w from their priors given xi.
inline LatentState draw_latent_from_prior(const LinkageState& xi, const HyperParams& h,
                                          std::span<const int> domains, Rng& rng) {
  h.validate(domains);
  LatentState lat;
  lat.dim = h.dim;
  lat.beta = rng.normal(0.0, h.omega);
  lat.sigma2 = rng.inv_gamma(h.a_sigma, h.b_sigma);
  lat.positions.resize(xi.clusters() * h.dim);
  for (double& v : lat.positions) v = rng.normal(0.0, std::sqrt(lat.sigma2));
  const std::size_t l_count = domains.size();
  for (std::size_t l = 0; l < l_count; ++l) {
    lat.field_probs.push_back(rng.dirichlet(h.alpha_field[l]));
    for (double& t : lat.field_probs.back()) t = std::max(t, 1e-300);
    lat.distortion_probs.push_back(std::clamp(rng.beta(h.a_dist, h.b_dist), 1e-300, 1.0 - 1e-16));
  }
  lat.true_values.resize(xi.clusters() * l_count);
  for (std::size_t c = 0; c < xi.clusters(); ++c)
    for (std::size_t l = 0; l < l_count; ++l)
      lat.true_values[c * l_count + l] = static_cast<int>(rng.categorical(lat.field_probs[l]));
  lat.distorted.resize(xi.records() * l_count);
  for (std::size_t i = 0; i < xi.records(); ++i)
    for (std::size_t l = 0; l < l_count; ++l)
      lat.distorted[i * l_count + l] = rng.bernoulli(lat.distortion_probs[l]) ? 1 : 0;
  return lat;
}

// p_{i,l} = pi_{xi_i,l} when w_{i,l} = 0, otherwise a fresh Cat(theta_l) draw.
inline RecordTable simulate_profiles(const LinkageState& xi, const LatentState& lat,
                                     std::span<const int> domains, Rng& rng) {
  const std::size_t l_count = domains.size();
  std::vector<int> codes(xi.records() * l_count);
  for (std::size_t i = 0; i < xi.records(); ++i)
    for (std::size_t l = 0; l < l_count; ++l)
      codes[i * l_count + l] = lat.is_distorted(i, l)
                                   ? static_cast<int>(rng.categorical(lat.field_probs[l]))
                                   : lat.true_value(static_cast<std::size_t>(xi.label(i)), l);
  return RecordTable(xi.records(), std::vector<int>(domains.begin(), domains.end()), std::move(codes));
}

struct JointDraw {
  ChainState state;
  RecordTable table;
  Network net;
};

// (phi, xi) from the partition prior, the remaining parameters from their
// priors, then profiles and network from the likelihood.
inline JointDraw draw_joint(const PriorSpec& prior, std::size_t records, const HyperParams& h,
                            std::span<const int> domains, Rng& rng) {
  PriorDraw pd = prior_sample(prior, records, rng, HyperMode::FromHyperprior);
  LatentState lat = draw_latent_from_prior(pd.xi, h, domains, rng);
  RecordTable table = simulate_profiles(pd.xi, lat, domains, rng);
  Network net = simulate_network(pd.xi, lat.beta, lat.positions, lat.dim, rng);
  return {ChainState{pd.xi, std::move(lat), std::move(pd.prior)}, std::move(table), std::move(net)};
}

}  // namespace microlink
