// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "support.hpp"

using namespace microlink;

namespace {

// A one-record, one-field sampler whose latent state is set by hand.
Sampler single_cell_sampler(int domain, double psi) {
  HyperParams h = mltest::small_hypers(1);
  h.alpha_field = {std::vector<double>(static_cast<std::size_t>(domain), 1.0)};
  Sampler s(RecordTable(1, {domain}, {0}), std::nullopt, h, UpPrior{}, SamplerConfig{});
  ChainState st;
  st.xi = LinkageState::singletons(1);
  st.latent.dim = 2;
  st.latent.positions = {0.0, 0.0};
  st.latent.true_values = {0};
  st.latent.field_probs = {std::vector<double>(static_cast<std::size_t>(domain), 1.0 / domain)};
  st.latent.distortion_probs = {psi};
  st.latent.distorted = {0};
  st.prior = UpPrior{};
  s.set_state(st);
  return s;
}

// Replica-style data at desk-test scale with a Scenario-1 network.
Dataset small_replica(std::size_t entities, std::size_t duplicated, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds = rldata_replica(rng, entities, duplicated);
  ds.net = synth_network(*ds.truth, scenario(1), rng);
  return ds;
}

RunConfig quick_config(long burn_in, long samples, std::uint64_t seed) {
  RunConfig cfg;
  cfg.prior.type = "ABP";
  cfg.prior.pi = 0.5;
  cfg.sampler.burn_in = burn_in;
  cfg.sampler.samples = samples;
  cfg.sampler.seed = seed;
  return cfg;
}

using Freq = std::map<std::vector<int>, double>;

double tv_distance(const Freq& a, const Freq& b) {
  double tv = 0.0;
  for (const auto& [k, p] : a) {
    const auto it = b.find(k);
    tv += std::abs(p - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, q] : b)
    if (!a.count(k)) tv += q;
  return 0.5 * tv;
}

std::vector<int> labels_of(const LinkageState& xi) { return {xi.labels().begin(), xi.labels().end()}; }

}  // namespace

TEST(ConjugateUpdates, DistortionIndicatorProbability) {
  EXPECT_NEAR(distortion_probability(0.01, 1.0 / 12.0), (0.01 / 12) / ((0.01 / 12) + 0.99), 1e-15);
  EXPECT_NEAR(distortion_probability(0.01, 1.0 / 12.0), 0.000841, 5e-7);
  Sampler s = single_cell_sampler(12, 0.01);
  Rng rng(1);
  const int draws = 2000000;
  long hits = 0;
  for (int d = 0; d < draws; ++d) {
    s.resample_w(0, 0, 0, rng);
    hits += s.latent().is_distorted(0, 0) ? 1 : 0;
  }
  const double p = 0.01 / 12 / (0.01 / 12 + 0.99);
  EXPECT_NEAR(hits / static_cast<double>(draws), p, 4.0 * std::sqrt(p / draws));
}

TEST(ConjugateUpdates, DistortionForcedOnMismatch) {
  Sampler s = single_cell_sampler(12, 0.01);
  s.latent().true_value(0, 0) = 5;
  Rng rng(2);
  s.resample_w(0, 0, 0, rng);
  EXPECT_TRUE(s.latent().is_distorted(0, 0));
}

TEST(ConjugateUpdates, DistortionProbabilityPosterior) {
  const BetaParams p = distortion_posterior(1.0, 99.0, 500, 5);
  EXPECT_DOUBLE_EQ(p.a, 6.0);
  EXPECT_DOUBLE_EQ(p.b, 594.0);
  const BetaParams none = distortion_posterior(1.0, 99.0, 500, 0);
  EXPECT_DOUBLE_EQ(none.b, 599.0);
}

TEST(ConjugateUpdates, AbpLevelPosterior) {
  const BetaParams p = abp_level_posterior(3.0, 12.0, 50, 250);
  EXPECT_DOUBLE_EQ(p.a, 53.0);
  EXPECT_DOUBLE_EQ(p.b, 212.0);
}

TEST(ConjugateUpdates, Sigma2MonteCarloMean) {
  Rng rng(3);
  const JointDraw jd = mltest::random_network_state(20, rng);
  Sampler s = mltest::sampler_for(jd);
  const auto& lat = s.latent();
  const InvGammaParams post =
      sigma2_posterior(s.hypers().a_sigma, s.hypers().b_sigma, jd.state.xi.clusters(), lat.dim, lat.positions);
  double ss = 0.0;
  for (double v : lat.positions) ss += v * v;
  EXPECT_DOUBLE_EQ(post.scale, s.hypers().b_sigma + 0.5 * ss);
  const int draws = 100000;
  double mean = 0.0;
  for (int d = 0; d < draws; ++d) {
    s.update_sigma2(rng);
    mean += s.latent().sigma2 / draws;
  }
  const double expect = post.scale / (post.shape - 1.0);
  EXPECT_NEAR(mean / expect, 1.0, 0.01);
}

TEST(ConjugateUpdates, Sigma2ZeroPositions) {
  const std::vector<double> zeros(6, 0.0);
  const InvGammaParams p = sigma2_posterior(6.0, 2.0, 3, 2, zeros);
  EXPECT_DOUBLE_EQ(p.shape, 9.0);
  EXPECT_DOUBLE_EQ(p.scale, 2.0);
  // More clusters, larger shape, tighter conditional.
  const std::vector<double> more(12, 0.0);
  EXPECT_GT(sigma2_posterior(6.0, 2.0, 6, 2, more).shape, p.shape);
}

// The auxiliary-variable concentration update against the exact
// conditional p(theta | N) ∝ Gamma(theta; a, b) theta^N Gamma(theta) / Gamma(theta + I)
// evaluated by quadrature.
TEST(HyperUpdates, EppConcentrationMatchesQuadrature) {
  const double a = 2.0, b = 1.0;
  const std::size_t clusters = 20, records = 50;
  auto log_target = [&](double t) {
    return (a - 1.0) * std::log(t) - b * t + static_cast<double>(clusters) * std::log(t) + std::lgamma(t) -
           std::lgamma(t + static_cast<double>(records));
  };
  const double hi = 200.0;
  const std::size_t grid = 200000;
  const double h = hi / grid;
  std::vector<double> cdf(grid + 1, 0.0);
  double peak = -1e300;
  for (std::size_t k = 1; k <= grid; ++k) peak = std::max(peak, log_target(k * h));
  for (std::size_t k = 1; k <= grid; ++k) {
    const double left = k == 1 ? 0.0 : std::exp(log_target((k - 1) * h) - peak);
    cdf[k] = cdf[k - 1] + 0.5 * h * (left + std::exp(log_target(k * h) - peak));
  }
  for (double& c : cdf) c /= cdf.back();

  EppPrior p{10.0, a, b};
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) Sampler::epp_update_theta(p, clusters, records, rng);
  std::vector<double> draws;
  for (int t = 0; t < 100000; ++t) {
    Sampler::epp_update_theta(p, clusters, records, rng);
    draws.push_back(p.theta);
  }
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  const double n = static_cast<double>(draws.size());
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const auto idx = std::min(grid, static_cast<std::size_t>(draws[k] / h));
    ks = std::max({ks, std::abs(cdf[idx] - k / n), std::abs(cdf[idx] - (k + 1) / n)});
  }
  EXPECT_LT(ks, 0.02);
}

TEST(Geweke, AllPriorsRandomWalkKernel) {
  const std::vector<PriorSpec> priors = {UpPrior{}, EppPrior{2.0, 2.0, 1.0}, make_nbnb(8), make_nbdp(8),
                                         make_abp(2, 0.5, 0.5)};
  mltest::GewekeOptions o;
  o.seed = 17;
  for (const auto& prior : priors)
    for (const auto& st : mltest::geweke(prior, o)) EXPECT_LT(std::abs(st.z()), 3.0) << prior_name(prior) << " " << st.name;
}

TEST(Geweke, FullBatchHamiltonianKernel) {
  mltest::GewekeOptions o;
  o.seed = 23;
  o.kernel = NetworkKernel::SGHMC;
  for (const auto& st : mltest::geweke(make_abp(3, 0.5, 0.5), o)) EXPECT_LT(std::abs(st.z()), 3.0) << st.name;
}

// Likelihoods off: the chain's linkage draws follow the prior marginal of xi
// (hyperparameters integrated), compared with independent prior draws.
TEST(PriorOnlyChain, MatchesPriorSampler) {
  const std::size_t n = 5;
  const std::vector<PriorSpec> priors = {UpPrior{}, EppPrior{2.0, 2.0, 1.0}, make_nbnb(n), make_nbdp(n),
                                         make_abp(3, 0.5, 0.5)};
  const RecordTable tab(n, {3}, {0, 1, 2, 0, 1});
  for (const auto& prior : priors) {
    SamplerConfig cfg;
    cfg.prior_only = true;
    Sampler s(tab, std::nullopt, mltest::small_hypers(1), prior, cfg);
    Rng rng(31);
    s.initialize(rng);
    const int draws = 60000;
    Freq chain, direct;
    for (int d = 0; d < 500; ++d) s.gibbs_sweep(rng);
    for (int d = 0; d < draws; ++d) {
      s.gibbs_sweep(rng);
      chain[labels_of(s.partition().snapshot())] += 1.0 / draws;
      direct[labels_of(prior_sample(prior, n, rng, HyperMode::FromHyperprior).xi)] += 1.0 / draws;
    }
    EXPECT_LT(tv_distance(chain, direct), 0.04) << prior_name(prior);
  }
}

TEST(LinkageMove, IdenticalConnectedPairPrefersMerge) {
  const RecordTable tab(2, {12, 12}, {3, 7, 3, 7});
  const Network net(2, {{0, 1}});
  HyperParams h = mltest::small_hypers(2);
  h.alpha_field.assign(2, std::vector<double>(12, 1.0));
  Sampler s(tab, net, h, make_abp(2, 0.5, 0.5), SamplerConfig{});
  Rng rng(8);
  s.initialize(rng);
  long merged = 0;
  const int sweeps = 20000;
  for (int t = 0; t < sweeps; ++t) {
    s.gibbs_sweep(rng);
    merged += s.partition().clusters() == 1 ? 1 : 0;
  }
  EXPECT_GT(merged / static_cast<double>(sweeps), 0.5);
}

TEST(LinkageMove, UniformPriorCapsClustersAtTwo) {
  Rng rng(9);
  const Dataset ds = small_replica(40, 10, 9);
  SamplerConfig cfg;
  Sampler s(ds.table, ds.net, elicit_hyperparams(ds.table.records(), 2, ds.table.domain_sizes()), UpPrior{}, cfg);
  s.initialize(rng);
  for (int t = 0; t < 200; ++t) {
    s.gibbs_sweep(rng);
    ASSERT_LE(s.partition().snapshot().max_cluster_size(), 2u);
  }
}

TEST(Sweep, InvariantsHoldForEveryPrior) {
  const std::vector<PriorSpec> priors = {UpPrior{}, EppPrior{2.0, 2.0, 1.0}, make_nbnb(60), make_nbdp(60),
                                         make_abp(3, 0.5, 0.5)};
  const Dataset ds = small_replica(50, 10, 4);
  for (const auto kernel : {NetworkKernel::RW, NetworkKernel::SGHMC})
    for (const auto& prior : priors) {
      SamplerConfig cfg;
      cfg.network_kernel = kernel;
      Sampler s(ds.table, ds.net, elicit_hyperparams(ds.table.records(), 2, ds.table.domain_sizes()), prior, cfg);
      Rng rng(10);
      s.initialize(rng);
      s.check_invariants();
      for (int t = 0; t < 60; ++t) {
        s.gibbs_sweep(rng, t < 30);
        ASSERT_NO_THROW(s.check_invariants()) << prior_name(prior) << " sweep " << t;
      }
      for (const auto& [name, c] : s.counters()) {
        EXPECT_GE(c.rate(), 0.0);
        EXPECT_LE(c.rate(), 1.0);
      }
    }
}

TEST(Sweep, FuzzedStartsKeepInvariants) {
  Rng rng(77);
  const std::vector<PriorSpec> priors = {EppPrior{2.0, 2.0, 1.0}, make_nbnb(12), make_abp(3, 0.5, 0.5)};
  for (int trial = 0; trial < 30; ++trial) {
    const PriorSpec& prior = priors[static_cast<std::size_t>(trial) % priors.size()];
    HyperParams h = mltest::small_hypers(2);
    const std::vector<int> domains(2, 3);
    const JointDraw jd = draw_joint(prior, 12, h, domains, rng);
    SamplerConfig cfg;
    cfg.xi_move = trial % 2 ? XiMove::Gibbs : XiMove::Metropolized;
    Sampler s(jd.table, jd.net, h, jd.state.prior, cfg);
    s.set_state(jd.state);
    for (int t = 0; t < 20; ++t) {
      s.gibbs_sweep(rng);
      ASSERT_NO_THROW(s.check_invariants());
    }
  }
}

TEST(Sweep, DeterministicGivenSeed) {
  const Dataset ds = small_replica(40, 8, 5);
  for (const auto kernel : {NetworkKernel::RW, NetworkKernel::SGHMC}) {
    RunConfig cfg = quick_config(30, 30, 99);
    cfg.sampler.network_kernel = kernel;
    const ChainOutput a = run_chain(cfg, ds, 99);
    const ChainOutput b = run_chain(cfg, ds, 99);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.traces, b.traces);
    EXPECT_EQ(a.acceptance, b.acceptance);
    const ChainOutput c = run_chain(cfg, ds, 100);
    EXPECT_NE(a.traces, c.traces);
  }
}

TEST(Sweep, OutputShapes) {
  const Dataset ds = small_replica(30, 5, 6);
  RunConfig cfg = quick_config(10, 20, 1);
  cfg.sampler.thin = 2;
  const ChainOutput out = run_chain(cfg, ds, 1);
  EXPECT_EQ(out.samples.size(), 20u);
  EXPECT_EQ(out.traces.size(), 20u);
  EXPECT_EQ(out.iterations, 50);
  EXPECT_GT(out.sec_per_100, 0.0);
  EXPECT_EQ(out.trace_names.front(), "N");
  EXPECT_EQ(out.trace("theta_2").size(), 20u);
}

TEST(RandomWalk, AcceptanceRatesAfterBurnIn) {
  const Dataset ds = small_replica(120, 20, 7);
  const ChainOutput out = run_chain(quick_config(1500, 500, 3), ds, 3);
  for (const char* name : {"beta", "u"}) {
    EXPECT_GE(out.acceptance.at(name), 0.2) << name;
    EXPECT_LE(out.acceptance.at(name), 0.5) << name;
  }
}

TEST(RandomWalk, ScalesFrozenAfterBurnIn) {
  const Dataset ds = small_replica(40, 8, 8);
  RunConfig cfg = quick_config(0, 1, 1);
  Sampler s(ds.table, ds.net, cfg.model.build(ds.table.records(), ds.table.domain_sizes()),
            cfg.prior.build(ds.table.records()), cfg.sampler);
  Rng rng(1);
  s.initialize(rng);
  for (int t = 0; t < 50; ++t) s.gibbs_sweep(rng, true);
  const double sb = s.rw_scale_beta(), su = s.rw_scale_u();
  for (int t = 0; t < 50; ++t) s.gibbs_sweep(rng, false);
  EXPECT_EQ(s.rw_scale_beta(), sb);
  EXPECT_EQ(s.rw_scale_u(), su);
}

TEST(Hamiltonian, SmallStepAcceptsAlmostAlways) {
  Rng rng(13);
  const JointDraw jd = mltest::random_network_state(20, rng);
  SamplerConfig cfg;
  cfg.network_kernel = NetworkKernel::SGHMC;
  cfg.sghmc.epsilon = 1e-5;
  cfg.sghmc.minibatch_frac = 1.0;
  Sampler s = mltest::sampler_for(jd, cfg);
  for (int t = 0; t < 100; ++t) {
    s.sghmc_update_beta(rng);
    for (std::size_t c = 0; c < s.partition().clusters(); ++c) s.sghmc_update_u(c, rng);
  }
  EXPECT_GT(s.counters().at("beta").rate(), 0.99);
  EXPECT_GT(s.counters().at("u").rate(), 0.99);
}

// Both exact kernels target the same posterior on a fixed small instance:
// batch-means two-sample z tests on the N and beta traces.
TEST(Kernels, RandomWalkAndFullBatchHamiltonianAgree) {
  Rng data_rng(41);
  HyperParams h = mltest::small_hypers(2);
  const std::vector<int> domains(2, 3);
  const JointDraw jd = draw_joint(make_abp(2, 0.5, 0.5), 20, h, domains, data_rng);
  auto run = [&](NetworkKernel kernel, std::uint64_t seed) {
    SamplerConfig cfg;
    cfg.network_kernel = kernel;
    cfg.sghmc.epsilon = 0.05;
    cfg.sghmc.leapfrog = 10;
    cfg.sghmc.minibatch_frac = 1.0;
    Sampler s(jd.table, jd.net, h, jd.state.prior, cfg);
    s.set_state(jd.state);
    s.set_rw_scales(0.5, 0.8);
    Rng rng(seed);
    std::vector<double> n_trace, beta_trace;
    for (int t = 0; t < 2000; ++t) s.gibbs_sweep(rng);
    for (int t = 0; t < 40000; ++t) {
      s.gibbs_sweep(rng);
      n_trace.push_back(static_cast<double>(s.partition().clusters()));
      beta_trace.push_back(s.latent().beta);
    }
    return std::pair{n_trace, beta_trace};
  };
  const auto [n_rw, b_rw] = run(NetworkKernel::RW, 1);
  const auto [n_hmc, b_hmc] = run(NetworkKernel::SGHMC, 2);
  auto z = [](const std::vector<double>& x, const std::vector<double>& y) {
    const auto [mx, sx] = mltest::mean_se(x, 40);
    const auto [my, sy] = mltest::mean_se(y, 40);
    return (mx - my) / std::sqrt(sx * sx + sy * sy);
  };
  EXPECT_LT(std::abs(z(n_rw, n_hmc)), 2.576);
  EXPECT_LT(std::abs(z(b_rw, b_hmc)), 2.576);
}

TEST(Config, RejectsInvalidSamplerSettings) {
  SamplerConfig cfg;
  cfg.sghmc.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = {};
  cfg.sghmc.leapfrog = 0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = {};
  cfg.samples = 0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
}
