// Apache License, Version 2.0, refer to LICENSE.txt
//
// Gibbs sampler for the joint model: record-wise linkage moves, conjugate
// profile updates, random-walk or SGHMC kernels for the latent positions and
// intercept, and the prior-specific hyperparameter steps.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "microlink/embedding.hpp"
#include "microlink/errors.hpp"
#include "microlink/linkage.hpp"
#include "microlink/math.hpp"
#include "microlink/model.hpp"
#include "microlink/priors.hpp"
#include "microlink/random.hpp"
#include "microlink/vecmath.hpp"

namespace microlink {

enum class NetworkKernel { RW, SGHMC };
enum class ScanOrder { Sequential, Shuffled };

// How a record's destination is drawn. Gibbs evaluates the network term for
// every destination; Metropolized proposes from prior x profile weights and
// corrects for the network with an MH step (same stationary distribution,
// O(N) instead of O(N^2) network work per record).
enum class XiMove { Metropolized, Gibbs };

struct SghmcConfig {
  double epsilon = 0.001;
  int leapfrog = 5;
  double minibatch_frac = 0.2;
  double mass = 1.0;
};

struct SamplerConfig {
  long burn_in = 10000;
  long samples = 10000;
  long thin = 1;
  std::uint64_t seed = 1;
  NetworkKernel network_kernel = NetworkKernel::RW;
  double rw_target_accept = 0.35;
  SghmcConfig sghmc;
  ScanOrder record_scan_order = ScanOrder::Shuffled;
  XiMove xi_move = XiMove::Metropolized;
  bool prior_only = false;  // drop every likelihood term (temperature 0)

  void validate() const {
    MICROLINK_REQUIRE(burn_in >= 0 && samples >= 1 && thin >= 1, "iteration counts must be positive");
    MICROLINK_REQUIRE(rw_target_accept > 0 && rw_target_accept < 1, "target acceptance in (0,1)");
    MICROLINK_REQUIRE(sghmc.epsilon > 0 && sghmc.leapfrog >= 1, "SGHMC needs epsilon > 0 and L >= 1");
    MICROLINK_REQUIRE(sghmc.minibatch_frac > 0 && sghmc.minibatch_frac <= 1,
                      "minibatch fraction must lie in (0,1]");
    MICROLINK_REQUIRE(sghmc.mass > 0, "mass must be positive");
  }
};

struct AcceptCounter {
  long accepted = 0;
  long proposed = 0;
  void add(bool ok) {
    ++proposed;
    accepted += ok ? 1 : 0;
  }
  double rate() const { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / proposed; }
};

struct ChainOutput {
  std::vector<std::vector<int>> samples;  // canonical 0-based labels per kept draw
  std::vector<std::string> trace_names;
  std::vector<std::vector<double>> traces;  // one row per kept draw
  std::map<std::string, double> acceptance;
  double sec_per_100 = 0.0;
  long iterations = 0;

  std::vector<double> trace(const std::string& name) const {
    const auto it = std::find(trace_names.begin(), trace_names.end(), name);
    MICROLINK_REQUIRE(it != trace_names.end(), "unknown trace " + name);
    const auto col = static_cast<std::size_t>(it - trace_names.begin());
    std::vector<double> out;
    out.reserve(traces.size());
    for (const auto& row : traces) out.push_back(row[col]);
    return out;
  }
};

// Everything the sampler updates.
struct ChainState {
  LinkageState xi;
  LatentState latent;
  PriorSpec prior;
};

// Conjugate pieces of the sweep, shared with the tests.

// psi_l | w ~ Beta(a + sum w, b + I - sum w).
inline BetaParams distortion_posterior(double a, double b, std::size_t records, std::size_t distorted) {
  return {a + static_cast<double>(distorted), b + static_cast<double>(records) - static_cast<double>(distorted)};
}

// P(w = 1 | p = pi) = psi theta(p) / (psi theta(p) + 1 - psi).
inline double distortion_probability(double psi, double theta_p) {
  const double hit = psi * theta_p;
  return hit / (hit + 1.0 - psi);
}

struct InvGammaParams {
  double shape;
  double scale;
};

// sigma^2 | u ~ Inv-Gamma(a + NK/2, b + sum ||u_n||^2 / 2).
inline InvGammaParams sigma2_posterior(double a_sigma, double b_sigma, std::size_t clusters, std::size_t dim,
                                       std::span<const double> positions) {
  double ss = 0.0;
  for (double v : positions) ss += v * v;
  return {a_sigma + 0.5 * static_cast<double>(clusters * dim), b_sigma + 0.5 * ss};
}

// theta_k | r ~ Beta(a_k + r_k, b_k + Q_k - r_k).
inline BetaParams abp_level_posterior(double a, double b, int r, int q) {
  return {a + r, b + q - r};
}

class Sampler {
 public:
  // `net` may be absent (profile-only model).
  Sampler(RecordTable table, std::optional<Network> net, HyperParams hypers, PriorSpec prior,
          SamplerConfig config)
      : table_(std::move(table)),
        net_(std::move(net)),
        hypers_(std::move(hypers)),
        config_(config),
        prior_(std::move(prior)) {
    config_.validate();
    hypers_.validate(table_.domain_sizes());
    validate(prior_);
    if (net_) MICROLINK_REQUIRE(net_->nodes() == table_.records(), "network and table sizes differ");
    MICROLINK_REQUIRE(table_.records() < (std::size_t{1} << 31), "too many records");
    const std::size_t n = table_.records();
    all_pairs_.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) all_pairs_.push_back(pack(i, j));
    pair_pool_ = all_pairs_;
  }

  const RecordTable& table() const { return table_; }
  const std::optional<Network>& network() const { return net_; }
  bool has_network() const { return net_.has_value(); }
  const HyperParams& hypers() const { return hypers_; }
  const SamplerConfig& config() const { return config_; }
  const PriorSpec& prior() const { return prior_; }
  const Partition& partition() const { return part_; }
  const LatentState& latent() const { return lat_; }
  LatentState& latent() { return lat_; }
  double rw_scale_beta() const { return std::exp(log_scale_beta_); }
  double rw_scale_u() const { return std::exp(log_scale_u_); }
  void set_rw_scales(double beta, double u) {
    MICROLINK_REQUIRE(beta > 0 && u > 0, "proposal scales must be positive");
    log_scale_beta_ = std::log(beta);
    log_scale_u_ = std::log(u);
  }
  const std::map<std::string, AcceptCounter>& counters() const { return counters_; }
  void reset_counters() { counters_.clear(); }

  void set_network(Network net) {
    MICROLINK_REQUIRE(net.nodes() == table_.records(), "network and table sizes differ");
    net_ = std::move(net);
  }
  void set_table(RecordTable table) {
    MICROLINK_REQUIRE(table.records() == table_.records() && table.fields() == table_.fields(),
                      "replacement table must keep I and L");
    table_ = std::move(table);
  }

  ChainState state() const { return {part_.snapshot(), lat_, prior_}; }

  // Installs an externally built state; row n of positions/true_values
  // belongs to cluster n of `s.xi`.
  void set_state(const ChainState& s) {
    MICROLINK_REQUIRE(s.xi.records() == table_.records(), "state has the wrong number of records");
    MICROLINK_REQUIRE(s.latent.positions.size() == s.xi.clusters() * s.latent.dim,
                      "positions must be N x K");
    MICROLINK_REQUIRE(s.latent.true_values.size() == s.xi.clusters() * table_.fields(),
                      "true values must be N x L");
    MICROLINK_REQUIRE(s.latent.distorted.size() == table_.records() * table_.fields(),
                      "distortion indicators must be I x L");
    part_.reset(s.xi);
    lat_ = s.latent;
    prior_ = s.prior;
    validate(prior_);
  }

  // Canonical labels, consistent partition bookkeeping, per-cluster row
  // counts and the support constraint (w = 0 implies p = pi). Throws
  // ContractViolation.
  void check_invariants() const {
    part_.check();
    const std::size_t n = part_.clusters();
    const std::size_t l_count = table_.fields();
    int next = 0;
    std::vector<char> seen(n, 0);
    for (int l : part_.labels()) {
      if (seen[static_cast<std::size_t>(l)]) continue;
      MICROLINK_REQUIRE(l == next, "labels are not in first-appearance order");
      seen[static_cast<std::size_t>(l)] = 1;
      ++next;
    }
    std::size_t total = 0;
    const auto allelic = part_.allelic_counts();
    for (std::size_t s = 1; s < allelic.size(); ++s) total += s * static_cast<std::size_t>(allelic[s]);
    MICROLINK_REQUIRE(total == table_.records(), "allelic counts do not sum to I");
    MICROLINK_REQUIRE(lat_.positions.size() == n * lat_.dim, "positions must be N x K");
    MICROLINK_REQUIRE(lat_.true_values.size() == n * l_count, "true values must be N x L");
    MICROLINK_REQUIRE(lat_.distorted.size() == table_.records() * l_count, "distortion indicators must be I x L");
    for (std::size_t i = 0; i < table_.records(); ++i)
      for (std::size_t l = 0; l < l_count; ++l)
        if (!lat_.is_distorted(i, l))
          MICROLINK_REQUIRE(table_.at(i, l) == lat_.true_value(static_cast<std::size_t>(part_.label(i)), l),
                            "undistorted cell disagrees with its latent value");
    const int cap = prior_size_cap(prior_);
    if (cap > 0)
      for (std::size_t c = 0; c < n; ++c) MICROLINK_REQUIRE(part_.size(c) <= cap, "cluster exceeds the size cap");
  }

  // Default starting point: all singletons, latent values equal to the
  // records, no distortion, empirical field frequencies, positions from a
  // rescaled MDS of the network.
  void initialize(Rng& rng) {
    (void)rng;
    const std::size_t n = table_.records();
    const std::size_t l_count = table_.fields();
    const std::size_t k = hypers_.dim;
    part_.reset(LinkageState::singletons(n));
    lat_ = LatentState{};
    lat_.dim = k;
    lat_.true_values.assign(table_.codes().begin(), table_.codes().end());
    lat_.distorted.assign(n * l_count, 0);
    lat_.field_probs.resize(l_count);
    for (std::size_t l = 0; l < l_count; ++l) {
      auto& th = lat_.field_probs[l];
      th.assign(hypers_.alpha_field[l].begin(), hypers_.alpha_field[l].end());
      for (std::size_t i = 0; i < n; ++i) th[static_cast<std::size_t>(table_.at(i, l))] += 1.0;
      const double total = std::accumulate(th.begin(), th.end(), 0.0);
      for (double& v : th) v /= total;
    }
    lat_.distortion_probs.assign(l_count, hypers_.a_dist / (hypers_.a_dist + hypers_.b_dist));
    if (net_ && n >= 2) {
      const Embedding emb = embed_network(*net_, k);
      lat_.positions = emb.positions;
      lat_.beta = emb.beta;
      double ss = 0.0;
      for (double v : lat_.positions) ss += v * v;
      lat_.sigma2 = std::max(ss / static_cast<double>(n * k), 1e-6);
    } else {
      lat_.positions.assign(n * k, 0.0);
      lat_.beta = 0.0;
      lat_.sigma2 = hypers_.b_sigma / std::max(hypers_.a_sigma - 1.0, 1e-12);
    }
  }

  // One full scan. `adapt` enables Robbins-Monro tuning of the RW scales.
  void gibbs_sweep(Rng& rng, bool adapt = false) {
    ++sweeps_;
    scan_.resize(table_.records());
    std::iota(scan_.begin(), scan_.end(), 0);
    if (config_.record_scan_order == ScanOrder::Shuffled) rng.shuffle(scan_);
    for (std::size_t i : scan_) update_xi_record(i, rng);
    canonicalize();
    if (!config_.prior_only) {
      update_profile_conjugates(rng);
      if (net_) {
        update_sigma2(rng);
        if (config_.network_kernel == NetworkKernel::RW) {
          rw_update_network(rng, adapt);
        } else {
          sghmc_update_beta(rng);
          for (std::size_t c = 0; c < part_.clusters(); ++c) sghmc_update_u(c, rng);
        }
      }
    }
    update_prior_hypers(rng);
  }

  // ---------------------------------------------------------------------
  // Linkage move for one record

  void update_xi_record(std::size_t i, Rng& rng) {
    MICROLINK_REQUIRE(i < table_.records(), "record index out of range");
    const std::size_t l_count = table_.fields();
    const std::size_t k = lat_.dim;
    const int own = part_.label(i);
    const int from = part_.size(static_cast<std::size_t>(own));
    const bool singleton = from == 1;
    const std::size_t n = part_.clusters();
    const bool use_profile = !config_.prior_only;
    const bool use_network = net_.has_value() && !config_.prior_only;

    // Per-field log m(p | pi) for matching / non-matching latent values, and
    // the fresh-cluster profile weight with pi* integrated out.
    match_.resize(l_count);
    miss_.resize(l_count);
    double fresh_profile = 0.0;
    for (std::size_t l = 0; l < l_count; ++l) {
      const double psi = lat_.distortion_probs[l];
      const double th = lat_.field_probs[l][static_cast<std::size_t>(table_.at(i, l))];
      match_[l] = std::log((1.0 - psi) + psi * th);
      miss_[l] = std::log(psi * th);
      fresh_profile += std::log(th);
    }

    // Prior log-ratio depends on the destination size only.
    prior_cache_.assign(static_cast<std::size_t>(from) + 2, std::numeric_limits<double>::quiet_NaN());
    const MoveScorer scorer(prior_, table_.records());
    const auto allelic = part_.allelic_counts();
    auto prior_term = [&](int to) {
      if (static_cast<std::size_t>(to) >= prior_cache_.size())
        prior_cache_.resize(static_cast<std::size_t>(to) + 1, std::numeric_limits<double>::quiet_NaN());
      double& slot = prior_cache_[static_cast<std::size_t>(to)];
      if (std::isnan(slot)) slot = scorer.log_ratio(allelic, n, from, to);
      return slot;
    };

    // Destination n is the fresh cluster; for a singleton the fresh cluster
    // is its own (Neal's algorithm 8 with one auxiliary component).
    const std::size_t fresh = singleton ? static_cast<std::size_t>(own) : n;
    logq_.assign(n + 1, kNegInf);
    for (std::size_t c = 0; c < n; ++c) {
      if (c == fresh) continue;
      const int to = part_.size(c) - (static_cast<int>(c) == own ? 1 : 0);
      double w = prior_term(to);
      if (w == kNegInf) continue;
      if (use_profile)
        for (std::size_t l = 0; l < l_count; ++l)
          w += lat_.true_value(c, l) == table_.at(i, l) ? match_[l] : miss_[l];
      logq_[c] = w;
    }
    logq_[fresh] = prior_term(0) + (use_profile ? fresh_profile : 0.0);

    aux_u_.resize(k);
    if (singleton) {
      const auto p = lat_.position(static_cast<std::size_t>(own));
      std::copy(p.begin(), p.end(), aux_u_.begin());
    } else {
      const double sd = std::sqrt(lat_.sigma2);
      for (double& v : aux_u_) v = rng.normal(0.0, sd);
    }
    auto dest_position = [&](std::size_t c) -> std::span<const double> {
      return c == fresh ? std::span<const double>(aux_u_) : lat_.position(c);
    };

    std::size_t dest;
    if (!use_network) {
      dest = sample_log_weights(logq_, rng);
    } else if (config_.xi_move == XiMove::Gibbs) {
      for (std::size_t c = 0; c <= n; ++c)
        if (logq_[c] != kNegInf) logq_[c] += record_network_term(i, c, dest_position(c));
      dest = sample_log_weights(logq_, rng);
    } else {
      const std::size_t proposal = sample_log_weights(logq_, rng);
      const std::size_t current = singleton ? fresh : static_cast<std::size_t>(own);
      dest = current;
      if (proposal != current) {
        const double log_a = record_network_term(i, proposal, dest_position(proposal)) -
                             record_network_term(i, current, dest_position(current));
        const bool ok = std::log(rng.uniform_pos()) < log_a;
        counters_["xi"].add(ok);
        if (ok) dest = proposal;
      }
    }

    // Apply the move.
    std::size_t target;
    if (dest == fresh && !singleton) {
      target = static_cast<std::size_t>(part_.create_cluster());
      lat_.positions.insert(lat_.positions.end(), aux_u_.begin(), aux_u_.end());
      lat_.true_values.insert(lat_.true_values.end(), l_count, 0);
    } else {
      target = dest;
    }
    if (dest == fresh) {
      // pi* | p_i with w_i summed out: keep p_i w.p. (1 - psi) + psi theta(p_i).
      for (std::size_t l = 0; l < l_count; ++l) {
        const double psi = lat_.distortion_probs[l];
        lat_.true_value(target, l) =
            rng.bernoulli(1.0 - psi)
                ? table_.at(i, l)
                : static_cast<int>(rng.categorical(lat_.field_probs[l]));
      }
    }
    if (static_cast<int>(target) != own) {
      const Partition::Removal rem = part_.move(i, static_cast<int>(target));
      if (rem.removed) drop_cluster_rows(rem);
    }
    // w_i | pi of the destination.
    const auto c = static_cast<std::size_t>(part_.label(i));
    for (std::size_t l = 0; l < l_count; ++l) resample_w(i, c, l, rng);
  }

  // sum_{j != i} log p(y_ij | i placed in cluster c at position `pos`).
  double record_network_term(std::size_t i, std::size_t c, std::span<const double> pos) {
    const double beta = lat_.beta;
    const std::size_t n = part_.clusters();
    const std::size_t k = lat_.dim;
    const int own = part_.label(i);
    using RowMajor = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> u(lat_.positions.data(), static_cast<Eigen::Index>(n),
                                       static_cast<Eigen::Index>(k));
    net_dist_.setZero(static_cast<Eigen::Index>(n));
    net_weight_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t c2 = 0; c2 < k; ++c2) net_dist_ += (u.col(static_cast<Eigen::Index>(c2)) - pos[c2]).square();
    net_dist_ = net_dist_.sqrt();
    if (c < n) net_dist_[static_cast<Eigen::Index>(c)] = 0.0;
    for (std::size_t m = 0; m < n; ++m) net_weight_[static_cast<Eigen::Index>(m)] = part_.size(m);
    if (own >= 0) net_weight_[own] -= 1.0;
    double out = -(net_weight_ * microlink::softplus(beta - net_dist_)).sum();
    for (int b : net_->neighbors(i))
      out += beta - net_dist_[part_.label(static_cast<std::size_t>(b))];
    return out;
  }

  // ---------------------------------------------------------------------
  // Profile parameters

  void update_profile_conjugates(Rng& rng) {
    const std::size_t l_count = table_.fields();
    const std::size_t n_records = table_.records();
    // pi_{n,l} with the members' distortion indicators summed out.
    for (std::size_t c = 0; c < part_.clusters(); ++c) {
      const auto members = part_.members(c);
      for (std::size_t l = 0; l < l_count; ++l) {
        const auto& th = lat_.field_probs[l];
        const double psi = lat_.distortion_probs[l];
        values_.clear();
        counts_.clear();
        for (int i : members) {
          const int v = table_.at(static_cast<std::size_t>(i), l);
          const auto it = std::find(values_.begin(), values_.end(), v);
          if (it == values_.end()) {
            values_.push_back(v);
            counts_.push_back(1);
          } else {
            ++counts_[static_cast<std::size_t>(it - values_.begin())];
          }
        }
        logw_.clear();
        double covered = 0.0;
        for (std::size_t k = 0; k < values_.size(); ++k) {
          const double t = th[static_cast<std::size_t>(values_[k])];
          covered += t;
          logw_.push_back(std::log(t) + counts_[k] * (std::log((1.0 - psi) + psi * t) - std::log(psi * t)));
        }
        const double rest = 1.0 - covered;
        logw_.push_back(rest > 1e-300 ? std::log(rest) : kNegInf);
        const std::size_t pick = rng.categorical_log(logw_);
        int value;
        if (pick < values_.size()) {
          value = values_[pick];
        } else {
          weights_.assign(th.begin(), th.end());
          for (int v : values_) weights_[static_cast<std::size_t>(v)] = 0.0;
          value = static_cast<int>(rng.categorical(weights_));
        }
        lat_.true_value(c, l) = value;
      }
    }
    for (std::size_t i = 0; i < n_records; ++i)
      for (std::size_t l = 0; l < l_count; ++l)
        resample_w(i, static_cast<std::size_t>(part_.label(i)), l, rng);
    // theta_l and psi_l.
    for (std::size_t l = 0; l < l_count; ++l) {
      weights_.assign(hypers_.alpha_field[l].begin(), hypers_.alpha_field[l].end());
      long distorted = 0;
      for (std::size_t i = 0; i < n_records; ++i)
        if (lat_.is_distorted(i, l)) {
          weights_[static_cast<std::size_t>(table_.at(i, l))] += 1.0;
          ++distorted;
        }
      for (std::size_t c = 0; c < part_.clusters(); ++c)
        weights_[static_cast<std::size_t>(lat_.true_value(c, l))] += 1.0;
      lat_.field_probs[l] = rng.dirichlet(weights_);
      for (double& t : lat_.field_probs[l]) t = std::max(t, 1e-300);
      const BetaParams post =
          distortion_posterior(hypers_.a_dist, hypers_.b_dist, n_records, static_cast<std::size_t>(distorted));
      const double psi = rng.beta(post.a, post.b);
      lat_.distortion_probs[l] = std::clamp(psi, 1e-300, 1.0 - 1e-16);
    }
  }

  // P(w = 1 | p = pi) = psi theta(p) / (psi theta(p) + 1 - psi); forced 1 on mismatch.
  void resample_w(std::size_t i, std::size_t c, std::size_t l, Rng& rng) {
    const int p = table_.at(i, l);
    if (p != lat_.true_value(c, l)) {
      lat_.is_distorted(i, l) = 1;
      return;
    }
    const double prob = distortion_probability(lat_.distortion_probs[l], lat_.field_probs[l][static_cast<std::size_t>(p)]);
    lat_.is_distorted(i, l) = rng.bernoulli(prob) ? 1 : 0;
  }

  // sigma^2 ~ Inv-Gamma(a + NK/2, b + sum ||u_n||^2 / 2).
  void update_sigma2(Rng& rng) {
    const InvGammaParams post =
        sigma2_posterior(hypers_.a_sigma, hypers_.b_sigma, part_.clusters(), lat_.dim, lat_.positions);
    lat_.sigma2 = rng.inv_gamma(post.shape, post.scale);
  }

  // ---------------------------------------------------------------------
  // Network potentials over record pairs (the data points)

  static std::uint64_t pack(std::size_t i, std::size_t j) {
    return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
  }
  static std::size_t first(std::uint64_t p) { return static_cast<std::size_t>(p >> 32); }
  static std::size_t second(std::uint64_t p) { return static_cast<std::size_t>(p & 0xffffffffu); }

  std::span<const std::uint64_t> all_pairs() const { return all_pairs_; }

  struct PotentialGrad {
    double value = 0.0;
    std::vector<double> grad;
  };

  // Distances and edge indicators of a set of record pairs; enough to
  // evaluate the intercept potential at any beta.
  struct BetaBatch {
    Eigen::ArrayXd dist;
    Eigen::ArrayXd y;
  };

  void fill_beta_batch(std::span<const std::uint64_t> pairs, BetaBatch& out) const {
    MICROLINK_REQUIRE(net_.has_value(), "no network");
    const auto m = static_cast<Eigen::Index>(pairs.size());
    out.dist.resize(m);
    out.y.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const std::size_t a = first(pairs[static_cast<std::size_t>(k)]);
      const std::size_t b = second(pairs[static_cast<std::size_t>(k)]);
      const auto ca = static_cast<std::size_t>(part_.label(a));
      const auto cb = static_cast<std::size_t>(part_.label(b));
      out.dist[k] = ca == cb ? 0.0 : distance(lat_.position(ca), lat_.position(cb));
      out.y[k] = net_->has_edge(a, b) ? 1.0 : 0.0;
    }
  }

  // U(beta) = -scale * sum [y eta - softplus(eta)] + beta^2 / (2 omega^2), eta = beta - d.
  PotentialGrad beta_potential(const BetaBatch& batch, double scale, double beta,
                               bool want_value = true) const {
    const Eigen::ArrayXd eta = beta - batch.dist;
    const double w2 = hypers_.omega * hypers_.omega;
    PotentialGrad out;
    out.grad = {scale * (microlink::expit(eta).sum() - batch.y.sum()) + beta / w2};
    if (want_value)
      out.value = scale * (microlink::softplus(eta).sum() - (batch.y * eta).sum()) + 0.5 * beta * beta / w2;
    return out;
  }

  PotentialGrad potential_and_grad_beta(std::span<const std::uint64_t> pairs, double scale, double beta,
                                        bool want_value = true) const {
    BetaBatch batch;
    fill_beta_batch(pairs, batch);
    return beta_potential(batch, scale, beta, want_value);
  }

  // Record pairs (a, b) with a in cluster n and b outside it: the data that
  // inform u_n (pairs inside n sit at distance zero whatever u_n is).
  struct ClusterPairs {
    std::size_t cluster = 0;
    std::vector<int> members;
    std::vector<int> others;
    std::size_t size() const { return members.size() * others.size(); }
    std::pair<std::size_t, std::size_t> at(std::size_t k) const {
      return {static_cast<std::size_t>(members[k / others.size()]),
              static_cast<std::size_t>(others[k % others.size()])};
    }
  };

  ClusterPairs cluster_pairs(std::size_t n) const {
    MICROLINK_REQUIRE(n < part_.clusters(), "cluster index out of range");
    ClusterPairs out;
    out.cluster = n;
    out.members.assign(part_.members(n).begin(), part_.members(n).end());
    std::sort(out.members.begin(), out.members.end());
    out.others.reserve(table_.records() - out.members.size());
    for (std::size_t i = 0; i < table_.records(); ++i)
      if (static_cast<std::size_t>(part_.label(i)) != n) out.others.push_back(static_cast<int>(i));
    return out;
  }

  // Far-endpoint positions (one array per coordinate) and edge indicators.
  struct PositionBatch {
    std::vector<Eigen::ArrayXd> other;
    Eigen::ArrayXd y;
  };

  // `subset` indexes ClusterPairs; nullptr = all pairs.
  void fill_position_batch(const ClusterPairs& cp, const std::vector<std::uint32_t>* subset,
                           PositionBatch& out) const {
    MICROLINK_REQUIRE(net_.has_value(), "no network");
    const std::size_t k = lat_.dim;
    const auto m = static_cast<Eigen::Index>(subset ? subset->size() : cp.size());
    out.other.resize(k);
    for (auto& o : out.other) o.resize(m);
    out.y.resize(m);
    for (Eigen::Index t = 0; t < m; ++t) {
      const std::size_t idx = subset ? (*subset)[static_cast<std::size_t>(t)] : static_cast<std::size_t>(t);
      const auto [a, b] = cp.at(idx);
      const auto um = lat_.position(static_cast<std::size_t>(part_.label(b)));
      for (std::size_t c = 0; c < k; ++c) out.other[c][t] = um[c];
      out.y[t] = net_->has_edge(a, b) ? 1.0 : 0.0;
    }
  }

  // U(u_n) = -scale * sum [y eta - softplus(eta)] + ||u||^2 / (2 sigma^2),
  // eta = beta - ||u - u_m||. Pairs at coincident positions contribute no
  // gradient.
  PotentialGrad position_potential(const PositionBatch& batch, double scale, std::span<const double> u,
                                   bool want_value = true) const {
    const std::size_t k = lat_.dim;
    MICROLINK_REQUIRE(u.size() == k, "position has the wrong dimension");
    const Eigen::Index m = batch.y.size();
    PotentialGrad out;
    out.grad.assign(k, 0.0);
    double sq = 0.0;
    for (std::size_t c = 0; c < k; ++c) sq += u[c] * u[c];
    if (m == 0) {
      for (std::size_t c = 0; c < k; ++c) out.grad[c] = u[c] / lat_.sigma2;
      out.value = 0.5 * sq / lat_.sigma2;
      return out;
    }
    Eigen::ArrayXd d2 = Eigen::ArrayXd::Zero(m);
    for (std::size_t c = 0; c < k; ++c) d2 += (u[c] - batch.other[c]).square();
    const Eigen::ArrayXd d = d2.sqrt();
    const Eigen::ArrayXd eta = lat_.beta - d;
    const Eigen::ArrayXd coef = (d > 1e-12).select(-(microlink::expit(eta) - batch.y) / d, 0.0);
    for (std::size_t c = 0; c < k; ++c)
      out.grad[c] = scale * (coef * (u[c] - batch.other[c])).sum() + u[c] / lat_.sigma2;
    if (want_value)
      out.value = scale * (microlink::softplus(eta).sum() - (batch.y * eta).sum()) + 0.5 * sq / lat_.sigma2;
    return out;
  }

  PotentialGrad potential_and_grad_u(const ClusterPairs& cp, const std::vector<std::uint32_t>* subset,
                                     double scale, std::span<const double> u, bool want_value = true) const {
    PositionBatch batch;
    fill_position_batch(cp, subset, batch);
    return position_potential(batch, scale, u, want_value);
  }

  // ---------------------------------------------------------------------
  // Random-walk Metropolis for beta and each u_n

  void rw_update_network(Rng& rng, bool adapt) {
    const double gain = 1.0 / std::pow(static_cast<double>(sweeps_) + 1.0, 0.6);
    {
      const double proposal = lat_.beta + rw_scale_beta() * rng.normal();
      const double log_a = beta_log_ratio(lat_.beta, proposal);
      const bool ok = std::log(rng.uniform_pos()) < log_a;
      counters_["beta"].add(ok);
      if (ok) lat_.beta = proposal;
      if (adapt) log_scale_beta_ += gain * ((ok ? 1.0 : 0.0) - config_.rw_target_accept);
    }
    const std::size_t k = lat_.dim;
    double accepted = 0.0;
    std::vector<double> prop(k);
    for (std::size_t n = 0; n < part_.clusters(); ++n) {
      const ClusterPairs cp = cluster_pairs(n);
      const auto cur = lat_.position(n);
      for (std::size_t c = 0; c < k; ++c) prop[c] = cur[c] + rw_scale_u() * rng.normal();
      const double log_a = u_log_ratio(cp, cur, prop);
      const bool ok = std::log(rng.uniform_pos()) < log_a;
      counters_["u"].add(ok);
      if (ok) {
        std::copy(prop.begin(), prop.end(), cur.begin());
        accepted += 1.0;
      }
    }
    if (adapt && part_.clusters() > 0)
      log_scale_u_ += gain * (accepted / static_cast<double>(part_.clusters()) - config_.rw_target_accept);
  }

  // log posterior(beta_new) - log posterior(beta_old) over all record pairs.
  double beta_log_ratio(double beta_old, double beta_new) {
    fill_beta_batch(all_pairs_, beta_scratch_);
    const PotentialGrad u_old = beta_potential(beta_scratch_, 1.0, beta_old);
    const PotentialGrad u_new = beta_potential(beta_scratch_, 1.0, beta_new);
    return u_old.value - u_new.value;
  }

  double u_log_ratio(const ClusterPairs& cp, std::span<const double> u_old, std::span<const double> u_new) {
    fill_position_batch(cp, nullptr, position_scratch_);
    return position_potential(position_scratch_, 1.0, u_old).value -
           position_potential(position_scratch_, 1.0, u_new).value;
  }

  // ---------------------------------------------------------------------
  // SGHMC

  // Leapfrog trajectory with an MH correction on H = U + r^T r / (2 m).
  // `potential(theta, want_value)` returns the (minibatch) potential and
  // gradient. Returns the accepted position.
  template <typename Potential>
  std::vector<double> hamiltonian_step(std::vector<double> theta, Potential&& potential, Rng& rng,
                                       AcceptCounter& counter, double* delta_h = nullptr) {
    const double eps = config_.sghmc.epsilon;
    const double mass = config_.sghmc.mass;
    const std::size_t dim = theta.size();
    std::vector<double> r(dim);
    for (double& v : r) v = rng.normal(0.0, std::sqrt(mass));
    auto kinetic = [&](const std::vector<double>& mom) {
      double s = 0.0;
      for (double v : mom) s += v * v;
      return 0.5 * s / mass;
    };
    PotentialGrad pg = potential(theta, true);
    const double h_old = pg.value + kinetic(r);
    const std::vector<double> start = theta;
    for (std::size_t c = 0; c < dim; ++c) r[c] -= 0.5 * eps * pg.grad[c];
    const int steps = config_.sghmc.leapfrog;
    for (int s = 1; s <= steps; ++s) {
      for (std::size_t c = 0; c < dim; ++c) theta[c] += eps * r[c] / mass;
      if (s < steps) {
        pg = potential(theta, false);
        for (std::size_t c = 0; c < dim; ++c) r[c] -= eps * pg.grad[c];
      }
    }
    pg = potential(theta, true);
    for (std::size_t c = 0; c < dim; ++c) r[c] -= 0.5 * eps * pg.grad[c];
    const double h_new = pg.value + kinetic(r);
    if (delta_h != nullptr) *delta_h = h_new - h_old;
    const bool ok = std::isfinite(h_new) && std::isfinite(h_old) &&
                    std::log(rng.uniform_pos()) < h_old - h_new;
    counter.add(ok);
    return ok ? theta : start;
  }

  std::size_t minibatch_size(std::size_t total) const {
    const auto m = static_cast<std::size_t>(std::ceil(config_.sghmc.minibatch_frac * static_cast<double>(total)));
    return std::clamp<std::size_t>(m, 1, total);
  }

  // One minibatch is drawn per update and shared by the whole trajectory;
  // its data term is scaled by |all pairs| / |minibatch|.
  void sghmc_update_beta(Rng& rng) {
    if (all_pairs_.empty()) return;
    const std::size_t m = minibatch_size(all_pairs_.size());
    rng.partial_shuffle(pair_pool_, m);
    fill_beta_batch(std::span<const std::uint64_t>(pair_pool_.data(), m), beta_scratch_);
    const double scale = static_cast<double>(all_pairs_.size()) / static_cast<double>(m);
    auto pot = [&](const std::vector<double>& th, bool v) { return beta_potential(beta_scratch_, scale, th[0], v); };
    lat_.beta = hamiltonian_step({lat_.beta}, pot, rng, counters_["beta"])[0];
  }

  void sghmc_update_u(std::size_t n, Rng& rng) {
    const ClusterPairs cp = cluster_pairs(n);
    auto pos = lat_.position(n);
    std::vector<double> theta(pos.begin(), pos.end());
    double scale = 1.0;
    if (cp.size() == 0) {
      fill_position_batch(cp, nullptr, position_scratch_);
    } else {
      const std::size_t m = minibatch_size(cp.size());
      index_pool_.resize(cp.size());
      std::iota(index_pool_.begin(), index_pool_.end(), 0u);
      rng.partial_shuffle(index_pool_, m);
      index_pool_.resize(m);
      fill_position_batch(cp, &index_pool_, position_scratch_);
      scale = static_cast<double>(cp.size()) / static_cast<double>(m);
    }
    auto pot = [&](const std::vector<double>& th, bool v) {
      return position_potential(position_scratch_, scale, th, v);
    };
    theta = hamiltonian_step(theta, pot, rng, counters_["u"]);
    std::copy(theta.begin(), theta.end(), pos.begin());
  }

  // ---------------------------------------------------------------------
  // Partition-prior hyperparameters

  void update_prior_hypers(Rng& rng) {
    const auto allelic = part_.allelic_counts();
    const std::size_t n_records = table_.records();
    const std::size_t n_clusters = part_.clusters();
    if (auto* abp = std::get_if<AbpPrior>(&prior_)) {
      const int m = abp->max_size;
      std::vector<int> dense(static_cast<std::size_t>(m), 0);
      for (int s = 1; s <= m; ++s)
        dense[static_cast<std::size_t>(s - 1)] =
            static_cast<std::size_t>(s) < allelic.size() ? allelic[static_cast<std::size_t>(s)] : 0;
      for (int k = m; k >= 2; --k) {
        const int q = detail::abp_q(dense, k, n_records, m);
        const int r = dense[static_cast<std::size_t>(k - 1)];
        const auto idx = static_cast<std::size_t>(k - 2);
        const BetaParams post = abp_level_posterior(abp->a[idx], abp->b[idx], r, q);
        const double t = rng.beta(post.a, post.b);
        abp->theta[idx] = std::clamp(t, 1e-300, 1.0 - 1e-16);
      }
    } else if (auto* epp = std::get_if<EppPrior>(&prior_)) {
      epp_update_theta(*epp, n_clusters, n_records, rng);
    } else if (auto* nb = std::get_if<NbnbPrior>(&prior_)) {
      nbnb_update(*nb, allelic, rng);
    }
  }

  // Escobar-West auxiliary-variable update of the EPP concentration.
  static void epp_update_theta(EppPrior& p, std::size_t clusters, std::size_t records, Rng& rng) {
    const double n = static_cast<double>(clusters);
    const double big_i = static_cast<double>(records);
    const double eta = std::clamp(rng.beta(p.theta + 1.0, big_i), 1e-300, 1.0 - 1e-16);
    const double rate = p.b_theta - std::log(eta);
    const double odds_num = p.a_theta + n - 1.0;
    const double mix = odds_num / (big_i * rate + odds_num);
    const double shape = rng.bernoulli(mix) ? p.a_theta + n : p.a_theta + n - 1.0;
    p.theta = std::max(rng.gamma(shape, rate), 1e-300);
  }

  // Random-walk MH on (log eta, logit theta) for the NB size distribution.
  void nbnb_update(NbnbPrior& p, std::span<const int> allelic, Rng& rng) {
    auto log_target = [&](double eta, double theta) {
      double out = gamma_log_pdf(eta, p.a_eta, p.b_eta) + beta_log_pdf(theta, p.a_theta, p.b_theta) +
                   std::log(eta) + std::log(theta) + std::log1p(-theta);
      for (std::size_t s = 1; s < allelic.size(); ++s)
        if (allelic[s] > 0) out += allelic[s] * trunc_negbin_log_pmf(static_cast<long>(s), eta, theta);
      return out;
    };
    const double le = std::log(p.eta) + nb_step_ * rng.normal();
    const double lt = std::log(p.theta / (1.0 - p.theta)) + nb_step_ * rng.normal();
    const double eta = std::exp(le);
    const double theta = expit(lt);
    if (!(eta > 0) || !std::isfinite(eta) || !(theta > 0 && theta < 1)) {
      counters_["hyper"].add(false);
      return;
    }
    const double log_a = log_target(eta, theta) - log_target(p.eta, p.theta);
    const bool ok = std::log(rng.uniform_pos()) < log_a;
    counters_["hyper"].add(ok);
    if (ok) {
      p.eta = eta;
      p.theta = theta;
    }
  }

  // ---------------------------------------------------------------------
  // Driver

  std::vector<std::string> trace_names() const {
    std::vector<std::string> names = {"N", "beta", "sigma2"};
    for (std::size_t l = 0; l < table_.fields(); ++l) names.push_back("psi_" + std::to_string(l + 1));
    names.push_back("sum_w");
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, EppPrior>) {
            names.push_back("theta");
          } else if constexpr (std::is_same_v<T, NbnbPrior>) {
            names.push_back("eta");
            names.push_back("theta");
          } else if constexpr (std::is_same_v<T, AbpPrior>) {
            for (int k = 2; k <= p.max_size; ++k) names.push_back("theta_" + std::to_string(k));
          }
        },
        prior_);
    return names;
  }

  std::vector<double> trace_row() const {
    std::vector<double> row = {static_cast<double>(part_.clusters()), lat_.beta, lat_.sigma2};
    for (double psi : lat_.distortion_probs) row.push_back(psi);
    double sum_w = 0.0;
    for (auto w : lat_.distorted) sum_w += w;
    row.push_back(sum_w);
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, EppPrior>) {
            row.push_back(p.theta);
          } else if constexpr (std::is_same_v<T, NbnbPrior>) {
            row.push_back(p.eta);
            row.push_back(p.theta);
          } else if constexpr (std::is_same_v<T, AbpPrior>) {
            for (double t : p.theta) row.push_back(t);
          }
        },
        prior_);
    return row;
  }

  // Runs burn-in (with adaptation) and the kept iterations from the current
  // state. `progress(iter, total)` is called every 1000 iterations if set.
  ChainOutput run(Rng& rng, const std::function<void(long, long)>& progress = {}) {
    ChainOutput out;
    out.trace_names = trace_names();
    const long kept_iters = config_.samples * config_.thin;
    const long total = config_.burn_in + kept_iters;
    const auto t0 = std::chrono::steady_clock::now();
    for (long it = 0; it < total; ++it) {
      const bool burning = it < config_.burn_in;
      if (it == config_.burn_in) reset_counters();
      gibbs_sweep(rng, burning);
      if (!burning && (it - config_.burn_in + 1) % config_.thin == 0) {
        const auto labels = part_.labels();
        out.samples.emplace_back(labels.begin(), labels.end());
        out.traces.push_back(trace_row());
      }
      if (progress && (it + 1) % 1000 == 0) progress(it + 1, total);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.iterations = total;
    out.sec_per_100 = total > 0 ? 100.0 * secs / static_cast<double>(total) : 0.0;
    for (const auto& [name, c] : counters_) out.acceptance[name] = c.rate();
    return out;
  }

 private:
  void drop_cluster_rows(const Partition::Removal& rem) {
    const std::size_t k = lat_.dim;
    const std::size_t l_count = table_.fields();
    const auto vacated = static_cast<std::size_t>(rem.vacated);
    if (rem.moved >= 0) {
      const auto moved = static_cast<std::size_t>(rem.moved);
      std::copy_n(lat_.positions.begin() + static_cast<std::ptrdiff_t>(moved * k), k,
                  lat_.positions.begin() + static_cast<std::ptrdiff_t>(vacated * k));
      std::copy_n(lat_.true_values.begin() + static_cast<std::ptrdiff_t>(moved * l_count), l_count,
                  lat_.true_values.begin() + static_cast<std::ptrdiff_t>(vacated * l_count));
    }
    lat_.positions.resize(lat_.positions.size() - k);
    lat_.true_values.resize(lat_.true_values.size() - l_count);
  }

  void canonicalize() {
    const std::vector<int> new_of_old = part_.canonicalize();
    const std::size_t k = lat_.dim;
    const std::size_t l_count = table_.fields();
    std::vector<double> pos(lat_.positions.size());
    std::vector<int> tv(lat_.true_values.size());
    for (std::size_t c = 0; c < new_of_old.size(); ++c) {
      const auto to = static_cast<std::size_t>(new_of_old[c]);
      std::copy_n(lat_.positions.begin() + static_cast<std::ptrdiff_t>(c * k), k,
                  pos.begin() + static_cast<std::ptrdiff_t>(to * k));
      std::copy_n(lat_.true_values.begin() + static_cast<std::ptrdiff_t>(c * l_count), l_count,
                  tv.begin() + static_cast<std::ptrdiff_t>(to * l_count));
    }
    lat_.positions = std::move(pos);
    lat_.true_values = std::move(tv);
  }

  RecordTable table_;
  std::optional<Network> net_;
  HyperParams hypers_;
  SamplerConfig config_;
  PriorSpec prior_;
  Partition part_;
  LatentState lat_;

  std::vector<std::uint64_t> all_pairs_;
  std::vector<std::uint64_t> pair_pool_;  // persistent permutation for minibatches
  std::vector<std::uint32_t> index_pool_;
  BetaBatch beta_scratch_;
  Eigen::ArrayXd net_dist_, net_weight_;
  PositionBatch position_scratch_;
  double log_scale_beta_ = std::log(0.01);
  double log_scale_u_ = std::log(0.5);
  double nb_step_ = 0.3;
  long sweeps_ = 0;
  std::map<std::string, AcceptCounter> counters_;

  // scratch
  std::vector<std::size_t> scan_;
  std::vector<double> match_, miss_, prior_cache_, logq_, aux_u_, logw_, weights_;
  std::vector<int> values_, counts_;
};

}  // namespace microlink
