// Apache License, Version 2.0, refer to LICENSE.txt
//
// Priors on the linkage structure. All five are exchangeable, so each pmf is
// a function of the allelic partition alone; this file evaluates them in
// that form, scores single-record moves in O(1), and draws partitions from
// them.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "microlink/errors.hpp"
#include "microlink/linkage.hpp"
#include "microlink/math.hpp"
#include "microlink/random.hpp"

namespace microlink {

// Uniform over partitions whose clusters have at most two records.
struct UpPrior {
  static constexpr int max_size = 2;
};

// Ewens-Pitman prior with concentration theta ~ Gamma(a_theta, b_theta)
// (shape/rate).
struct EppPrior {
  double theta = 1.0;
  double a_theta = 1.0;
  double b_theta = 1.0;
};

// Kolchin prior: N ~ NB(a, q) and sizes iid NB(eta, theta), both truncated
// to {1, 2, ...}; eta ~ Gamma(a_eta, b_eta), theta ~ Beta(a_theta, b_theta).
struct NbnbPrior {
  double a = 1.0;
  double q = 0.5;
  double eta = 1.0;
  double theta = 0.5;
  double a_eta = 1.0;
  double b_eta = 1.0;
  double a_theta = 2.0;
  double b_theta = 2.0;
};

// Kolchin prior: N ~ NB(a, q) truncated, sizes from mu ~ DP(alpha, mu0) with
// mu0 geometric on {1, 2, ...} with success probability mu0_p.
struct NbdpPrior {
  double a = 1.0;
  double q = 0.5;
  double alpha = 1.0;
  double mu0_p = 0.5;
};

// Allelic binomial prior with cluster sizes capped at M. Index k - 2 of the
// vectors holds level k = 2..M.
struct AbpPrior {
  int max_size = 2;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> theta;
};

using PriorSpec = std::variant<UpPrior, EppPrior, NbnbPrior, NbdpPrior, AbpPrior>;

inline std::string prior_name(const PriorSpec& spec) {
  static const char* names[] = {"UP", "EPP", "NBNBP", "NBDP", "ABP"};
  return names[spec.index()];
}

// Largest admissible cluster size, or 0 when unbounded.
inline int prior_size_cap(const PriorSpec& spec) {
  if (std::holds_alternative<UpPrior>(spec)) return UpPrior::max_size;
  if (auto* abp = std::get_if<AbpPrior>(&spec)) return abp->max_size;
  return 0;
}

inline void validate(const PriorSpec& spec) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, EppPrior>) {
          MICROLINK_REQUIRE(p.theta > 0 && p.a_theta > 0 && p.b_theta > 0,
                            "EPP parameters must be positive");
        } else if constexpr (std::is_same_v<T, NbnbPrior>) {
          MICROLINK_REQUIRE(p.a > 0 && p.q > 0 && p.q < 1, "NBNBP needs a > 0, q in (0,1)");
          MICROLINK_REQUIRE(p.eta > 0 && p.theta > 0 && p.theta < 1,
                            "NBNBP needs eta > 0, theta in (0,1)");
          MICROLINK_REQUIRE(p.a_eta > 0 && p.b_eta > 0 && p.a_theta > 0 && p.b_theta > 0,
                            "NBNBP hyperprior parameters must be positive");
        } else if constexpr (std::is_same_v<T, NbdpPrior>) {
          MICROLINK_REQUIRE(p.a > 0 && p.q > 0 && p.q < 1, "NBDP needs a > 0, q in (0,1)");
          MICROLINK_REQUIRE(p.alpha > 0 && p.mu0_p > 0 && p.mu0_p < 1,
                            "NBDP needs alpha > 0, mu0 parameter in (0,1)");
        } else if constexpr (std::is_same_v<T, AbpPrior>) {
          MICROLINK_REQUIRE(p.max_size >= 1, "ABP needs M >= 1");
          const auto levels = static_cast<std::size_t>(p.max_size - 1);
          MICROLINK_REQUIRE(p.a.size() == levels && p.b.size() == levels && p.theta.size() == levels,
                            "ABP stores exactly M - 1 Beta pairs and theta values");
          for (std::size_t k = 0; k < levels; ++k) {
            MICROLINK_REQUIRE(p.a[k] > 0 && p.b[k] > 0, "ABP Beta parameters must be positive");
            MICROLINK_REQUIRE(p.theta[k] > 0 && p.theta[k] < 1, "ABP theta_k must be in (0,1)");
          }
        }
      },
      spec);
}

// ---------------------------------------------------------------------------
// Elementary distributions over {1, 2, ...}

// NB(k; a, q) on {0, 1, ...} with mean a q / (1 - q).
inline double negbin_log_pmf(long k, double a, double q) {
  return log_gamma(k + a) - log_gamma(a) - log_factorial(static_cast<double>(k)) +
         k * std::log(q) + a * std::log1p(-q);
}

// NB truncated to {1, 2, ...}.
inline double trunc_negbin_log_pmf(long k, double a, double q) {
  if (k < 1) return kNegInf;
  const double log_p0 = a * std::log1p(-q);
  return negbin_log_pmf(k, a, q) - std::log(-std::expm1(log_p0));
}

inline long sample_trunc_negbin(double a, double q, Rng& rng) {
  const double p0 = std::exp(a * std::log1p(-q));
  if (p0 < 0.5) {
    for (;;) {
      const long k = rng.poisson(rng.gamma(a, (1.0 - q) / q));
      if (k >= 1) return k;
    }
  }
  // Sequential inversion on the truncated pmf.
  double u = rng.uniform() * (1.0 - p0);
  double pk = p0 * a * q;  // pmf at k = 1
  long k = 1;
  while (u > pk && k < 100000000L) {
    u -= pk;
    pk *= (k + a) / (k + 1.0) * q;
    ++k;
  }
  return k;
}

// Geometric on {1, 2, ...}: p (1 - p)^{s - 1}.
inline double geometric_log_pmf(long s, double p) {
  if (s < 1) return kNegInf;
  return std::log(p) + (s - 1) * std::log1p(-p);
}

inline long sample_geometric(double p, Rng& rng) {
  return 1 + static_cast<long>(std::floor(std::log(rng.uniform_pos()) / std::log1p(-p)));
}

// ---------------------------------------------------------------------------
// Elicitation helpers

struct NbElicitation {
  double a;
  double q;
};

// (a, q) with E[N] = sd[N] = I / 2 for the untruncated negative binomial.
inline NbElicitation nbnb_elicit(std::size_t records) {
  if (records <= 2) throw ElicitationError("NB elicitation needs I > 2");
  const double n = static_cast<double>(records);
  return {n / (n - 2.0), 1.0 - 2.0 / n};
}

struct BetaParams {
  double a;
  double b;
};

// Beta(a2, b2) for theta_2 given the prior probability `pi_singleton` of a
// record being a singleton and the coefficient of variation `cv` of theta_2.
// Uses rho = pi / (1 - pi), which puts the prior mean of theta_2 at 1 - pi.
inline BetaParams abp_elicit(double pi_singleton, double cv) {
  if (!(pi_singleton > 0.0 && pi_singleton < 1.0))
    throw ElicitationError("singleton probability must lie in (0, 1)");
  if (!(cv > 0.0)) throw ElicitationError("coefficient of variation must be positive");
  const double rho = pi_singleton / (1.0 - pi_singleton);
  const double g2 = cv * cv;
  if (rho <= g2)
    throw ElicitationError("degenerate elicitation: rho = " + std::to_string(rho) +
                           " <= cv^2 = " + std::to_string(g2) +
                           " gives a non-positive Beta shape; lower the coefficient of variation");
  const double a = (rho - g2) / ((1.0 + rho) * g2);
  return {a, a * rho};
}

// ABP with M levels, every level elicited from the same targets.
inline AbpPrior make_abp(int max_size, double pi_singleton, double cv) {
  if (max_size < 1) throw ElicitationError("ABP needs M >= 1");
  AbpPrior p;
  p.max_size = max_size;
  if (max_size >= 2) {
    const BetaParams bp = abp_elicit(pi_singleton, cv);
    for (int k = 2; k <= max_size; ++k) {
      p.a.push_back(bp.a);
      p.b.push_back(bp.b);
      p.theta.push_back(bp.a / (bp.a + bp.b));
    }
  }
  return p;
}

// Gamma hyperprior on theta whose mean puts a fraction `pi_singleton` of
// records in singleton clusters a priori (E[r_1] / I = theta / (theta + I - 1)),
// with coefficient of variation `cv`.
inline EppPrior epp_elicit(double pi_singleton, double cv, std::size_t records) {
  if (!(pi_singleton > 0.0 && pi_singleton < 1.0))
    throw ElicitationError("singleton probability must lie in (0, 1)");
  if (!(cv > 0.0)) throw ElicitationError("coefficient of variation must be positive");
  if (records < 2) throw ElicitationError("EPP elicitation needs I >= 2");
  const double mean = pi_singleton * (static_cast<double>(records) - 1.0) / (1.0 - pi_singleton);
  EppPrior p;
  p.a_theta = 1.0 / (cv * cv);
  p.b_theta = p.a_theta / mean;
  p.theta = mean;
  return p;
}

inline NbnbPrior make_nbnb(std::size_t records) {
  const NbElicitation e = nbnb_elicit(records);
  NbnbPrior p;
  p.a = e.a;
  p.q = e.q;
  p.eta = p.a_eta / p.b_eta;
  p.theta = p.a_theta / (p.a_theta + p.b_theta);
  return p;
}

inline NbdpPrior make_nbdp(std::size_t records) {
  const NbElicitation e = nbnb_elicit(records);
  NbdpPrior p;
  p.a = e.a;
  p.q = e.q;
  return p;
}

// ---------------------------------------------------------------------------
// pmf evaluation

inline AllelicVector allelic_of(const LinkageState& xi) { return xi.allelic(); }

// log[ Gamma(theta) / Gamma(I + theta) * theta^N * prod_n Gamma(S_n) ].
inline double epp_log_pmf(const LinkageState& xi, double theta) {
  MICROLINK_REQUIRE(theta > 0, "theta must be positive");
  const double n_records = static_cast<double>(xi.records());
  double out = log_gamma(theta) - log_gamma(n_records + theta) +
               static_cast<double>(xi.clusters()) * std::log(theta);
  for (int s : xi.sizes()) out += log_gamma(s);
  return out;
}

// Unnormalized log mass N! kappa(N) prod_n S_n! mu(S_n) of a Kolchin prior.
template <typename LogKappa, typename LogMu>
double kpp_log_pmf(const LinkageState& xi, LogKappa&& log_kappa, LogMu&& log_mu) {
  const auto n = static_cast<long>(xi.clusters());
  double out = log_factorial(static_cast<double>(n)) + log_kappa(n);
  for (int s : xi.sizes()) out += log_factorial(s) + log_mu(static_cast<long>(s));
  return out;
}

// Polya-urn predictive probability that a new cluster has size s given the
// sizes of the other clusters, with mu ~ DP(alpha, mu0) integrated out.
template <typename Mu0>
double nbdp_size_predictive(long s, std::span<const int> other_sizes, double alpha, Mu0&& mu0) {
  MICROLINK_REQUIRE(alpha > 0, "alpha must be positive");
  const auto same = std::count(other_sizes.begin(), other_sizes.end(), static_cast<int>(s));
  return (alpha * mu0(s) + static_cast<double>(same)) /
         (alpha + static_cast<double>(other_sizes.size()));
}

// log p(xi | r) = log[ prod_i i!^{r_i} r_i! / I! ].
inline double abp_conditional_log_pmf(const LinkageState& xi, const AllelicVector& r) {
  if (!(r == xi.allelic()))
    throw ContractViolation("abp_conditional_log_pmf: allelic vector inconsistent with xi");
  double out = -log_factorial(static_cast<double>(xi.records()));
  for (std::size_t s = 1; s <= r.max_size(); ++s) {
    const double c = r[s];
    out += c * log_factorial(static_cast<double>(s)) + log_factorial(c);
  }
  return out;
}

namespace detail {

// Q_k = floor((I - sum_{i>k} i r_i) / k); r_dense[k-1] = r_k.
inline int abp_q(std::span<const int> r_dense, int k, std::size_t records, int max_size) {
  long rest = static_cast<long>(records);
  for (int i = k + 1; i <= max_size; ++i) rest -= static_cast<long>(i) * r_dense[static_cast<std::size_t>(i - 1)];
  return static_cast<int>(rest / k);
}

// Binomial-chain log p(r_2..r_M | M); r_1 is implied.
template <typename LevelLogPmf>
double abp_chain(std::span<const int> r_dense, std::size_t records, int max_size,
                 LevelLogPmf&& level) {
  double out = 0.0;
  for (int k = max_size; k >= 2; --k) {
    const int q = abp_q(r_dense, k, records, max_size);
    out += level(k, r_dense[static_cast<std::size_t>(k - 1)], q);
    if (out == kNegInf) return out;
  }
  return out;
}

}  // namespace detail

// log p(r | M): binomial chain over r_M, ..., r_2 and a point mass for r_1.
inline double abp_allelic_log_pmf(const AllelicVector& r, const AbpPrior& spec,
                                  std::size_t records) {
  const int m = spec.max_size;
  if (r.max_size() > static_cast<std::size_t>(m)) return kNegInf;
  const std::vector<int> dense = r.dense(static_cast<std::size_t>(m));
  long q1 = static_cast<long>(records);
  for (int i = 2; i <= m; ++i) q1 -= static_cast<long>(i) * dense[static_cast<std::size_t>(i - 1)];
  if (q1 < 0 || dense[0] != q1) return kNegInf;
  return detail::abp_chain(dense, records, m, [&](int k, int rk, int q) {
    return binomial_log_pmf(rk, q, spec.theta[static_cast<std::size_t>(k - 2)]);
  });
}

// log p(xi) = log p(xi | r) + log p(r | M) at the current theta_k values.
inline double abp_joint_log_pmf(const LinkageState& xi, const AbpPrior& spec) {
  if (xi.max_cluster_size() > static_cast<std::size_t>(spec.max_size)) return kNegInf;
  return abp_conditional_log_pmf(xi, xi.allelic()) +
         abp_allelic_log_pmf(xi.allelic(), spec, xi.records());
}

// log p(xi) with every theta_k ~ Beta(a_k, b_k) integrated out
// (beta-binomial levels).
inline double abp_marginal_log_pmf(const LinkageState& xi, const AbpPrior& spec) {
  if (xi.max_cluster_size() > static_cast<std::size_t>(spec.max_size)) return kNegInf;
  const std::vector<int> dense = xi.allelic().dense(static_cast<std::size_t>(spec.max_size));
  return abp_conditional_log_pmf(xi, xi.allelic()) +
         detail::abp_chain(dense, xi.records(), spec.max_size, [&](int k, int rk, int q) {
           const auto idx = static_cast<std::size_t>(k - 2);
           return beta_binomial_log_pmf(rk, q, spec.a[idx], spec.b[idx]);
         });
}

// 0 when every cluster has at most two records (unnormalized), -inf otherwise.
inline double up_log_pmf(const LinkageState& xi) {
  return xi.max_cluster_size() <= static_cast<std::size_t>(UpPrior::max_size) ? 0.0 : kNegInf;
}

// Number of partitions of I records into singletons and r2 pairs.
inline double up_class_log_count(std::size_t records, std::size_t pairs) {
  const double n = static_cast<double>(records);
  const double r = static_cast<double>(pairs);
  return log_factorial(n) - log_factorial(n - 2 * r) - r * std::log(2.0) - log_factorial(r);
}

// log of the number of admissible partitions under the UP.
inline double up_log_normalizer(std::size_t records) {
  std::vector<double> terms;
  for (std::size_t r = 0; 2 * r <= records; ++r) terms.push_back(up_class_log_count(records, r));
  return log_sum_exp(terms);
}

// ---------------------------------------------------------------------------
// Allelic-form evaluation: log p = global(N) + sum_s level(s, r_s) + chain(r)

namespace detail {

inline double global_term(const PriorSpec& spec, std::size_t clusters, std::size_t records) {
  const double n = static_cast<double>(clusters);
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, UpPrior>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, EppPrior>) {
          return log_gamma(p.theta) - log_gamma(static_cast<double>(records) + p.theta) +
                 n * std::log(p.theta);
        } else if constexpr (std::is_same_v<T, NbnbPrior>) {
          return log_factorial(n) + trunc_negbin_log_pmf(static_cast<long>(clusters), p.a, p.q);
        } else if constexpr (std::is_same_v<T, NbdpPrior>) {
          return log_factorial(n) + trunc_negbin_log_pmf(static_cast<long>(clusters), p.a, p.q) -
                 (log_gamma(p.alpha + n) - log_gamma(p.alpha));
        } else {
          return -log_factorial(static_cast<double>(records));
        }
      },
      spec);
}

inline double level_term(const PriorSpec& spec, std::size_t size, int count) {
  if (count == 0) return 0.0;
  const double c = count;
  const double s = static_cast<double>(size);
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, UpPrior>) {
          return size > static_cast<std::size_t>(UpPrior::max_size) ? kNegInf : 0.0;
        } else if constexpr (std::is_same_v<T, EppPrior>) {
          return c * log_gamma(s);
        } else if constexpr (std::is_same_v<T, NbnbPrior>) {
          return c * (log_factorial(s) + trunc_negbin_log_pmf(static_cast<long>(size), p.eta, p.theta));
        } else if constexpr (std::is_same_v<T, NbdpPrior>) {
          const double base = p.alpha * std::exp(geometric_log_pmf(static_cast<long>(size), p.mu0_p));
          return c * log_factorial(s) + log_gamma(base + c) - log_gamma(base);
        } else {
          if (size > static_cast<std::size_t>(p.max_size)) return kNegInf;
          return c * log_factorial(s) + log_factorial(c);
        }
      },
      spec);
}

// Chain term for the ABP; r_dense[k-1] = r_k for k = 1..M.
inline double chain_term(const PriorSpec& spec, std::span<const int> r_dense, std::size_t records) {
  const auto* abp = std::get_if<AbpPrior>(&spec);
  if (abp == nullptr) return 0.0;
  return abp_chain(r_dense, records, abp->max_size, [&](int k, int rk, int q) {
    return binomial_log_pmf(rk, q, abp->theta[static_cast<std::size_t>(k - 2)]);
  });
}

}  // namespace detail

// log p(xi) under `spec` given its allelic partition (unnormalized for UP
// and the Kolchin priors; exact for EPP and ABP).
inline double prior_log_pmf(const PriorSpec& spec, const AllelicVector& r, std::size_t records) {
  double out = detail::global_term(spec, r.clusters(), records);
  for (std::size_t s = 1; s <= r.max_size(); ++s) {
    out += detail::level_term(spec, s, r[s]);
    if (out == kNegInf) return out;
  }
  if (const auto* abp = std::get_if<AbpPrior>(&spec)) {
    const std::vector<int> dense = r.dense(static_cast<std::size_t>(abp->max_size));
    out += detail::chain_term(spec, dense, records);
  }
  return out;
}

inline double prior_log_pmf(const PriorSpec& spec, const LinkageState& xi) {
  return prior_log_pmf(spec, xi.allelic(), xi.records());
}

// Scores the prior log-ratio of moving one record between clusters using
// only the allelic counts touched by the move.
class MoveScorer {
 public:
  MoveScorer(const PriorSpec& spec, std::size_t records) : spec_(&spec), records_(records) {
    if (const auto* abp = std::get_if<AbpPrior>(&spec)) abp_m_ = abp->max_size;
  }

  // log p(after) - log p(before) for a record leaving a cluster of size
  // `from_size` and joining a cluster that has `to_size` records once the
  // mover has left it (0 = fresh cluster). `allelic` is dense, index = size.
  double log_ratio(std::span<const int> allelic, std::size_t clusters, int from_size,
                   int to_size) const {
    if (from_size == to_size + 1) return 0.0;  // identity
    struct Change {
      int size;
      int delta;
    };
    Change changes[4];
    int n_changes = 0;
    auto bump = [&](int size, int delta) {
      if (size < 1) return;
      for (int k = 0; k < n_changes; ++k)
        if (changes[k].size == size) {
          changes[k].delta += delta;
          return;
        }
      changes[n_changes++] = {size, delta};
    };
    bump(from_size, -1);
    bump(from_size - 1, +1);
    bump(to_size, -1);
    bump(to_size + 1, +1);

    auto count_at = [&](int size) {
      return static_cast<std::size_t>(size) < allelic.size() ? allelic[static_cast<std::size_t>(size)] : 0;
    };

    double out = 0.0;
    for (int k = 0; k < n_changes; ++k) {
      if (changes[k].delta == 0) continue;
      const int before = count_at(changes[k].size);
      const double after_term = detail::level_term(*spec_, static_cast<std::size_t>(changes[k].size),
                                                   before + changes[k].delta);
      if (after_term == kNegInf) return kNegInf;
      out += after_term - detail::level_term(*spec_, static_cast<std::size_t>(changes[k].size), before);
    }
    const std::size_t new_clusters = clusters - (from_size == 1 ? 1 : 0) + (to_size == 0 ? 1 : 0);
    if (new_clusters != clusters)
      out += detail::global_term(*spec_, new_clusters, records_) -
             detail::global_term(*spec_, clusters, records_);
    if (abp_m_ >= 2) {
      std::vector<int>& before = scratch_before_;
      before.assign(static_cast<std::size_t>(abp_m_), 0);
      for (int s = 1; s <= abp_m_; ++s) before[static_cast<std::size_t>(s - 1)] = count_at(s);
      std::vector<int>& after = scratch_after_;
      after = before;
      for (int k = 0; k < n_changes; ++k)
        if (changes[k].size <= abp_m_) after[static_cast<std::size_t>(changes[k].size - 1)] += changes[k].delta;
      out += detail::chain_term(*spec_, after, records_) - detail::chain_term(*spec_, before, records_);
    }
    return out;
  }

 private:
  const PriorSpec* spec_;
  std::size_t records_;
  int abp_m_ = 0;
  mutable std::vector<int> scratch_before_;
  mutable std::vector<int> scratch_after_;
};

// Prior log-ratios for moving record i to each destination, relative to the
// current partition: entries 0..N-1 are the existing clusters, entry N is a
// fresh singleton. When i is already a singleton its own cluster is the
// fresh destination, so entry N is -inf and its own entry is 0.
inline std::vector<double> reassignment_log_weights(const PriorSpec& spec, const LinkageState& xi,
                                                    std::size_t i) {
  MICROLINK_REQUIRE(i < xi.records(), "record index out of range");
  const std::size_t n = xi.clusters();
  std::vector<int> allelic(xi.records() + 2, 0);
  for (int s : xi.sizes()) ++allelic[static_cast<std::size_t>(s)];
  const MoveScorer scorer(spec, xi.records());
  const auto own = static_cast<std::size_t>(xi.label(i));
  const int from = xi.sizes()[own];
  std::vector<double> out(n + 1);
  for (std::size_t c = 0; c < n; ++c) {
    const int to = xi.sizes()[c] - (c == own ? 1 : 0);
    out[c] = scorer.log_ratio(allelic, n, from, to);
  }
  out[n] = from == 1 ? kNegInf : scorer.log_ratio(allelic, n, from, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Generative sampling

enum class HyperMode {
  FromHyperprior,  // draw prior parameters from their hyperpriors first
  Fixed,           // condition on the parameter values stored in the spec
};

struct PriorDraw {
  LinkageState xi;
  PriorSpec prior;  // with the parameter values used for the draw
};

namespace detail {

// Uniform random partition with the given cluster sizes.
inline LinkageState partition_with_sizes(std::span<const long> sizes, std::size_t records,
                                         Rng& rng) {
  std::vector<int> labels;
  labels.reserve(records);
  for (std::size_t n = 0; n < sizes.size(); ++n)
    labels.insert(labels.end(), static_cast<std::size_t>(sizes[n]), static_cast<int>(n));
  rng.shuffle(labels);
  return LinkageState::from_labels(labels);
}

inline LinkageState partition_with_allelic(std::span<const int> r_dense, std::size_t records, Rng& rng) {
  std::vector<long> sizes;
  for (std::size_t k = 0; k < r_dense.size(); ++k)
    sizes.insert(sizes.end(), static_cast<std::size_t>(r_dense[k]), static_cast<long>(k + 1));
  return partition_with_sizes(sizes, records, rng);
}

}  // namespace detail

// Draws a partition of `records` items from the prior. Kolchin priors use
// rejection on sum(S_n) = I and throw SamplingError after `max_attempts`.
inline PriorDraw prior_sample(const PriorSpec& spec, std::size_t records, Rng& rng,
                              HyperMode mode = HyperMode::FromHyperprior,
                              std::size_t max_attempts = 50'000'000) {
  MICROLINK_REQUIRE(records >= 1, "need at least one record");
  validate(spec);
  const bool redraw = mode == HyperMode::FromHyperprior;
  return std::visit(
      [&](const auto& p) -> PriorDraw {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, UpPrior>) {
          std::vector<double> logw;
          for (std::size_t r = 0; 2 * r <= records; ++r) logw.push_back(up_class_log_count(records, r));
          const std::size_t pairs = rng.categorical_log(logw);
          const std::vector<int> dense = {static_cast<int>(records - 2 * pairs), static_cast<int>(pairs)};
          return {detail::partition_with_allelic(dense, records, rng), spec};
        } else if constexpr (std::is_same_v<T, EppPrior>) {
          EppPrior used = p;
          if (redraw) used.theta = rng.gamma(p.a_theta, p.b_theta);
          std::vector<int> labels(records);
          std::vector<int> sizes;
          for (std::size_t i = 0; i < records; ++i) {
            const double u = rng.uniform() * (static_cast<double>(i) + used.theta);
            double acc = 0.0;
            int chosen = -1;
            for (std::size_t c = 0; c < sizes.size(); ++c) {
              acc += sizes[c];
              if (u < acc) {
                chosen = static_cast<int>(c);
                break;
              }
            }
            if (chosen < 0) {
              chosen = static_cast<int>(sizes.size());
              sizes.push_back(0);
            }
            ++sizes[static_cast<std::size_t>(chosen)];
            labels[i] = chosen;
          }
          return {LinkageState::from_labels(labels), used};
        } else if constexpr (std::is_same_v<T, AbpPrior>) {
          AbpPrior used = p;
          if (redraw)
            for (std::size_t k = 0; k < used.theta.size(); ++k) used.theta[k] = rng.beta(p.a[k], p.b[k]);
          const int m = used.max_size;
          std::vector<int> dense(static_cast<std::size_t>(m), 0);
          for (int k = m; k >= 2; --k) {
            const int q = detail::abp_q(dense, k, records, m);
            dense[static_cast<std::size_t>(k - 1)] =
                rng.binomial(q, used.theta[static_cast<std::size_t>(k - 2)]);
          }
          long q1 = static_cast<long>(records);
          for (int i = 2; i <= m; ++i) q1 -= static_cast<long>(i) * dense[static_cast<std::size_t>(i - 1)];
          dense[0] = static_cast<int>(q1);
          return {detail::partition_with_allelic(dense, records, rng), used};
        } else {
          // Kolchin priors: N ~ kappa, sizes ~ mu, keep draws with sum = I.
          std::vector<long> sizes;
          const long total = static_cast<long>(records);
          for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
            T used = p;
            if constexpr (std::is_same_v<T, NbnbPrior>) {
              if (redraw) {
                used.eta = rng.gamma(p.a_eta, p.b_eta);
                used.theta = rng.beta(p.a_theta, p.b_theta);
                if (!(used.theta > 0.0 && used.theta < 1.0) || !(used.eta > 0.0)) continue;
              }
            }
            const long n = sample_trunc_negbin(used.a, used.q, rng);
            if (n > total) continue;
            sizes.clear();
            long sum = 0;
            bool ok = true;
            for (long c = 0; c < n; ++c) {
              long s;
              if constexpr (std::is_same_v<T, NbnbPrior>) {
                s = sample_trunc_negbin(used.eta, used.theta, rng);
              } else {
                if (rng.uniform() * (used.alpha + static_cast<double>(c)) < used.alpha)
                  s = sample_geometric(used.mu0_p, rng);
                else
                  s = sizes[rng.index(sizes.size())];
              }
              sizes.push_back(s);
              sum += s;
              if (sum + (n - c - 1) > total) {
                ok = false;
                break;
              }
            }
            if (!ok || sum != total) continue;
            return {detail::partition_with_sizes(sizes, records, rng), used};
          }
          throw SamplingError("prior_sample: " + prior_name(spec) + " rejection budget of " +
                              std::to_string(max_attempts) +
                              " attempts exhausted; raise max_attempts or use fewer records");
        }
      },
      spec);
}

}  // namespace microlink
