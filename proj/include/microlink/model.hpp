// Apache License, Version 2.0, refer to LICENSE.txt
//
// Domain types and likelihood evaluators for the joint de-duplication model:
// a latent distance model for the record network and a hit-miss distortion
// model for categorical profile fields.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "microlink/errors.hpp"
#include "microlink/linkage.hpp"

namespace microlink {

// I records x L categorical fields, codes 0-based.
class RecordTable {
 public:
  RecordTable() = default;

  RecordTable(std::size_t records, std::vector<int> domain_sizes, std::vector<int> codes)
      : records_(records), domain_sizes_(std::move(domain_sizes)), codes_(std::move(codes)) {
    if (records_ < 1) throw DataError("record table needs at least one record");
    if (domain_sizes_.empty()) throw DataError("record table needs at least one field");
    if (codes_.size() != records_ * domain_sizes_.size())
      throw DataError("record table cell count does not match I x L");
    for (std::size_t l = 0; l < domain_sizes_.size(); ++l)
      if (domain_sizes_[l] < 2)
        throw DataError("field " + std::to_string(l) + " has fewer than two categories", 0,
                        l + 1);
    for (std::size_t i = 0; i < records_; ++i)
      for (std::size_t l = 0; l < domain_sizes_.size(); ++l) {
        const int v = codes_[i * domain_sizes_.size() + l];
        if (v < 0 || v >= domain_sizes_[l])
          throw DataError("category code out of range", i + 1, l + 1);
      }
  }

  std::size_t records() const { return records_; }
  std::size_t fields() const { return domain_sizes_.size(); }
  int domain_size(std::size_t l) const { return domain_sizes_[l]; }
  std::span<const int> domain_sizes() const { return domain_sizes_; }
  int at(std::size_t i, std::size_t l) const { return codes_[i * fields() + l]; }
  std::span<const int> row(std::size_t i) const {
    return std::span<const int>(codes_).subspan(i * fields(), fields());
  }
  std::span<const int> codes() const { return codes_; }

 private:
  std::size_t records_ = 0;
  std::vector<int> domain_sizes_;
  std::vector<int> codes_;
};

// Undirected simple graph on record indices.
class Network {
 public:
  struct Edge {
    int i;
    int j;  // i < j
    bool operator==(const Edge&) const = default;
    auto operator<=>(const Edge&) const = default;
  };

  Network() = default;

  Network(std::size_t nodes, std::vector<std::pair<int, int>> edges) : nodes_(nodes) {
    edges_.reserve(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      auto [a, b] = edges[e];
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= nodes ||
          static_cast<std::size_t>(b) >= nodes)
        throw DataError("edge endpoint out of range", e + 1);
      if (a == b) throw DataError("self-loop on node " + std::to_string(a), e + 1);
      if (a > b) std::swap(a, b);
      edges_.push_back({a, b});
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
      throw DataError("duplicate edge");
    adjacency_.assign(nodes_, {});
    bits_.assign(nodes_ * nodes_, 0);
    for (const auto& e : edges_) {
      adjacency_[static_cast<std::size_t>(e.i)].push_back(e.j);
      adjacency_[static_cast<std::size_t>(e.j)].push_back(e.i);
      bits_[static_cast<std::size_t>(e.i) * nodes_ + static_cast<std::size_t>(e.j)] = 1;
      bits_[static_cast<std::size_t>(e.j) * nodes_ + static_cast<std::size_t>(e.i)] = 1;
    }
    for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
  }

  std::size_t nodes() const { return nodes_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const int> neighbors(std::size_t i) const { return adjacency_[i]; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }
  bool has_edge(std::size_t i, std::size_t j) const { return bits_[i * nodes_ + j] != 0; }

 private:
  std::size_t nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<std::uint8_t> bits_;
};

// Everything but the linkage structure and the partition-prior parameters.
struct LatentState {
  double beta = 0.0;
  double sigma2 = 1.0;
  std::size_t dim = 2;                          // K
  std::vector<double> positions;                // N x K, u_n
  std::vector<int> true_values;                 // N x L, pi_{n,l}
  std::vector<std::vector<double>> field_probs; // per field, theta_l
  std::vector<double> distortion_probs;         // psi_l
  std::vector<std::uint8_t> distorted;          // I x L, w_{i,l}

  std::size_t fields() const { return field_probs.size(); }

  std::span<double> position(std::size_t n) {
    return std::span<double>(positions).subspan(n * dim, dim);
  }
  std::span<const double> position(std::size_t n) const {
    return std::span<const double>(positions).subspan(n * dim, dim);
  }
  int& true_value(std::size_t n, std::size_t l) { return true_values[n * fields() + l]; }
  int true_value(std::size_t n, std::size_t l) const { return true_values[n * fields() + l]; }
  std::uint8_t& is_distorted(std::size_t i, std::size_t l) { return distorted[i * fields() + l]; }
  bool is_distorted(std::size_t i, std::size_t l) const {
    return distorted[i * fields() + l] != 0;
  }
};

struct HyperParams {
  double omega = 100.0;  // prior sd of beta
  double a_sigma = 6.0;
  double b_sigma = 1.0;
  std::vector<std::vector<double>> alpha_field;  // Dirichlet alpha_{l,m}
  double a_dist = 1.0;                           // Beta(a, b) on psi_l
  double b_dist = 99.0;
  std::size_t dim = 2;  // K

  void validate(std::span<const int> domain_sizes) const {
    MICROLINK_REQUIRE(omega > 0 && a_sigma > 0 && b_sigma > 0 && a_dist > 0 && b_dist > 0,
                      "hyperparameters must be positive");
    MICROLINK_REQUIRE(dim >= 1, "latent dimension must be at least 1");
    MICROLINK_REQUIRE(alpha_field.size() == domain_sizes.size(),
                      "one Dirichlet parameter vector per field");
    for (std::size_t l = 0; l < domain_sizes.size(); ++l) {
      MICROLINK_REQUIRE(alpha_field[l].size() == static_cast<std::size_t>(domain_sizes[l]),
                        "Dirichlet parameter length must equal the domain size");
      for (double a : alpha_field[l]) MICROLINK_REQUIRE(a > 0, "Dirichlet parameter <= 0");
    }
  }
};

inline double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double log_expit(double x) { return -softplus(-x); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double edge_logit(double beta, std::span<const double> u_a, std::span<const double> u_b) {
  MICROLINK_REQUIRE(u_a.size() == u_b.size(), "position dimensions differ");
  return beta - distance(u_a, u_b);
}

// Bernoulli log-likelihood of one record pair, y in {0,1}.
inline double pair_loglik(bool y, double eta) { return (y ? eta : 0.0) - softplus(eta); }

// Log-likelihood of the whole network over all record pairs i < i'. Pairs
// inside one cluster sit at distance zero and have edge probability
// expit(beta). Evaluated by aggregating pairs per cluster pair.
inline double network_loglik(const Network& net, const LinkageState& xi, double beta,
                             std::span<const double> positions, std::size_t dim) {
  MICROLINK_REQUIRE(net.nodes() == xi.records(), "network and linkage sizes differ");
  MICROLINK_REQUIRE(dim >= 1 && positions.size() == xi.clusters() * dim,
                    "positions must be N x K");
  const std::size_t n = xi.clusters();
  const auto sizes = xi.sizes();
  auto pos = [&](std::size_t c) { return positions.subspan(c * dim, dim); };
  double non_edge = 0.0;
  const double within = softplus(beta);
  for (std::size_t a = 0; a < n; ++a) {
    const double sa = sizes[a];
    non_edge += 0.5 * sa * (sa - 1.0) * within;
    for (std::size_t b = a + 1; b < n; ++b)
      non_edge += sa * sizes[b] * softplus(beta - distance(pos(a), pos(b)));
  }
  double edge = 0.0;
  for (const auto& e : net.edges()) {
    const auto la = static_cast<std::size_t>(xi.label(static_cast<std::size_t>(e.i)));
    const auto lb = static_cast<std::size_t>(xi.label(static_cast<std::size_t>(e.j)));
    edge += la == lb ? beta : beta - distance(pos(la), pos(lb));
  }
  return edge - non_edge;
}

// (1 - psi) 1[p = pi] + psi theta(p): the record-field likelihood with the
// distortion indicator summed out.
inline double marginal_record_field_lik(int p, int pi_val, double psi_l,
                                        std::span<const double> theta_l) {
  return (p == pi_val ? 1.0 - psi_l : 0.0) + psi_l * theta_l[static_cast<std::size_t>(p)];
}

// Sum over records and fields of log p(p_{i,l} | pi, w, theta). Undistorted
// cells must carry the latent value of their cluster.
inline double profile_loglik(const RecordTable& tab, const LinkageState& xi,
                             const LatentState& latent) {
  MICROLINK_REQUIRE(tab.records() == xi.records(), "table and linkage sizes differ");
  MICROLINK_REQUIRE(latent.fields() == tab.fields(), "field count mismatch");
  MICROLINK_REQUIRE(latent.true_values.size() == xi.clusters() * tab.fields(),
                    "latent values must be N x L");
  MICROLINK_REQUIRE(latent.distorted.size() == tab.records() * tab.fields(),
                    "distortion indicators must be I x L");
  double total = 0.0;
  for (std::size_t i = 0; i < tab.records(); ++i) {
    const auto n = static_cast<std::size_t>(xi.label(i));
    for (std::size_t l = 0; l < tab.fields(); ++l) {
      const int p = tab.at(i, l);
      if (latent.is_distorted(i, l)) {
        total += std::log(latent.field_probs[l][static_cast<std::size_t>(p)]);
      } else if (p != latent.true_value(n, l)) {
        throw ContractViolation("profile_loglik: undistorted cell (" + std::to_string(i) + ", " +
                                std::to_string(l) + ") disagrees with its latent value");
      }
    }
  }
  return total;
}

struct NetworkHypers {
  double omega;
  double a_sigma;
  double b_sigma;
};

// Default network hyperparameters for I records in K dimensions.
inline NetworkHypers elicit_network_hypers(std::size_t records, std::size_t dim) {
  if (records <= 4)
    throw ElicitationError("network elicitation needs more than 4 records (sqrt(I) - 2 > 0)");
  if (dim < 1) throw ElicitationError("latent dimension must be at least 1");
  const double n = static_cast<double>(records);
  const double k = static_cast<double>(dim);
  const double a_sigma = 2.0 + 1.0 / (0.5 * 0.5);
  const double ball = std::pow(std::numbers::pi, k / 2.0) / std::tgamma(k / 2.0 + 1.0);
  const double b_sigma =
      (a_sigma - 1.0) * (std::sqrt(n) / (std::sqrt(n) - 2.0)) * ball * std::pow(n, 2.0 / k);
  return {100.0, a_sigma, b_sigma};
}

// Network elicitation plus the profile defaults: alpha_{l,m} = 1, a = 1, b = 99.
inline HyperParams elicit_hyperparams(std::size_t records, std::size_t dim,
                                      std::span<const int> domain_sizes) {
  const NetworkHypers net = elicit_network_hypers(records, dim);
  HyperParams h;
  h.omega = net.omega;
  h.a_sigma = net.a_sigma;
  h.b_sigma = net.b_sigma;
  h.dim = dim;
  h.a_dist = 1.0;
  h.b_dist = 99.0;
  for (int m : domain_sizes) h.alpha_field.emplace_back(static_cast<std::size_t>(m), 1.0);
  return h;
}

}  // namespace microlink
