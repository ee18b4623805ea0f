// Apache License, Version 2.0, refer to LICENSE.txt
//
// Starting values for the latent positions: classical multidimensional
// scaling of shortest-path distances, rescaled and paired with an intercept
// that maximizes the latent distance likelihood.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "microlink/model.hpp"

namespace microlink {

struct Embedding {
  std::vector<double> positions;  // I x K
  double beta = 0.0;
};

// Hop distances from every node; unreachable pairs get (max finite + 1).
inline Eigen::MatrixXd geodesic_distances(const Network& net) {
  const std::size_t n = net.nodes();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(n), -1.0);
  std::vector<int> dist(n);
  std::queue<std::size_t> frontier;
  double longest = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    frontier.push(s);
    while (!frontier.empty()) {
      const std::size_t v = frontier.front();
      frontier.pop();
      for (int w : net.neighbors(v)) {
        if (dist[static_cast<std::size_t>(w)] >= 0) continue;
        dist[static_cast<std::size_t>(w)] = dist[v] + 1;
        frontier.push(static_cast<std::size_t>(w));
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = dist[t];
      longest = std::max(longest, static_cast<double>(dist[t]));
    }
  }
  for (Eigen::Index k = 0; k < d.size(); ++k)
    if (d.data()[k] < 0) d.data()[k] = longest + 1.0;
  return d;
}

// Log-likelihood of the network over all record pairs when record i sits at
// row i of `x` (no linkage).
inline double record_network_loglik(const Network& net, const Eigen::MatrixXd& x, double beta) {
  const auto n = x.rows();
  double out = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double eta = beta - (x.row(i) - x.row(j)).norm();
      out += pair_loglik(net.has_edge(static_cast<std::size_t>(i), static_cast<std::size_t>(j)), eta);
    }
  return out;
}

// Newton ascent in beta with positions fixed (the likelihood is concave in beta).
inline double fit_intercept(const Network& net, const Eigen::MatrixXd& x, double beta) {
  const auto n = x.rows();
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  std::vector<char> y;
  y.reserve(dist.capacity());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist.push_back((x.row(i) - x.row(j)).norm());
      y.push_back(net.has_edge(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1 : 0);
    }
  for (int it = 0; it < 50; ++it) {
    double g = 0.0, h = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      const double p = expit(beta - dist[k]);
      g += y[k] - p;
      h += p * (1.0 - p);
    }
    if (h <= 0.0) break;
    const double step = std::clamp(g / h, -5.0, 5.0);
    beta += step;
    if (std::abs(step) < 1e-8) break;
  }
  return beta;
}

inline Embedding embed_network(const Network& net, std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(net.nodes());
  const auto k = static_cast<Eigen::Index>(dim);
  MICROLINK_REQUIRE(n >= 2 && k >= 1, "embedding needs at least two nodes");
  const Eigen::MatrixXd d = geodesic_distances(net);
  const Eigen::MatrixXd d2 = d.array().square().matrix();
  const Eigen::VectorXd row_mean = d2.rowwise().mean();
  const double grand = d2.mean();
  Eigen::MatrixXd b(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      b(i, j) = -0.5 * (d2(i, j) - row_mean(i) - row_mean(j) + grand);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index c = 0; c < std::min(k, n); ++c) {
    const Eigen::Index src = n - 1 - c;  // eigenvalues ascend
    const double lambda = std::max(eig.eigenvalues()(src), 0.0);
    x.col(c) = eig.eigenvectors().col(src) * std::sqrt(lambda);
  }

  Embedding best;
  double best_ll = -std::numeric_limits<double>::infinity();
  double beta = 0.0;
  for (double scale = 0.25; scale <= 16.0; scale *= std::sqrt(2.0)) {
    const Eigen::MatrixXd xs = x * scale;
    beta = fit_intercept(net, xs, beta);
    const double ll = record_network_loglik(net, xs, beta);
    if (ll > best_ll) {
      best_ll = ll;
      best.beta = beta;
      best.positions.assign(static_cast<std::size_t>(n * k), 0.0);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < k; ++c)
          best.positions[static_cast<std::size_t>(i * k + c)] = xs(i, c);
    }
  }
  return best;
}

}  // namespace microlink
