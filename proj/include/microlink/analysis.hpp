// Apache License, Version 2.0, refer to LICENSE.txt
//
// Posterior summaries: co-clustering frequencies, a Binder-loss point
// estimate, pairwise linkage metrics, population size, descriptive network
// statistics and the microclustering diagnostic.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "microlink/errors.hpp"
#include "microlink/linkage.hpp"
#include "microlink/model.hpp"
#include "microlink/priors.hpp"
#include "microlink/random.hpp"

namespace microlink {

// I x I co-clustering frequencies, row-major.
class PosteriorSimilarity {
 public:
  PosteriorSimilarity() = default;
  PosteriorSimilarity(std::size_t records, std::vector<double> values)
      : records_(records), values_(std::move(values)) {
    MICROLINK_REQUIRE(values_.size() == records_ * records_, "similarity must be I x I");
  }

  std::size_t records() const { return records_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * records_ + j]; }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t records_ = 0;
  std::vector<double> values_;
};

template <typename Labels>
PosteriorSimilarity similarity_matrix(std::span<const Labels> samples) {
  MICROLINK_REQUIRE(!samples.empty(), "need at least one sample");
  const std::size_t n = samples.front().size();
  std::vector<long> counts(n * n, 0);
  for (const auto& s : samples) {
    MICROLINK_REQUIRE(s.size() == n, "samples have different lengths");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (s[i] == s[j]) ++counts[i * n + j];
  }
  std::vector<double> v(n * n, 0.0);
  const double total = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    v[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = v[j * n + i] = counts[i * n + j] / total;
  }
  return {n, std::move(v)};
}

inline PosteriorSimilarity similarity_matrix(const std::vector<std::vector<int>>& samples) {
  return similarity_matrix(std::span<const std::vector<int>>(samples));
}

// Expected Binder loss (equal costs) of `est` up to a constant:
// sum_{i<j} [est together] (1 - s_ij) + [apart] s_ij.
inline double binder_loss(const PosteriorSimilarity& sim, const LinkageState& est) {
  MICROLINK_REQUIRE(sim.records() == est.records(), "size mismatch");
  double out = 0.0;
  for (std::size_t i = 0; i < est.records(); ++i)
    for (std::size_t j = i + 1; j < est.records(); ++j)
      out += est.together(i, j) ? 1.0 - sim(i, j) : sim(i, j);
  return out;
}

// Greedy agglomeration: merge the cluster pair with the largest positive
// gain sum_{cross pairs} (s - 1/2) until no merge lowers the loss. Ties go
// to the pair with the smallest indices.
inline LinkageState binder_point_estimate(const PosteriorSimilarity& sim) {
  const std::size_t n = sim.records();
  std::vector<int> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = static_cast<int>(i);
  std::vector<char> alive(n, 1);
  std::vector<double> gain(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b) gain[a * n + b] = sim(a, b) - 0.5;
  for (;;) {
    double best = 0.0;
    std::size_t ba = n, bb = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!alive[b]) continue;
        const double g = gain[a * n + b];
        if (g > best + 1e-12) {
          best = g;
          ba = a;
          bb = b;
        }
      }
    }
    if (ba == n) break;
    // Merge bb into ba.
    alive[bb] = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (label[i] == static_cast<int>(bb)) label[i] = static_cast<int>(ba);
    for (std::size_t c = 0; c < n; ++c) {
      if (!alive[c] || c == ba) continue;
      const double g = gain[ba * n + c] + gain[bb * n + c];
      gain[ba * n + c] = gain[c * n + ba] = g;
    }
  }
  return LinkageState::from_labels(label);
}

struct PairwiseMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

// Over unordered record pairs. Empty estimated pair set gives precision 1;
// empty true pair set gives recall 1; F1 is 0 when P + R = 0.
inline PairwiseMetrics pairwise_metrics(const LinkageState& est, const LinkageState& truth) {
  if (est.records() != truth.records())
    throw DataError("estimate has " + std::to_string(est.records()) + " records, truth has " +
                    std::to_string(truth.records()));
  auto pairs = [](const LinkageState& xi) {
    long total = 0;
    for (int s : xi.sizes()) total += static_cast<long>(s) * (s - 1) / 2;
    return total;
  };
  // |est ∩ truth| via the contingency table of the two labelings.
  long common = 0;
  {
    std::vector<std::vector<int>> members(est.clusters());
    for (std::size_t i = 0; i < est.records(); ++i)
      members[static_cast<std::size_t>(est.label(i))].push_back(truth.label(i));
    for (auto& m : members) {
      std::sort(m.begin(), m.end());
      for (std::size_t a = 0; a < m.size();) {
        std::size_t b = a;
        while (b < m.size() && m[b] == m[a]) ++b;
        const long c = static_cast<long>(b - a);
        common += c * (c - 1) / 2;
        a = b;
      }
    }
  }
  const long est_pairs = pairs(est);
  const long true_pairs = pairs(truth);
  PairwiseMetrics out;
  out.precision = est_pairs == 0 ? 1.0 : static_cast<double>(common) / est_pairs;
  out.recall = true_pairs == 0 ? 1.0 : static_cast<double>(common) / true_pairs;
  if (est_pairs == 0 && true_pairs > 0) out.recall = 0.0;
  out.f1 = out.precision + out.recall > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

// Sample mean and (n - 1) standard deviation.
inline MeanSd mean_sd(std::span<const double> xs) {
  MICROLINK_REQUIRE(xs.size() >= 2, "need at least two values");
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double x : xs) {  // Welford
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  return {mean, std::sqrt(m2 / static_cast<double>(n - 1))};
}

inline MeanSd population_size_summary(const std::vector<std::vector<int>>& samples) {
  std::vector<double> sizes;
  sizes.reserve(samples.size());
  for (const auto& s : samples) {
    int mx = -1;
    for (int v : s) mx = std::max(mx, v);
    std::vector<char> seen(static_cast<std::size_t>(mx + 1), 0);
    double count = 0;
    for (int v : s)
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        count += 1;
      }
    sizes.push_back(count);
  }
  return mean_sd(sizes);
}

struct NetworkStats {
  double transitivity = 0.0;
  double assortativity = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  double density = 0.0;
};

inline NetworkStats network_stats(const Network& net) {
  const std::size_t n = net.nodes();
  MICROLINK_REQUIRE(n >= 3, "network statistics need at least three nodes");
  NetworkStats out;
  out.density = 2.0 * static_cast<double>(net.edge_count()) / (static_cast<double>(n) * (n - 1));
  double triangles = 0.0, triples = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const auto nb = net.neighbors(v);
    const double d = static_cast<double>(nb.size());
    triples += d * (d - 1.0) / 2.0;
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b)
        if (net.has_edge(static_cast<std::size_t>(nb[a]), static_cast<std::size_t>(nb[b]))) triangles += 1.0;
  }
  // Each triangle is counted once per vertex, i.e. three times.
  out.transitivity = triples > 0 ? triangles / triples : 0.0;
  // Degree assortativity: Pearson correlation of degrees over both
  // orientations of every edge.
  double sx = 0, sxx = 0, sxy = 0, m = 0;
  for (const auto& e : net.edges()) {
    const double a = static_cast<double>(net.degree(static_cast<std::size_t>(e.i)));
    const double b = static_cast<double>(net.degree(static_cast<std::size_t>(e.j)));
    sx += a + b;
    sxx += a * a + b * b;
    sxy += 2.0 * a * b;
    m += 2.0;
  }
  if (m > 0) {
    const double mean = sx / m;
    const double var = sxx / m - mean * mean;
    if (var > 1e-12) out.assortativity = (sxy / m - mean * mean) / var;
  }
  return out;
}

struct MicroclusteringRow {
  std::size_t records;
  double mean_max_fraction;  // E[M_max / I]
};

// Monte Carlo E[M_max / I] under the prior for each I in the grid. Prior
// parameters are held at the values in `spec`.
inline std::vector<MicroclusteringRow> microclustering_diagnostic(const PriorSpec& spec,
                                                                  std::span<const std::size_t> grid,
                                                                  std::size_t draws, Rng& rng) {
  MICROLINK_REQUIRE(draws >= 1, "need at least one draw");
  for (std::size_t k = 1; k < grid.size(); ++k)
    MICROLINK_REQUIRE(grid[k] > grid[k - 1], "grid must be increasing");
  std::vector<MicroclusteringRow> out;
  for (std::size_t records : grid) {
    double total = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
      const PriorDraw draw = prior_sample(spec, records, rng, HyperMode::Fixed);
      total += static_cast<double>(draw.xi.max_cluster_size()) / static_cast<double>(records);
    }
    out.push_back({records, total / static_cast<double>(draws)});
  }
  return out;
}

}  // namespace microlink
