// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "microlink/errors.hpp"

namespace microlink {

// Seeded random source. One instance per chain; never shared across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  std::mt19937_64& engine() { return engine_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); safe to take the log of.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  // Uniform integer on [0, n).
  std::size_t index(std::size_t n) {
    const unsigned __int128 m =
        static_cast<unsigned __int128>(engine_()) * static_cast<std::uint64_t>(n);
    return static_cast<std::size_t>(m >> 64);
  }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }

  // Gamma with shape/rate parameterization.
  double gamma(double shape, double rate) {
    using P = std::gamma_distribution<double>::param_type;
    return gamma_(engine_, P(shape, 1.0 / rate));
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  // Inverse gamma with shape/scale, i.e. 1/Gamma(shape, rate = scale).
  double inv_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

  bool bernoulli(double p) { return uniform() < p; }

  int binomial(int n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::binomial_distribution<int> d(n, p);
    return d(engine_);
  }

  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<long> d(mean);
    return d(engine_);
  }

  std::vector<double> dirichlet(std::span<const double> alpha) {
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      out[k] = gamma(alpha[k], 1.0);
      total += out[k];
    }
    for (double& v : out) v /= total;
    return out;
  }

  // Draw an index proportional to exp(log_weights). Entries equal to -inf
  // are never chosen; at least one entry must be finite.
  std::size_t categorical_log(std::span<const double> log_weights) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double w : log_weights) mx = std::max(mx, w);
    MICROLINK_REQUIRE(std::isfinite(mx), "no admissible category");
    double total = 0.0;
    for (double w : log_weights) total += std::exp(w - mx);
    double target = uniform() * total;
    std::size_t last = 0;
    for (std::size_t k = 0; k < log_weights.size(); ++k) {
      if (log_weights[k] == -std::numeric_limits<double>::infinity()) continue;
      last = k;
      target -= std::exp(log_weights[k] - mx);
      if (target < 0.0) return k;
    }
    return last;
  }

  // Draw an index proportional to non-negative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    MICROLINK_REQUIRE(total > 0.0, "all category weights are zero");
    double target = uniform() * total;
    std::size_t last = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] <= 0.0) continue;
      last = k;
      target -= weights[k];
      if (target < 0.0) return k;
    }
    return last;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t k = v.size(); k > 1; --k) std::swap(v[k - 1], v[index(k)]);
  }

  // Moves a uniform random subset of size `count` to the front of `pool`
  // (partial Fisher-Yates). The pool stays a permutation of its input.
  template <typename T>
  void partial_shuffle(std::vector<T>& pool, std::size_t count) {
    count = std::min(count, pool.size());
    for (std::size_t k = 0; k < count; ++k)
      std::swap(pool[k], pool[k + index(pool.size() - k)]);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::gamma_distribution<double> gamma_;
};

inline double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace microlink
