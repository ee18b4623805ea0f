// Apache License, Version 2.0, refer to LICENSE.txt
//
// Elementwise link functions on Eigen arrays (SIMD exp/log).

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>

#include "microlink/errors.hpp"
#include "microlink/random.hpp"

namespace microlink {

// log(1 + e^x). log1p(t) is recovered from log(1 + t) with the
// ((1 + t) - 1 - t) / (1 + t) correction, which keeps full precision for
// tiny t without a scalar log1p.
inline Eigen::ArrayXd softplus(const Eigen::ArrayXd& x) {
  const Eigen::ArrayXd t = (-x.abs()).exp();
  const Eigen::ArrayXd u = 1.0 + t;
  return x.max(0.0) + u.log() - ((u - 1.0) - t) / u;
}

inline Eigen::ArrayXd expit(const Eigen::ArrayXd& x) { return 1.0 / (1.0 + (-x).exp()); }

// Index drawn proportionally to exp(log_weights); -inf entries are never chosen.
inline std::size_t sample_log_weights(const Eigen::Ref<const Eigen::ArrayXd>& log_weights, Rng& rng) {
  const double mx = log_weights.maxCoeff();
  MICROLINK_REQUIRE(std::isfinite(mx), "no admissible category");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const Eigen::ArrayXd w = (log_weights == neg_inf).select(0.0, (log_weights - mx).exp());
  double target = rng.uniform() * w.sum();
  std::size_t last = 0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    if (w[k] <= 0.0) continue;
    last = static_cast<std::size_t>(k);
    target -= w[k];
    if (target < 0.0) return last;
  }
  return last;
}

inline std::size_t sample_log_weights(std::span<const double> log_weights, Rng& rng) {
  return sample_log_weights(Eigen::Map<const Eigen::ArrayXd>(log_weights.data(), static_cast<Eigen::Index>(log_weights.size())), rng);
}

}  // namespace microlink
