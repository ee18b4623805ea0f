// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <limits>

#include <math.h>

namespace microlink {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Reentrant lgamma (std::lgamma writes the global signgam).
inline double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

inline double log_factorial(double n) { return log_gamma(n + 1.0); }

inline double log_choose(double n, double k) {
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

inline double log_beta_fn(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

inline double binomial_log_pmf(int k, int n, double p) {
  if (k < 0 || k > n) return kNegInf;
  double out = log_choose(n, k);
  if (k > 0) out += k * std::log(p);
  if (n - k > 0) out += (n - k) * std::log1p(-p);
  return out;
}

inline double beta_binomial_log_pmf(int k, int n, double a, double b) {
  if (k < 0 || k > n) return kNegInf;
  return log_choose(n, k) + log_beta_fn(k + a, n - k + b) - log_beta_fn(a, b);
}

inline double gamma_log_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - log_gamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double beta_log_pdf(double x, double a, double b) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

inline double normal_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * 3.14159265358979323846);
}

}  // namespace microlink
