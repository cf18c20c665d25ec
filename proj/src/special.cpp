#include "sivi/special.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sivi {

double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: x must be > 0");
  double acc = 0.0;
  // Recurrence psi(x) = psi(x+1) - 1/x until the asymptotic series applies.
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Asymptotic expansion with Bernoulli-number coefficients.
  double series = -0.5 * inv;
  series -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return acc + std::log(x) + series;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("trigamma: x must be > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series = inv * (1.0 + 0.5 * inv);
  series += inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))));
  return acc + series;
}

double log1pexp(double x) {
  if (x > 33.0) return x;           // exp(-x) below double epsilon
  if (x < -37.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

void ascending_order(const double* values, std::size_t n,
                     std::vector<std::uint32_t>& order) {
  order.resize(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return values[a] < values[b]; });
}

double logmeanexp(const double* xs, std::size_t n) {
  if (n == 0) throw std::invalid_argument("logmeanexp: empty input");
  std::vector<std::uint32_t> order;
  ascending_order(xs, n, order);
  const double m = xs[order[n - 1]];
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(xs[order[k]] - m);
  return m + std::log(s) - std::log(static_cast<double>(n));
}

}  // namespace sivi
