#include "sivi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace sivi {
namespace {

// Survival function of the Kolmogorov distribution, truncated at 100 terms.
// Accurate once the k=100 term is negligible; below that radius the true
// tail mass is 1 to double precision, so return exactly 1.
double kolmogorov_p(double lambda) {
  if (lambda < 0.04) return 1.0;
  double s = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    s += sign * std::exp(-2.0 * k * k * lambda * lambda);
    sign = -sign;
  }
  const double p = 2.0 * s;
  return std::min(1.0, std::max(0.0, p));
}

// Average ranks (ties share the mean of their positions), 1-based.
std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("ks_two_sample: both samples need >= 2 points");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  const std::size_t n1 = sa.size();
  const std::size_t n2 = sb.size();
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < n1 && j < n2) {
    const double v = std::min(sa[i], sb[j]);
    while (i < n1 && sa[i] <= v) ++i;
    while (j < n2 && sb[j] <= v) ++j;
    const double diff = static_cast<double>(i) / static_cast<double>(n1) -
                        static_cast<double>(j) / static_cast<double>(n2);
    d = std::max(d, std::fabs(diff));
  }

  const double ne =
      static_cast<double>(n1) * static_cast<double>(n2) /
      (static_cast<double>(n1) + static_cast<double>(n2));
  const double rt = std::sqrt(ne);
  const double lambda = d * (rt + 0.12 + 0.11 / rt);
  return {d, kolmogorov_p(lambda), n1, n2};
}

GaussianOracle gaussian_oracle(const GaussianSandwichCase& c) {
  if (!(c.sigma_sq > 0.0) || !(c.tau_sq > 0.0))
    throw std::invalid_argument("gaussian_oracle: variances must be positive");
  const double s2 = c.sigma_sq + c.tau_sq;
  const double m2 = c.m * c.m;
  GaussianOracle out;
  out.elbo = -0.5 * (s2 + m2 - 1.0 - std::log(s2));
  out.lower = -0.5 * (s2 + m2 - 1.0 - std::log(c.sigma_sq));
  out.upper = 0.5 * std::log(c.sigma_sq) - 0.5 * (s2 + m2) +
              (s2 + c.tau_sq) / (2.0 * c.sigma_sq);
  return out;
}

SummaryStats summary_stats(const Tensor& draws) {
  const std::size_t n = draws.rows();
  const std::size_t d = draws.cols();
  if (n < 2) throw std::invalid_argument("summary_stats: need >= 2 rows");

  SummaryStats out;
  out.mean.assign(d, 0.0);
  out.sd.assign(d, 0.0);
  out.zero_variance.assign(d, false);
  out.corr = Tensor::zeros({d, d});

  for (std::size_t r = 0; r < n; ++r) {
    const double* row = draws.row(r);
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += row[c];
  }
  for (std::size_t c = 0; c < d; ++c) out.mean[c] /= static_cast<double>(n);

  // Scatter matrix about the means.
  Tensor scat = Tensor::zeros({d, d});
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = draws.row(r);
    for (std::size_t u = 0; u < d; ++u) {
      const double du = row[u] - out.mean[u];
      double* srow = scat.row(u);
      for (std::size_t v = 0; v <= u; ++v) srow[v] += du * (row[v] - out.mean[v]);
    }
  }
  for (std::size_t u = 0; u < d; ++u)
    for (std::size_t v = u + 1; v < d; ++v) scat.row(u)[v] = scat.row(v)[u];

  for (std::size_t c = 0; c < d; ++c) {
    const double var = scat.row(c)[c];
    out.sd[c] = std::sqrt(std::max(var, 0.0) / static_cast<double>(n - 1));
    if (var == 0.0) out.zero_variance[c] = true;
  }

  for (std::size_t u = 0; u < d; ++u) {
    for (std::size_t v = 0; v < d; ++v) {
      if (out.zero_variance[u] || out.zero_variance[v]) {
        out.corr.row(u)[v] = 0.0;
      } else if (scat.row(u)[v] == scat.row(u)[u] &&
                 scat.row(u)[v] == scat.row(v)[v]) {
        // Identical scatter entries mean the centred columns coincide
        // (e.g. duplicated columns): report exactly +1.
        out.corr.row(u)[v] = 1.0;
      } else {
        out.corr.row(u)[v] =
            scat.row(u)[v] / std::sqrt(scat.row(u)[u] * scat.row(v)[v]);
      }
    }
  }
  return out;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman_rho: need equal sizes >= 2");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace sivi
