#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sivi/tensor.hpp"

namespace sivi {

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov–Smirnov test.
// ---------------------------------------------------------------------------

struct KsResult {
  double d = 0.0;        // sup-norm ECDF distance, in [0, 1]
  double p_value = 1.0;  // asymptotic p-value, in [0, 1]
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

// D = sup |ECDF_a - ECDF_b| evaluated over the union of sample points.
// The p-value uses the asymptotic Kolmogorov series (100 terms) at
// lambda = D * (sqrt(n_e) + 0.12 + 0.11/sqrt(n_e)), n_e = n1*n2/(n1+n2),
// the classic finite-sample correction.  For lambda below the radius where
// the truncated series is accurate the p-value is exactly 1 (the true tail
// mass there is 1 to double precision).  Requires n1, n2 >= 2.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Closed-form sandwich oracle for a fully Gaussian semi-implicit family.
// ---------------------------------------------------------------------------

// Conditional q(z|psi) = N(psi, sigma_sq), mixing psi ~ N(m, tau_sq),
// marginal h = N(m, sigma_sq + tau_sq), target p = N(0, 1).
struct GaussianSandwichCase {
  double sigma_sq = 0.5;
  double tau_sq = 0.5;
  double m = 0.0;
};

struct GaussianOracle {
  double elbo = 0.0;   // E_h[log p - log h]
  double lower = 0.0;  // E_psi E_{z|psi}[log p - log q(z|psi)]
  double upper = 0.0;  // E_h[log p] - E_psi E_h[log q(z|psi)], z independent of psi
};

// Exact values of the marginal ELBO and of the limiting lower/upper
// surrogate bounds; lower <= elbo <= upper, strictly when tau_sq > 0.
GaussianOracle gaussian_oracle(const GaussianSandwichCase& c);

// ---------------------------------------------------------------------------
// Moment and dependence summaries of a draw matrix.
// ---------------------------------------------------------------------------

struct SummaryStats {
  std::vector<double> mean;
  std::vector<double> sd;  // sample sd (n-1 denominator)
  Tensor corr;             // Pearson correlation matrix
  std::vector<bool> zero_variance;  // flagged columns get corr entries 0
};

// Column means, sample sds, and the Pearson correlation matrix of an
// (n x d) draw matrix; requires n >= 2.  Duplicated columns yield exactly
// 1; zero-variance columns are flagged and their correlations set to 0.
SummaryStats summary_stats(const Tensor& draws);

// Spearman rank correlation (average ranks on ties); requires equal sizes
// >= 2.  Used to quantify monotone trends, e.g. of a distance against a
// growing mixture size.
double spearman_rho(std::span<const double> x, std::span<const double> y);

}  // namespace sivi
