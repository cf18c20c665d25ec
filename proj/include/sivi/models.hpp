#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "sivi/dist.hpp"
#include "sivi/rev.hpp"
#include "sivi/rng.hpp"
#include "sivi/tensor.hpp"

namespace sivi {

// ---------------------------------------------------------------------------
// Synthetic 1-D / 2-D target densities for the expressiveness experiments.
// ---------------------------------------------------------------------------

enum class ToyVariant : std::uint8_t {
  StdNormal,  // N(0, 1), 1-D (analytic sanity target)
  Laplace,    // Laplace(0, 2), 1-D
  Bimodal1D,  // 0.3 N(-2, 1) + 0.7 N(2, 1), 1-D
  GammaTarget,  // Gamma(2, 1), 1-D
  Mixture2D,  // 0.5 N((-2,-2), I) + 0.5 N((2,2), I), 2-D
  Banana,     // N(z1; z2^2/4, 1) N(z2; 0, 4), 2-D
  XShape      // 0.5 N(0, [[2,1.8],[1.8,2]]) + 0.5 N(0, [[2,-1.8],[-1.8,2]]), 2-D
};

inline int toy_dim(ToyVariant v) {
  switch (v) {
    case ToyVariant::StdNormal:
    case ToyVariant::Laplace:
    case ToyVariant::Bimodal1D:
    case ToyVariant::GammaTarget:
      return 1;
    default:
      return 2;
  }
}

namespace detail {
template <class S>
S normal_lp(const S& z, double mean, double var) {
  S diff = z - mean;
  return -0.5 * (std::log(var) + kLog2Pi) - 0.5 * diff * diff / var;
}
template <class S>
S logsumexp2(const S& a, const S& b) {
  S arr[2] = {a, b};
  return logmeanexp(arr, 2) + 0.6931471805599453094172321214582;  // + log 2
}
}  // namespace detail

template <class S>
S toy_target_logpdf(ToyVariant v, const S* z) {
  using std::log;
  switch (v) {
    case ToyVariant::StdNormal:
      return detail::normal_lp(z[0], 0.0, 1.0);
    case ToyVariant::Laplace: {
      const double b = 2.0;
      S az = value_of(z[0]) >= 0.0 ? z[0] : -z[0];
      return -log(2.0 * b) - az / b;
    }
    case ToyVariant::Bimodal1D: {
      S la = detail::normal_lp(z[0], -2.0, 1.0) + std::log(0.3);
      S lb = detail::normal_lp(z[0], 2.0, 1.0) + std::log(0.7);
      return detail::logsumexp2(la, lb);
    }
    case ToyVariant::GammaTarget: {
      if (!(value_of(z[0]) > 0.0)) return S(kNegInf);
      return log(z[0]) - z[0];  // shape 2, rate 1
    }
    case ToyVariant::Mixture2D: {
      S la = detail::normal_lp(z[0], -2.0, 1.0) +
             detail::normal_lp(z[1], -2.0, 1.0) + std::log(0.5);
      S lb = detail::normal_lp(z[0], 2.0, 1.0) +
             detail::normal_lp(z[1], 2.0, 1.0) + std::log(0.5);
      return detail::logsumexp2(la, lb);
    }
    case ToyVariant::Banana: {
      S mean1 = z[1] * z[1] * 0.25;
      return detail::normal_lp(z[0] - mean1, 0.0, 1.0) +
             detail::normal_lp(z[1], 0.0, 4.0);
    }
    case ToyVariant::XShape: {
      // Components share variance 2 with cross-covariance +-1.8;
      // det = 4 - 3.24 = 0.76, inverse = [[2, -+1.8], [-+1.8, 2]] / 0.76.
      const double det = 0.76;
      const double inv_d = 2.0 / det;
      const double inv_o = 1.8 / det;
      S q_plus = inv_d * (z[0] * z[0] + z[1] * z[1]) - 2.0 * inv_o * z[0] * z[1];
      S q_minus = inv_d * (z[0] * z[0] + z[1] * z[1]) + 2.0 * inv_o * z[0] * z[1];
      const double norm = -kLog2Pi - 0.5 * std::log(det);
      S la = norm - 0.5 * q_plus + std::log(0.5);
      S lb = norm - 0.5 * q_minus + std::log(0.5);
      return detail::logsumexp2(la, lb);
    }
  }
  throw std::logic_error("toy_target_logpdf: unknown variant");
}

Tensor toy_target_sample(ToyVariant v, RngStream& rng);

// ---------------------------------------------------------------------------
// Log joints of the inference tasks (templated so the bound estimators can
// differentiate through z).
// ---------------------------------------------------------------------------

// Negative binomial counts: x_i ~ NB(r, p), r ~ Gamma(a, rate b),
// p ~ Beta(alpha, beta); z = (r, p).
template <class S>
S nb_log_prior(const S* z, double a, double b, double alpha, double beta) {
  using std::lgamma;
  using std::log;
  const double r = value_of(z[0]);
  const double p = value_of(z[1]);
  if (!(r > 0.0) || !(p > 0.0) || !(p < 1.0)) return S(kNegInf);
  S lp = a * std::log(b) - std::lgamma(a) + (a - 1.0) * log(z[0]) - b * z[0];
  lp = lp + (alpha - 1.0) * log(z[1]) + (beta - 1.0) * log(1.0 - z[1]) -
       log_beta(alpha, beta);
  return lp;
}

template <class S>
S nb_loglik(const S* z, std::span<const int> counts,
            std::span<const int> batch) {
  using std::lgamma;
  using std::log;
  const double r = value_of(z[0]);
  const double p = value_of(z[1]);
  if (!(r > 0.0) || !(p > 0.0) || !(p < 1.0)) return S(kNegInf);
  S lgr = lgamma(z[0]);
  S logp = log(z[1]);
  S log1mp = log(1.0 - z[1]);
  S acc = 0.0;
  for (int idx : batch) {
    const double x = static_cast<double>(counts[idx]);
    acc = acc + lgamma(z[0] + x) - lgr - std::lgamma(x + 1.0) + x * logp +
          z[0] * log1mp;
  }
  return acc;
}

double nb_log_joint(double r, double p, std::span<const int> counts, double a,
                    double b, double alpha, double beta);

// Poisson-logarithmic pairs: p(n_i, l_i | r, p) ~ r^{l_i} p^{n_i} (1-p)^r
// up to constants in (r, p); same priors as the NB model; z = (r, p).
template <class S>
S poislog_loglik(const S* z, std::span<const std::array<int, 2>> pairs,
                 std::span<const int> batch) {
  using std::log;
  const double r = value_of(z[0]);
  const double p = value_of(z[1]);
  if (!(r > 0.0) || !(p > 0.0) || !(p < 1.0)) return S(kNegInf);
  double sum_l = 0.0;
  double sum_n = 0.0;
  for (int idx : batch) {
    sum_n += pairs[idx][0];
    sum_l += pairs[idx][1];
  }
  const double count = static_cast<double>(batch.size());
  return sum_l * log(z[0]) + sum_n * log(z[1]) +
         count * (z[0] * log(1.0 - z[1]));
}

double poislog_log_joint(double r, double p,
                         std::span<const std::array<int, 2>> pairs, double a,
                         double b, double alpha, double beta);

// Synthetic Poisson-logarithmic data: n_i ~ NB(r, p), l_i | n_i ~ CRT(n_i, r).
std::vector<std::array<int, 2>> poislog_synth(double r, double p, int N,
                                              RngStream& rng);

// Bayesian logistic regression: y_i ~ Bernoulli(sigmoid(x_i' beta)),
// beta ~ N(0, alpha_prior^{-1} I); X rows already include the intercept.
struct LogisticData {
  Tensor X;           // N x (V+1), first column 1
  std::vector<int> y;  // in {0, 1}
  std::size_t N() const { return X.rows(); }
  std::size_t dim() const { return X.cols(); }
};

template <class S>
S logistic_loglik(const S* beta, const LogisticData& data,
                  std::span<const int> batch) {
  S acc = 0.0;
  const int d = static_cast<int>(data.dim());
  for (int idx : batch) {
    const double* x = data.X.row(static_cast<std::size_t>(idx));
    S eta = 0.0;
    for (int v = 0; v < d; ++v) eta = eta + beta[v] * x[v];
    acc = acc + static_cast<double>(data.y[idx]) * eta - log1pexp(eta);
  }
  return acc;
}

template <class S>
S logistic_log_prior(const S* beta, int d, double alpha_prior) {
  S ss = 0.0;
  for (int v = 0; v < d; ++v) ss = ss + beta[v] * beta[v];
  return 0.5 * d * (std::log(alpha_prior) - kLog2Pi) - 0.5 * alpha_prior * ss;
}

double logistic_log_joint(std::span<const double> beta,
                          const LogisticData& data, double alpha_prior);
double logistic_loglik_batch(std::span<const double> beta,
                             const LogisticData& data,
                             std::span<const int> batch);

// Deterministic synthetic logistic dataset (covariates standard normal,
// labels drawn from the model at beta_true).
LogisticData logistic_synth(int N, int V, std::span<const double> beta_true,
                            RngStream& rng);

// Per-test-row mean and sample standard deviation of sigmoid(x' beta_j).
struct PredictiveSummary {
  std::vector<double> mean;
  std::vector<double> sd;
};
PredictiveSummary predictive_probs(const Tensor& beta_draws, const Tensor& X_test);

// ---------------------------------------------------------------------------
// ModelRef: tagged reference to one inference task plus its data.
// ---------------------------------------------------------------------------

enum class ModelTag : std::uint8_t { Toy, NegBinomial, PoissonLog, Logistic };

struct ModelRef {
  ModelTag tag = ModelTag::Toy;
  ToyVariant toy = ToyVariant::StdNormal;

  // Hyperparameters (Gamma/Beta priors; Gaussian prior precision).
  double a = 0.01, b = 0.01, alpha = 0.01, beta = 0.01;
  double alpha_prior = 0.01;

  // Non-owning data handles (validity managed by the caller).
  const std::vector<int>* counts = nullptr;
  const std::vector<std::array<int, 2>>* pairs = nullptr;
  const LogisticData* logistic = nullptr;

  int zdim() const {
    switch (tag) {
      case ModelTag::Toy:
        return toy_dim(toy);
      case ModelTag::NegBinomial:
      case ModelTag::PoissonLog:
        return 2;
      case ModelTag::Logistic:
        return static_cast<int>(logistic->dim());
    }
    return 0;
  }

  std::size_t data_size() const {
    switch (tag) {
      case ModelTag::Toy:
        return 0;
      case ModelTag::NegBinomial:
        return counts->size();
      case ModelTag::PoissonLog:
        return pairs->size();
      case ModelTag::Logistic:
        return logistic->N();
    }
    return 0;
  }

  template <class S>
  S log_prior(const S* z) const {
    switch (tag) {
      case ModelTag::Toy:
        return toy_target_logpdf(toy, z);
      case ModelTag::NegBinomial:
      case ModelTag::PoissonLog:
        return nb_log_prior(z, a, b, alpha, beta);
      case ModelTag::Logistic:
        return logistic_log_prior(z, zdim(), alpha_prior);
    }
    throw std::logic_error("ModelRef::log_prior: unknown tag");
  }

  template <class S>
  S log_lik(const S* z, std::span<const int> batch) const {
    switch (tag) {
      case ModelTag::Toy:
        return S(0.0);
      case ModelTag::NegBinomial:
        return nb_loglik(z, *counts, batch);
      case ModelTag::PoissonLog:
        return poislog_loglik(z, *pairs, batch);
      case ModelTag::Logistic:
        return logistic_loglik(z, *logistic, batch);
    }
    throw std::logic_error("ModelRef::log_lik: unknown tag");
  }

  // scale * log p(batch | z) + log p(z); scale = N / M for minibatches.
  template <class S>
  S log_joint(const S* z, std::span<const int> batch, double scale) const {
    S prior = log_prior(z);
    if (batch.empty()) return prior;
    return scale * log_lik(z, batch) + prior;
  }
};

}  // namespace sivi
