#include "sivi/models.hpp"

#include <cmath>

#include "sivi/special.hpp"

namespace sivi {

Tensor toy_target_sample(ToyVariant v, RngStream& rng) {
  switch (v) {
    case ToyVariant::StdNormal:
      return Tensor::vector({rng.normal()});
    case ToyVariant::Laplace: {
      const double b = 2.0;
      const double u = rng.uniform() - 0.5;
      const double z = u >= 0.0 ? -b * std::log(1.0 - 2.0 * u)
                                : b * std::log(1.0 + 2.0 * u);
      return Tensor::vector({z});
    }
    case ToyVariant::Bimodal1D: {
      const double mean = rng.uniform() < 0.3 ? -2.0 : 2.0;
      return Tensor::vector({mean + rng.normal()});
    }
    case ToyVariant::GammaTarget:
      return Tensor::vector({gamma_sample(2.0, 1.0, rng)});
    case ToyVariant::Mixture2D: {
      const double mean = rng.uniform() < 0.5 ? -2.0 : 2.0;
      return Tensor::vector({mean + rng.normal(), mean + rng.normal()});
    }
    case ToyVariant::Banana: {
      const double z2 = 2.0 * rng.normal();
      const double z1 = z2 * z2 * 0.25 + rng.normal();
      return Tensor::vector({z1, z2});
    }
    case ToyVariant::XShape: {
      // Cholesky of [[2, +-1.8], [+-1.8, 2]].
      const double l11 = std::sqrt(2.0);
      const double l21 = 1.8 / l11;
      const double l22 = std::sqrt(2.0 - l21 * l21);
      const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
      const double e1 = rng.normal();
      const double e2 = rng.normal();
      return Tensor::vector({l11 * e1, sign * (l21 * e1 + l22 * e2)});
    }
  }
  throw std::logic_error("toy_target_sample: unknown variant");
}

double nb_log_joint(double r, double p, std::span<const int> counts, double a,
                    double b, double alpha, double beta) {
  const double z[2] = {r, p};
  std::vector<int> all(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) all[i] = static_cast<int>(i);
  return nb_loglik<double>(z, counts, all) + nb_log_prior<double>(z, a, b, alpha, beta);
}

double poislog_log_joint(double r, double p,
                         std::span<const std::array<int, 2>> pairs, double a,
                         double b, double alpha, double beta) {
  const double z[2] = {r, p};
  std::vector<int> all(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) all[i] = static_cast<int>(i);
  return poislog_loglik<double>(z, pairs, all) +
         nb_log_prior<double>(z, a, b, alpha, beta);
}

std::vector<std::array<int, 2>> poislog_synth(double r, double p, int N,
                                              RngStream& rng) {
  if (N < 1) throw std::invalid_argument("poislog_synth: N must be >= 1");
  std::vector<std::array<int, 2>> pairs(static_cast<std::size_t>(N));
  for (auto& pr : pairs) {
    const int n = negbinomial_sample(r, p, rng);
    pr = {n, crt_sample(n, r, rng)};
  }
  return pairs;
}

double logistic_log_joint(std::span<const double> beta,
                          const LogisticData& data, double alpha_prior) {
  if (beta.size() != data.dim())
    throw std::invalid_argument("logistic_log_joint: beta dim mismatch");
  std::vector<int> all(data.N());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return logistic_loglik<double>(beta.data(), data, all) +
         logistic_log_prior<double>(beta.data(), static_cast<int>(data.dim()),
                                    alpha_prior);
}

double logistic_loglik_batch(std::span<const double> beta,
                             const LogisticData& data,
                             std::span<const int> batch) {
  if (beta.size() != data.dim())
    throw std::invalid_argument("logistic_loglik_batch: beta dim mismatch");
  return logistic_loglik<double>(beta.data(), data, batch);
}

LogisticData logistic_synth(int N, int V, std::span<const double> beta_true,
                            RngStream& rng) {
  if (beta_true.size() != static_cast<std::size_t>(V + 1))
    throw std::invalid_argument("logistic_synth: beta_true must have V+1 entries");
  LogisticData data;
  data.X = Tensor::zeros({static_cast<std::size_t>(N),
                          static_cast<std::size_t>(V + 1)});
  data.y.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    double* row = data.X.row(static_cast<std::size_t>(i));
    row[0] = 1.0;
    for (int v = 1; v <= V; ++v) row[v] = rng.normal();
    const double eta = dot(row, beta_true.data(), static_cast<std::size_t>(V + 1));
    data.y[static_cast<std::size_t>(i)] = rng.uniform() < sigmoid(eta) ? 1 : 0;
  }
  return data;
}

PredictiveSummary predictive_probs(const Tensor& beta_draws,
                                   const Tensor& X_test) {
  const std::size_t n = beta_draws.rows();
  const std::size_t d = beta_draws.cols();
  if (n < 2)
    throw std::invalid_argument("predictive_probs: need at least 2 draws");
  if (X_test.cols() != d)
    throw std::invalid_argument("predictive_probs: test covariate dim mismatch");
  PredictiveSummary out;
  out.mean.resize(X_test.rows());
  out.sd.resize(X_test.rows());
  for (std::size_t rix = 0; rix < X_test.rows(); ++rix) {
    const double* x = X_test.row(rix);
    double s = 0.0;
    double s2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double prob = sigmoid(dot(beta_draws.row(j), x, d));
      s += prob;
      s2 += prob * prob;
    }
    const double mean = s / static_cast<double>(n);
    const double var =
        (s2 - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
    out.mean[rix] = mean;
    out.sd[rix] = std::sqrt(var > 0.0 ? var : 0.0);
  }
  return out;
}

}  // namespace sivi
