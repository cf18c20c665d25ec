#include "sivi/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "sivi/conditional.hpp"
#include "sivi/conjugate.hpp"
#include "sivi/dist.hpp"
#include "sivi/special.hpp"

namespace sivi {
namespace {

// E[omega] under the tilted conditional at tilt c: tanh(c/2) / (2c).
double expected_omega(double c) {
  const double a = std::fabs(c);
  if (a < 1e-6) return 0.25 - a * a / 48.0;
  return std::tanh(0.5 * c) / (2.0 * c);
}

// Solve L^T u = e by back substitution (L lower triangular, row-major d x d).
void upper_solve_inplace(const std::vector<double>& L, std::size_t d,
                         std::vector<double>& e) {
  for (std::size_t v = d; v-- > 0;) {
    double s = e[v];
    for (std::size_t w = v + 1; w < d; ++w) s -= L[w * d + v] * e[w];
    e[v] = s / L[v * d + v];
  }
}

// Cholesky of M with a single 1e-10 jitter retry.
std::vector<double> chol_with_jitter(std::vector<double> M, std::size_t d) {
  std::vector<double> L = M;
  if (cholesky_lower(L, d)) return L;
  for (std::size_t v = 0; v < d; ++v) M[v * d + v] += 1e-10;
  L = std::move(M);
  if (cholesky_lower(L, d)) return L;
  throw std::runtime_error(
      "pg_gibbs_step: precision matrix is not positive definite even after "
      "jitter");
}

}  // namespace

void nb_gibbs_step(CountGibbsState& st, std::span<const int> counts, double a,
                   double b, double alpha, double beta, RngStream& rng) {
  const auto N = static_cast<double>(counts.size());
  long long sum_l = 0;
  double sum_x = 0.0;
  for (int x : counts) {
    sum_l += crt_sample(x, st.r, rng);
    sum_x += x;
  }
  st.r = gamma_sample(a + static_cast<double>(sum_l),
                      b - N * std::log1p(-st.p), rng);
  st.p = beta_sample(alpha + sum_x, beta + N * st.r, rng);
}

void poislog_gibbs_step(CountGibbsState& st,
                        std::span<const std::array<int, 2>> pairs, double a,
                        double b, double alpha, double beta, RngStream& rng) {
  const auto N = static_cast<double>(pairs.size());
  double sum_n = 0.0, sum_l = 0.0;
  for (const auto& pr : pairs) {
    sum_n += pr[0];
    sum_l += pr[1];
  }
  st.r = gamma_sample(a + sum_l, b - N * std::log1p(-st.p), rng);
  st.p = beta_sample(alpha + sum_n, beta + N * st.r, rng);
}

Tensor run_count_gibbs(const ModelRef& model, int burn_in, int n_draws,
                       std::uint64_t seed) {
  if (burn_in < 0 || n_draws < 1)
    throw std::invalid_argument("run_count_gibbs: bad sweep counts");
  RngStream rng(seed);
  CountGibbsState st;
  Tensor out = Tensor::zeros({static_cast<std::size_t>(n_draws), 2});
  for (int t = 0; t < burn_in + n_draws; ++t) {
    switch (model.tag) {
      case ModelTag::NegBinomial:
        nb_gibbs_step(st, *model.counts, model.a, model.b, model.alpha,
                      model.beta, rng);
        break;
      case ModelTag::PoissonLog:
        poislog_gibbs_step(st, *model.pairs, model.a, model.b, model.alpha,
                           model.beta, rng);
        break;
      default:
        throw std::invalid_argument(
            "run_count_gibbs: model must be NegBinomial or PoissonLog");
    }
    if (t >= burn_in) {
      double* row = out.row(static_cast<std::size_t>(t - burn_in));
      row[0] = st.r;
      row[1] = st.p;
    }
  }
  return out;
}

void pg_gibbs_step(PgGibbsState& st, const LogisticData& data,
                   std::span<const double> prior_prec, RngStream& rng) {
  const std::size_t N = data.N();
  const std::size_t d = data.dim();
  if (prior_prec.size() != d)
    throw std::invalid_argument("pg_gibbs_step: prior precision dim mismatch");
  if (st.beta.size() != d) st.beta.assign(d, 0.0);
  st.omega.resize(N);

  for (std::size_t i = 0; i < N; ++i) {
    const double eta = dot(data.X.row(i), st.beta.data(), d);
    st.omega[i] = polya_gamma_sample(eta, rng);
  }

  Tensor M = Tensor::zeros({d, d});
  std::vector<double> rhs(d, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const double* x = data.X.row(i);
    const double w = st.omega[i];
    const double resid = static_cast<double>(data.y[i]) - 0.5;
    for (std::size_t u = 0; u < d; ++u) {
      rhs[u] += x[u] * resid;
      double* mrow = M.row(u);
      for (std::size_t v = 0; v <= u; ++v) mrow[v] += w * x[u] * x[v];
    }
  }
  for (std::size_t u = 0; u < d; ++u) {
    M.row(u)[u] += prior_prec[u];
    for (std::size_t v = u + 1; v < d; ++v) M.row(u)[v] = M.row(v)[u];
  }

  const std::vector<double> L = chol_with_jitter(std::move(M.data), d);
  std::vector<double> mu = rhs;
  cholesky_solve(L, d, mu);
  std::vector<double> eps(d);
  rng.fill_normal(eps.data(), d);
  upper_solve_inplace(L, d, eps);
  for (std::size_t v = 0; v < d; ++v) st.beta[v] = mu[v] + eps[v];
}

Tensor run_pg_gibbs(const LogisticData& data, double alpha_prior, int burn_in,
                    int n_draws, std::uint64_t seed) {
  if (burn_in < 0 || n_draws < 1)
    throw std::invalid_argument("run_pg_gibbs: bad sweep counts");
  RngStream rng(seed);
  PgGibbsState st;
  const std::vector<double> prec(data.dim(), alpha_prior);
  Tensor out = Tensor::zeros({static_cast<std::size_t>(n_draws), data.dim()});
  for (int t = 0; t < burn_in + n_draws; ++t) {
    pg_gibbs_step(st, data, prec, rng);
    if (t >= burn_in) {
      double* row = out.row(static_cast<std::size_t>(t - burn_in));
      for (std::size_t v = 0; v < data.dim(); ++v) row[v] = st.beta[v];
    }
  }
  return out;
}

double jj_bound(const LogisticData& data, double alpha_prior,
                const std::vector<double>& mu, const Tensor& Sigma,
                const std::vector<double>& lambda) {
  const std::size_t N = data.N();
  const std::size_t d = data.dim();
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double* x = data.X.row(i);
    const double m = dot(x, mu.data(), d);
    double s2 = m * m;
    for (std::size_t u = 0; u < d; ++u)
      for (std::size_t v = 0; v < d; ++v) s2 += x[u] * Sigma.row(u)[v] * x[v];
    const double lam = lambda[i];
    const double g = expected_omega(lam);
    acc += -log1pexp(-lam) + (static_cast<double>(data.y[i]) - 0.5) * m -
           0.5 * lam + 0.5 * g * (lam * lam - s2);
  }
  // KL(N(mu, Sigma) || N(0, (1/alpha_prior) I)).
  std::vector<double> L = Sigma.data;
  if (!cholesky_lower(L, d))
    throw std::runtime_error("jj_bound: covariance not positive definite");
  double logdet = 0.0;
  double trace_term = 0.0;
  double quad = 0.0;
  for (std::size_t v = 0; v < d; ++v) {
    logdet += 2.0 * std::log(L[v * d + v]);
    trace_term += alpha_prior * Sigma.row(v)[v];
    quad += alpha_prior * mu[v] * mu[v];
  }
  const double kl = 0.5 * (trace_term + quad - static_cast<double>(d) -
                           static_cast<double>(d) * std::log(alpha_prior) -
                           logdet);
  return acc - kl;
}

MfviLogistic mfvi_logistic_full(const LogisticData& data, double alpha_prior,
                                int max_sweeps) {
  if (max_sweeps < 1)
    throw std::invalid_argument("mfvi_logistic_full: max_sweeps >= 1");
  const std::size_t N = data.N();
  const std::size_t d = data.dim();

  MfviLogistic st;
  st.full_cov = true;
  st.mu.assign(d, 0.0);
  st.Sigma = Tensor::zeros({d, d});
  for (std::size_t v = 0; v < d; ++v) st.Sigma.row(v)[v] = 1.0 / alpha_prior;
  st.lambda.assign(N, 0.0);

  std::vector<double> rhs(d);
  for (std::size_t u = 0; u < d; ++u) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      s += data.X.row(i)[u] * (static_cast<double>(data.y[i]) - 0.5);
    rhs[u] = s;
  }

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    // Tilts from the current second moment E[bb'] = Sigma + mu mu'.
    for (std::size_t i = 0; i < N; ++i) {
      const double* x = data.X.row(i);
      double s2 = dot(x, st.mu.data(), d);
      s2 *= s2;
      for (std::size_t u = 0; u < d; ++u)
        for (std::size_t v = 0; v < d; ++v)
          s2 += x[u] * st.Sigma.row(u)[v] * x[v];
      st.lambda[i] = std::sqrt(s2);
    }
    // Gaussian block update.
    Tensor M = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < N; ++i) {
      const double* x = data.X.row(i);
      const double w = expected_omega(st.lambda[i]);
      for (std::size_t u = 0; u < d; ++u)
        for (std::size_t v = 0; v <= u; ++v) M.row(u)[v] += w * x[u] * x[v];
    }
    for (std::size_t u = 0; u < d; ++u) {
      M.row(u)[u] += alpha_prior;
      for (std::size_t v = u + 1; v < d; ++v) M.row(u)[v] = M.row(v)[u];
    }
    std::vector<double> L = M.data;
    if (!cholesky_lower(L, d))
      throw std::runtime_error("mfvi_logistic_full: precision not PD");
    Tensor Sigma_new({d, d}, cholesky_inverse(L, d));
    std::vector<double> mu_new = rhs;
    cholesky_solve(L, d, mu_new);

    double delta = 0.0;
    for (std::size_t v = 0; v < d; ++v) {
      delta = std::max(delta, std::fabs(mu_new[v] - st.mu[v]));
      for (std::size_t u = 0; u < d; ++u)
        delta = std::max(delta,
                         std::fabs(Sigma_new.row(v)[u] - st.Sigma.row(v)[u]));
    }
    st.mu = std::move(mu_new);
    st.Sigma = std::move(Sigma_new);
    ++st.sweeps;
    st.bound_trace.push_back(
        jj_bound(data, alpha_prior, st.mu, st.Sigma, st.lambda));
    if (delta < 1e-8) {
      st.converged = true;
      break;
    }
  }
  return st;
}

MfviLogistic mfvi_logistic_diag(const LogisticData& data, double alpha_prior,
                                int max_sweeps) {
  if (max_sweeps < 1)
    throw std::invalid_argument("mfvi_logistic_diag: max_sweeps >= 1");
  const std::size_t N = data.N();
  const std::size_t d = data.dim();

  MfviLogistic st;
  st.full_cov = false;
  st.mu.assign(d, 0.0);
  st.Sigma = Tensor::zeros({d, d});
  for (std::size_t v = 0; v < d; ++v) st.Sigma.row(v)[v] = 1.0 / alpha_prior;
  st.lambda.assign(N, 0.0);

  std::vector<double> m(N, 0.0);  // x_i' mu, maintained incrementally
  std::vector<double> eomega(N);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double* x = data.X.row(i);
      double s2 = m[i] * m[i];
      for (std::size_t v = 0; v < d; ++v)
        s2 += x[v] * x[v] * st.Sigma.row(v)[v];
      st.lambda[i] = std::sqrt(s2);
      eomega[i] = expected_omega(st.lambda[i]);
    }
    for (std::size_t v = 0; v < d; ++v) {
      double prec = alpha_prior;
      double lin = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        const double xiv = data.X.row(i)[v];
        prec += eomega[i] * xiv * xiv;
        lin += xiv * (static_cast<double>(data.y[i]) - 0.5 -
                      eomega[i] * (m[i] - xiv * st.mu[v]));
      }
      const double var_new = 1.0 / prec;
      const double mu_new = var_new * lin;
      delta = std::max(delta, std::fabs(mu_new - st.mu[v]));
      delta = std::max(delta, std::fabs(var_new - st.Sigma.row(v)[v]));
      const double shift = mu_new - st.mu[v];
      if (shift != 0.0)
        for (std::size_t i = 0; i < N; ++i) m[i] += data.X.row(i)[v] * shift;
      st.mu[v] = mu_new;
      st.Sigma.row(v)[v] = var_new;
    }
    ++st.sweeps;
    st.bound_trace.push_back(
        jj_bound(data, alpha_prior, st.mu, st.Sigma, st.lambda));
    if (delta < 1e-8) {
      st.converged = true;
      break;
    }
  }
  return st;
}

Tensor mfvi_logistic_draws(const MfviLogistic& st, int count, RngStream& rng) {
  if (count < 0) throw std::invalid_argument("mfvi_logistic_draws: count < 0");
  const std::size_t d = st.mu.size();
  std::vector<double> L = st.Sigma.data;
  if (!cholesky_lower(L, d))
    throw std::runtime_error("mfvi_logistic_draws: covariance not PD");
  Tensor out = Tensor::zeros({static_cast<std::size_t>(count), d});
  std::vector<double> eps(d);
  for (int n = 0; n < count; ++n) {
    rng.fill_normal(eps.data(), d);
    double* row = out.row(static_cast<std::size_t>(n));
    for (std::size_t u = 0; u < d; ++u) {
      double s = st.mu[u];
      for (std::size_t v = 0; v <= u; ++v) s += L[u * d + v] * eps[v];
      row[u] = s;
    }
  }
  return out;
}

MfviCount mfvi_count(const ModelRef& model, const TrainConfig& cfg_in) {
  if (model.tag != ModelTag::NegBinomial && model.tag != ModelTag::PoissonLog)
    throw std::invalid_argument(
        "mfvi_count: model must be NegBinomial or PoissonLog");
  ExplicitConditional cond;
  cond.kind = CondKind::GammaBeta;
  cond.zdim = 2;
  Mlp constant_map;
  constant_map.widths = {4};
  ImplicitMixer mixer{constant_map, NoiseKind::Normal};

  MfviCount out{SemiImplicitPosterior(mixer, cond), TrainResult{}, 1, 1, 1, 1};
  RngStream init_rng(cfg_in.seed);
  out.post.init_params(init_rng);

  TrainConfig cfg = cfg_in;
  cfg.k_max = 0;
  cfg.k_schedule = [](int) { return 0; };
  out.result = train_conjugate(out.post, model, cfg);

  const std::span<const double> psi = out.post.phi();
  out.shape = std::exp(psi[0]);
  out.rate = std::exp(psi[1]);
  out.alpha = std::exp(psi[2]);
  out.beta = std::exp(psi[3]);
  return out;
}

Tensor mfvi_count_draws(const MfviCount& st, int count, RngStream& rng) {
  if (count < 0) throw std::invalid_argument("mfvi_count_draws: count < 0");
  Tensor out = Tensor::zeros({static_cast<std::size_t>(count), 2});
  for (int n = 0; n < count; ++n) {
    double* row = out.row(static_cast<std::size_t>(n));
    row[0] = gamma_sample(st.shape, st.rate, rng);
    row[1] = beta_sample(st.alpha, st.beta, rng);
  }
  return out;
}

}  // namespace sivi
