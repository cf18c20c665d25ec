#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sivi/models.hpp"
#include "sivi/posterior.hpp"
#include "sivi/rng.hpp"
#include "sivi/tensor.hpp"
#include "sivi/train.hpp"

namespace sivi {

// ---------------------------------------------------------------------------
// Gibbs samplers for the count models (latent pair z = (r, p)).
// ---------------------------------------------------------------------------

struct CountGibbsState {
  double r = 1.0;
  double p = 0.5;
};

// One sweep for the negative binomial model: latent table counts
// l_i | x_i, r, then r | l, p and p | x, r from their conjugate conditionals.
void nb_gibbs_step(CountGibbsState& st, std::span<const int> counts, double a,
                   double b, double alpha, double beta, RngStream& rng);

// One sweep for the Poisson-logarithmic model, whose (n_i, l_i) pairs enter
// the conditionals through their sums.
void poislog_gibbs_step(CountGibbsState& st,
                        std::span<const std::array<int, 2>> pairs, double a,
                        double b, double alpha, double beta, RngStream& rng);

// Run a chain for a NegBinomial or PoissonLog model; returns an
// (n_draws x 2) matrix with columns (r, p), recorded after burn_in sweeps.
Tensor run_count_gibbs(const ModelRef& model, int burn_in, int n_draws,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gibbs sampler for Bayesian logistic regression via latent scale variables.
// ---------------------------------------------------------------------------

struct PgGibbsState {
  std::vector<double> beta;
  std::vector<double> omega;  // one latent scale per observation
};

// One full sweep: all omega_i from their tilted conditional at x_i'beta, then
// beta from N(mu, Sigma) with Sigma = (A + X' Omega X)^-1, mu = Sigma X'(y-1/2).
// If the precision matrix fails its Cholesky factorization, a 1e-10 diagonal
// jitter is applied once; a second failure throws.
void pg_gibbs_step(PgGibbsState& st, const LogisticData& data,
                   std::span<const double> prior_prec, RngStream& rng);

// Chain runner with isotropic prior precision alpha_prior; returns
// (n_draws x dim) coefficient draws.
Tensor run_pg_gibbs(const LogisticData& data, double alpha_prior, int burn_in,
                    int n_draws, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Mean-field (coordinate-ascent) VI for the logistic model.
// ---------------------------------------------------------------------------

struct MfviLogistic {
  std::vector<double> mu;
  Tensor Sigma;                // covariance (diagonal when full_cov is false)
  std::vector<double> lambda;  // per-datum tilt parameters
  bool full_cov = false;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> bound_trace;  // variational bound after each sweep
};

MfviLogistic mfvi_logistic_diag(const LogisticData& data, double alpha_prior,
                                int max_sweeps);
MfviLogistic mfvi_logistic_full(const LogisticData& data, double alpha_prior,
                                int max_sweeps);

// Tilted-bound value (quadratic lower bound on each log-likelihood term plus
// the negative KL to the prior) for q(beta) = N(mu, Sigma) at tilts lambda.
double jj_bound(const LogisticData& data, double alpha_prior,
                const std::vector<double>& mu, const Tensor& Sigma,
                const std::vector<double>& lambda);

// Draws from the fitted Gaussian q(beta); (count x dim).
Tensor mfvi_logistic_draws(const MfviLogistic& st, int count, RngStream& rng);

// ---------------------------------------------------------------------------
// Mean-field VI for the count models (factorized Gamma x Beta family),
// implemented as conjugate training of a point-mass (constant-output) mixer
// with K = 0, which reduces the score-function estimator to the analytic
// coordinate objective.
// ---------------------------------------------------------------------------

struct MfviCount {
  SemiImplicitPosterior post;
  TrainResult result;
  // Fitted variational parameters: Gamma(shape, rate) x Beta(alpha, beta).
  double shape = 1.0, rate = 1.0, alpha = 1.0, beta = 1.0;
};

MfviCount mfvi_count(const ModelRef& model, const TrainConfig& cfg);

// Draws from the fitted factorized family; (count x 2), columns (r, p).
Tensor mfvi_count_draws(const MfviCount& st, int count, RngStream& rng);

}  // namespace sivi
