#pragma once

#include <span>
#include <vector>

#include "sivi/models.hpp"
#include "sivi/posterior.hpp"
#include "sivi/rng.hpp"
#include "sivi/tensor.hpp"
#include "sivi/train.hpp"

namespace sivi {

// Log density ratio between a sample's own conditional and the mixture of
// the K+1 conditionals induced by the given noise draws.
struct DensityRatioTerms {
  double log_r = 0.0;
  // The K+1 conditional log densities, shared components first, own last.
  std::vector<double> components;
};

// eps is the sample's own mixer noise; eps_batch (K x noise_dim) holds the
// shared draws.  log_r = own log density - logmeanexp(components); it is
// exactly 0 when K = 0 or all mixture components coincide, and is always
// bounded above by log(K+1).
DensityRatioTerms density_ratio(const SemiImplicitPosterior& post,
                                std::span<const double> z,
                                std::span<const double> eps,
                                const Tensor& eps_batch);

// Closed-form pieces of the per-psi variational objective for conditionally
// conjugate count models with a Gamma x Beta conditional:
//   E_{z~q(z|psi)}[ log p(x,z) - log q(z|psi) ]
// as an analytic function of the conditional's (shape, rate, alpha, beta).
struct ConjugateHooks {
  ModelTag tag = ModelTag::PoissonLog;
  // Prior hyperparameters (copied from the model).
  double prior_a = 0.01, prior_b = 0.01, prior_alpha = 0.01,
         prior_beta = 0.01;
  // Data summaries.
  int n_data = 0;
  double sum_l = 0.0;   // Poisson-logarithmic: sum of l_i
  double sum_n = 0.0;   // Poisson-logarithmic: sum of n_i
  double sum_x = 0.0;   // negative binomial: sum of counts
  double lgamma_const = 0.0;       // negative binomial: -sum_i lgamma(x_i+1)
  std::vector<double> tail_counts;  // c_t = #{i: x_i > t}, t = 0,1,...

  static ConjugateHooks make(const ModelRef& model);

  // Expected log joint plus conditional entropy, differentiable in the four
  // conditional parameters (Gamma shape/rate, Beta alpha/beta).
  template <class S>
  S expected_elbo(const S& ga, const S& gb, const S& ba, const S& bb) const;
};

// E[log(r + shift)] for r ~ Gamma(shape a, rate b); analytic at shift = 0,
// log-space trapezoid quadrature (nodes placed from the undifferentiated
// shape value) otherwise, with a delta-method branch for very large shapes.
template <class S>
S expected_log_shifted_gamma(const S& a, const S& b, double shift);

// Score-function gradient of the surrogate lower bound for a semi-implicit
// posterior with the (non-reparameterizable) Gamma x Beta conditional.
// Three-term estimator per inner sample: the analytic-objective gradient
// through psi = T_phi(eps_j), the pathwise gradient of log r with z held
// fixed, and the score of the own conditional weighted by the (detached)
// value of log r.  `value` is the partially analytic bound estimate
// mean_j [expected_elbo(psi_j) + log_r_j].
struct ScoreGradient {
  double value = 0.0;
  std::vector<double> grad_phi;
  std::vector<double> grad_xi;
};

ScoreGradient score_grad_phi(const SemiImplicitPosterior& post,
                             const ConjugateHooks& hooks, int K, int J,
                             RngStream& rng);

// Stochastic ascent with score_grad_phi in place of pathwise gradients;
// the returned trace holds the NEGATED bound (-value per iteration), the
// quantity conventionally monitored for these models.  Minibatching is not
// used (the data summaries enter the hooks in closed form).
TrainResult train_conjugate(SemiImplicitPosterior& post, const ModelRef& model,
                            const TrainConfig& cfg);

}  // namespace sivi
