#pragma once

#include <span>
#include <vector>

#include "sivi/models.hpp"
#include "sivi/posterior.hpp"
#include "sivi/rng.hpp"

namespace sivi {

// One Monte-Carlo estimate of a surrogate evidence bound.
struct BoundEstimate {
  double value = 0.0;                    // mean of per_sample_terms
  std::vector<double> per_sample_terms;  // length J
  int K_used = 0;
  int Ktilde_used = 1;
  int clip_events = 0;
};

// Bound value plus parameter gradients from one taped evaluation.
struct BoundGradient {
  double value = 0.0;
  std::vector<double> grad_phi;
  std::vector<double> grad_xi;
  int clip_events = 0;
};

// Per-sample terms whose magnitude exceeds this are clamped (and the clamp is
// counted in clip_events) so a single wild draw cannot destroy a whole run.
inline constexpr double kTermClip = 1e8;

// RNG layout shared by every estimator below (fixed contract so that paired
// runs at different K reuse identical per-sample noise):
//   substream 0     - shared mixture draws psi^(1..K), in k order
//   substream 1 + j - sample j: per importance replicate, mixer noise for its
//                     own psi, then the conditional's reparameterization noise
//
// Consequences: estimates at different K are common-random-number coupled,
// and iw_lower_bound with Ktilde = 1 is bit-identical to lower_bound_K.

// Surrogate lower bound: for each of J samples draw its own psi_j and
// z_j ~ q(z|psi_j); the term is scale*log p(batch|z_j) + log p(z_j) minus the
// log of the (K+1)-component mixture density {q(z_j|psi_j), q(z_j|psi^(k))}.
// Requires a reparameterizable conditional.
BoundEstimate lower_bound_K(const SemiImplicitPosterior& post,
                            const ModelRef& model, std::span<const int> batch,
                            int N, int K, int J, RngStream& rng);

// Surrogate upper bound: as lower_bound_K but the mixture density excludes
// the sample's own component, averaging only the K shared ones (K >= 1).
BoundEstimate upper_bound_K(const SemiImplicitPosterior& post,
                            const ModelRef& model, std::span<const int> batch,
                            int N, int K, int J, RngStream& rng);

// Importance-weighted lower bound: each of J_outer terms is the log of a
// Ktilde-sample importance average of p(x,z)/htilde(z), where htilde is the
// (K+1)-component mixture estimate of the marginal density.
BoundEstimate iw_lower_bound(const SemiImplicitPosterior& post,
                             const ModelRef& model, std::span<const int> batch,
                             int N, int K, int Ktilde, int J_outer,
                             RngStream& rng);

// Taped evaluation of the surrogate lower bound returning gradients w.r.t.
// phi and xi; same estimator (and RNG layout) as lower_bound_K.
BoundGradient lower_bound_K_grad(const SemiImplicitPosterior& post,
                                 const ModelRef& model,
                                 std::span<const int> batch, int N, int K,
                                 int J, RngStream& rng);

// Mixture-tightening gap: mean over J of
//   log q(z_j|psi_j) - logmeanexp{q(z_j|psi_j), q(z_j|psi^(1..K))}.
// Exactly zero when K = 0 or the mixing distribution is a point mass.
double regularizer_B_K(const SemiImplicitPosterior& post, int K, int J,
                       RngStream& rng);

// Upper-bound correction: mean over J of
//   logmeanexp{q(z_j|psi^(1..K))} - log q(z_j|psi^(1)),
// with z_j drawn from the marginal via a fresh psi.  Coupling the reference
// component to psi^(1) keeps the estimator unbiased (the difference is linear
// in the two expectations) and makes K = 1 exactly zero per sample.  K >= 1.
double correction_A_K(const SemiImplicitPosterior& post, int K, int J,
                      RngStream& rng);

}  // namespace sivi
