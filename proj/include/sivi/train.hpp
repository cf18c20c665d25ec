#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sivi/bounds.hpp"
#include "sivi/models.hpp"
#include "sivi/posterior.hpp"

namespace sivi {

enum class StepRule : std::uint8_t {
  Adam,       // adaptive-moment ascent at a fixed learning rate
  PlainDecay  // plain gradient ascent, step shrinking by `decay` per 100 iters
};

struct TrainConfig {
  int iterations = 1000;
  int J = 50;     // inner Monte-Carlo samples per step
  int k_max = 100;
  // 0-based iteration -> K_t (must be non-decreasing).  When unset, a linear
  // ramp from 1 to k_max over the first half of the run is used.
  std::function<int(int)> k_schedule;
  int minibatch = 0;  // 0 (or >= data size): full data every step

  StepRule phi_rule = StepRule::Adam;
  StepRule xi_rule = StepRule::PlainDecay;
  double phi_step = 0.01;   // learning rate / base step for the mixer weights
  double xi_step = 0.001;   // base step for the conditional parameters
  double decay = 0.9;       // PlainDecay multiplier applied per 100 iterations

  std::uint64_t seed = 1;
  bool verbose = false;     // progress lines to stderr every 100 iterations
};

// Linear ramp: 1 at iteration 0 rising to k_max at iterations/2, constant
// afterwards.  k_max <= 0 gives the constant-0 schedule (vanilla VI).
std::function<int(int)> make_linear_ramp(int k_max, int iterations);

struct TrainResult {
  std::vector<double> trace;  // surrogate lower bound at each completed step
  int clip_events = 0;
  bool aborted = false;       // non-finite bound or gradient encountered
  int abort_iteration = -1;
  std::string abort_reason;
};

// Stochastic ascent of the surrogate lower bound: each iteration draws the
// shared mixture components at size K_t, subsamples a minibatch, estimates
// the bound and its gradients from J inner samples, then steps xi first and
// phi second using the same gradient evaluation.  Updates post.params in
// place and stamps post.trained_seed.  Bit-reproducible given cfg.seed.  On a
// non-finite bound or gradient the loop aborts before applying that step, so
// the parameters and trace reflect the last finite state.
TrainResult train(SemiImplicitPosterior& post, const ModelRef& model,
                  const TrainConfig& cfg);

}  // namespace sivi
