#include "sivi/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace sivi {
namespace {

struct AdamState {
  std::vector<double> m, v;
  int t = 0;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_ascend(AdamState& st, std::span<double> p,
                 const std::vector<double>& g, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++st.t;
  const double c1 = 1.0 - std::pow(b1, st.t);
  const double c2 = 1.0 - std::pow(b2, st.t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * g[i] * g[i];
    p[i] += lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
  }
}

void plain_ascend(std::span<double> p, const std::vector<double>& g,
                  double step) {
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += step * g[i];
}

void apply_step(StepRule rule, AdamState& adam, std::span<double> p,
                const std::vector<double>& g, double base_step, double decay,
                int iteration) {
  if (p.empty()) return;
  if (rule == StepRule::Adam) {
    adam_ascend(adam, p, g, base_step);
  } else {
    const double step =
        base_step * std::pow(decay, static_cast<double>(iteration) / 100.0);
    plain_ascend(p, g, step);
  }
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

std::function<int(int)> make_linear_ramp(int k_max, int iterations) {
  const int half = iterations / 2;
  return [k_max, half](int t) {
    if (k_max <= 0) return 0;
    if (k_max == 1 || half <= 0 || t >= half) return k_max;
    const double frac = static_cast<double>(t) / static_cast<double>(half);
    return 1 + static_cast<int>(frac * static_cast<double>(k_max - 1));
  };
}

TrainResult train(SemiImplicitPosterior& post, const ModelRef& model,
                  const TrainConfig& cfg) {
  if (cfg.iterations < 0) throw std::invalid_argument("train: iterations < 0");
  if (cfg.J < 1) throw std::invalid_argument("train: J >= 1 required");
  if (cfg.phi_step <= 0.0 || cfg.xi_step <= 0.0)
    throw std::invalid_argument("train: step sizes must be positive");
  if (!post.cond.reparameterizable())
    throw std::invalid_argument(
        "train: conditional is not reparameterizable; use train_conjugate");

  const int N = static_cast<int>(model.data_size());
  int M = cfg.minibatch;
  if (M < 0) throw std::invalid_argument("train: minibatch < 0");
  if (M == 0 || M > N) M = N;
  const auto sched =
      cfg.k_schedule ? cfg.k_schedule : make_linear_ramp(cfg.k_max, cfg.iterations);

  RngStream root(cfg.seed);
  AdamState phi_adam(post.phi().size());
  AdamState xi_adam(post.xi().size());

  std::vector<int> full(static_cast<std::size_t>(N));
  std::iota(full.begin(), full.end(), 0);
  std::vector<int> pool = full;
  std::vector<int> batch;

  TrainResult res;
  res.trace.reserve(static_cast<std::size_t>(cfg.iterations));
  int prev_k = 0;
  for (int t = 0; t < cfg.iterations; ++t) {
    const int K = sched(t);
    if (K < 0) throw std::invalid_argument("train: schedule produced K < 0");
    if (t > 0 && K < prev_k)
      throw std::invalid_argument("train: K schedule must be non-decreasing");
    prev_k = K;

    RngStream iter_rng = root.substream(1 + static_cast<std::uint64_t>(t));
    RngStream bound_rng = iter_rng.substream(1);
    std::span<const int> batch_span;
    if (N > 0) {
      if (M >= N) {
        batch_span = std::span<const int>(full);
      } else {
        RngStream mb_rng = iter_rng.substream(2);
        pool = full;
        batch.assign(static_cast<std::size_t>(M), 0);
        for (int m = 0; m < M; ++m) {
          const auto r = static_cast<std::size_t>(
              mb_rng.uniform() * static_cast<double>(N - m));
          std::swap(pool[static_cast<std::size_t>(m)],
                    pool[static_cast<std::size_t>(m) + r]);
          batch[static_cast<std::size_t>(m)] = pool[static_cast<std::size_t>(m)];
        }
        batch_span = std::span<const int>(batch);
      }
    }

    BoundGradient g;
    try {
      g = lower_bound_K_grad(post, model, batch_span, N, K, cfg.J, bound_rng);
    } catch (const std::exception& e) {
      // A previously applied step can push parameters somewhere the next
      // evaluation rejects (e.g. an overflowed distribution parameter); stop
      // with the trace intact instead of propagating the crash.
      res.aborted = true;
      res.abort_iteration = t;
      res.abort_reason = std::string("evaluation failed at iteration ") +
                         std::to_string(t) + ": " + e.what();
      std::fprintf(stderr, "train: %s; stopping\n", res.abort_reason.c_str());
      break;
    }
    if (g.clip_events > 0) {
      res.clip_events += g.clip_events;
      std::fprintf(stderr,
                   "train: iteration %d clipped %d per-sample term(s)\n", t,
                   g.clip_events);
    }
    if (!std::isfinite(g.value) || !all_finite(g.grad_phi) ||
        !all_finite(g.grad_xi)) {
      res.aborted = true;
      res.abort_iteration = t;
      res.abort_reason = std::isfinite(g.value)
                             ? "non-finite gradient at iteration " +
                                   std::to_string(t)
                             : "non-finite bound value at iteration " +
                                   std::to_string(t);
      std::fprintf(stderr, "train: %s; stopping before the update\n",
                   res.abort_reason.c_str());
      break;
    }
    res.trace.push_back(g.value);

    apply_step(cfg.xi_rule, xi_adam, post.xi(), g.grad_xi, cfg.xi_step,
               cfg.decay, t);
    apply_step(cfg.phi_rule, phi_adam, post.phi(), g.grad_phi, cfg.phi_step,
               cfg.decay, t);

    if (cfg.verbose && (t % 100 == 0 || t + 1 == cfg.iterations))
      std::fprintf(stderr, "train: iter %d K=%d bound=%.6f\n", t, K, g.value);
  }
  post.trained_seed = cfg.seed;
  return res;
}

}  // namespace sivi
