#include "sivi/conjugate.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sivi/conditional.hpp"
#include "sivi/dist.hpp"
#include "sivi/rev.hpp"
#include "sivi/special.hpp"

namespace sivi {

DensityRatioTerms density_ratio(const SemiImplicitPosterior& post,
                                std::span<const double> z,
                                std::span<const double> eps,
                                const Tensor& eps_batch) {
  const ImplicitMixer& mixer = post.mixer;
  const ExplicitConditional& cond = post.cond;
  const std::span<const double> phi = post.phi();
  const std::span<const double> xi = post.xi();
  const double* xi_ptr = xi.empty() ? nullptr : xi.data();
  if (static_cast<int>(z.size()) != cond.zdim)
    throw std::invalid_argument("density_ratio: z dimension mismatch");
  if (static_cast<int>(eps.size()) != mixer.noise_dim())
    throw std::invalid_argument("density_ratio: eps dimension mismatch");
  const auto K = static_cast<int>(eps_batch.rows());
  if (K > 0 && static_cast<int>(eps_batch.cols()) != mixer.noise_dim())
    throw std::invalid_argument("density_ratio: eps_batch width mismatch");

  DensityRatioTerms out;
  out.components.reserve(static_cast<std::size_t>(K) + 1);
  std::vector<double> psi;
  for (int k = 0; k < K; ++k) {
    mlp_forward_params<double>(mixer.mlp, phi.data(),
                               eps_batch.row(static_cast<std::size_t>(k)), psi);
    const auto parts = cond.make<double>(psi.data(), xi_ptr);
    out.components.push_back(cond_logpdf<double>(parts, z.data()));
  }
  mlp_forward_params<double>(mixer.mlp, phi.data(), eps.data(), psi);
  const auto own_parts = cond.make<double>(psi.data(), xi_ptr);
  const double own = cond_logpdf<double>(own_parts, z.data());
  out.components.push_back(own);
  out.log_r = own - logmeanexp(out.components.data(), out.components.size());
  return out;
}

template <class S>
S expected_log_shifted_gamma(const S& a, const S& b, double shift) {
  using std::exp;
  using std::lgamma;
  using std::log;
  if (shift == 0.0) return digamma(a) - log(b);
  const double av = value_of(a);
  if (!(av > 0.0))
    throw std::domain_error("expected_log_shifted_gamma: shape must be > 0");
  if (av > 1e4) {
    // Delta method: E[log(r+t)] ~ log(m+t) - v / (2 (m+t)^2), error O(a^-2).
    const S m = a / b;
    const S v = a / (b * b);
    const S mt = m + shift;
    return log(mt) - v / (2.0 * mt * mt);
  }
  // Work in w = log s with s ~ Gamma(a, 1) and r = s / b: the integrand
  // exp(a w - e^w - lgamma(a)) log(e^w / b + t) is smooth and decays fast,
  // so a trapezoid with node positions fixed from the undifferentiated shape
  // converges quickly and stays differentiable in (a, b).
  const double wstar = std::log(av);
  const double left = -(std::sqrt(90.0 / av) + 45.0 / av + 1.0);
  const double right = std::sqrt(90.0 / av) + std::log1p(45.0 / av) + 1.0;
  const double h = std::min(0.2, 0.25 / std::sqrt(av));
  const auto n_nodes = static_cast<std::size_t>((right - left) / h) + 1;

  const S lga = lgamma(a);
  const S inv_b = 1.0 / b;
  std::vector<S> vals(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const double w = wstar + left + static_cast<double>(i) * h;
    const double ew = std::exp(w);
    const S log_density = a * w - ew - lga;
    vals[i] = exp(log_density) * log(inv_b * ew + shift);
  }
  S acc = sum(vals.data(), n_nodes);
  acc = acc - 0.5 * (vals[0] + vals[n_nodes - 1]);
  return acc * h;
}

template double expected_log_shifted_gamma<double>(const double&,
                                                   const double&, double);
template Rev expected_log_shifted_gamma<Rev>(const Rev&, const Rev&, double);

ConjugateHooks ConjugateHooks::make(const ModelRef& model) {
  ConjugateHooks h;
  h.tag = model.tag;
  h.prior_a = model.a;
  h.prior_b = model.b;
  h.prior_alpha = model.alpha;
  h.prior_beta = model.beta;
  switch (model.tag) {
    case ModelTag::PoissonLog: {
      if (!model.pairs)
        throw std::invalid_argument("ConjugateHooks: model has no pair data");
      h.n_data = static_cast<int>(model.pairs->size());
      for (const auto& pr : *model.pairs) {
        h.sum_n += pr[0];
        h.sum_l += pr[1];
      }
      return h;
    }
    case ModelTag::NegBinomial: {
      if (!model.counts)
        throw std::invalid_argument("ConjugateHooks: model has no count data");
      h.n_data = static_cast<int>(model.counts->size());
      int max_x = 0;
      for (int x : *model.counts) {
        h.sum_x += x;
        h.lgamma_const -= std::lgamma(static_cast<double>(x) + 1.0);
        if (x > max_x) max_x = x;
      }
      h.tail_counts.assign(static_cast<std::size_t>(max_x), 0.0);
      for (int x : *model.counts)
        for (int t = 0; t < x; ++t) h.tail_counts[static_cast<std::size_t>(t)] += 1.0;
      return h;
    }
    default:
      throw std::invalid_argument(
          "ConjugateHooks: closed-form objective exists only for the count "
          "models (negative binomial, Poisson-logarithmic)");
  }
}

template <class S>
S ConjugateHooks::expected_elbo(const S& ga, const S& gb, const S& ba,
                                const S& bb) const {
  using std::exp;
  using std::lgamma;
  using std::log;
  const double n = static_cast<double>(n_data);
  const S e_log_r = digamma(ga) - log(gb);
  const S e_r = ga / gb;
  const S dg_ab = digamma(ba + bb);
  const S e_log_p = digamma(ba) - dg_ab;
  const S e_log_1mp = digamma(bb) - dg_ab;

  // Expected log likelihood.
  S e_lik(0.0);
  if (tag == ModelTag::PoissonLog) {
    e_lik = sum_l * e_log_r + sum_n * e_log_p + n * (e_r * e_log_1mp);
  } else {
    S rising(lgamma_const);
    for (std::size_t t = 0; t < tail_counts.size(); ++t)
      rising = rising + tail_counts[t] *
                            expected_log_shifted_gamma<S>(
                                ga, gb, static_cast<double>(t));
    e_lik = rising + sum_x * e_log_p + n * (e_r * e_log_1mp);
  }

  // Expected log prior.
  const S e_prior_r = prior_a * std::log(prior_b) - std::lgamma(prior_a) +
                      (prior_a - 1.0) * e_log_r - prior_b * e_r;
  const S e_prior_p = -log_beta(prior_alpha, prior_beta) +
                      (prior_alpha - 1.0) * e_log_p +
                      (prior_beta - 1.0) * e_log_1mp;

  // Entropies of the conditional.
  const S h_gamma = ga - log(gb) + lgamma(ga) + (1.0 - ga) * digamma(ga);
  const S log_beta_fn = lgamma(ba) + lgamma(bb) - lgamma(ba + bb);
  const S h_beta = log_beta_fn - (ba - 1.0) * digamma(ba) -
                   (bb - 1.0) * digamma(bb) + (ba + bb - 2.0) * dg_ab;

  return e_lik + e_prior_r + e_prior_p + h_gamma + h_beta;
}

template double ConjugateHooks::expected_elbo<double>(const double&,
                                                      const double&,
                                                      const double&,
                                                      const double&) const;
template Rev ConjugateHooks::expected_elbo<Rev>(const Rev&, const Rev&,
                                                const Rev&, const Rev&) const;

ScoreGradient score_grad_phi(const SemiImplicitPosterior& post,
                             const ConjugateHooks& hooks, int K, int J,
                             RngStream& rng) {
  const ImplicitMixer& mixer = post.mixer;
  const ExplicitConditional& cond = post.cond;
  if (cond.kind != CondKind::GammaBeta)
    throw std::invalid_argument(
        "score_grad_phi: analytic hooks exist only for the Gamma x Beta "
        "conditional");
  if (K < 0 || J < 1)
    throw std::invalid_argument("score_grad_phi: K >= 0 and J >= 1");

  static thread_local Tape tape;
  tape.clear();
  TapeScope scope(tape);
  const std::vector<Rev> phi_leaves = make_leaves(tape, post.phi());
  const std::vector<Rev> xi_leaves = make_leaves(tape, post.xi());

  std::vector<double> noise(static_cast<std::size_t>(mixer.noise_dim()));

  // Shared mixture components psi^(1..K).
  RngStream shared_rng = rng.substream(0);
  std::vector<std::vector<Rev>> shared_psi(static_cast<std::size_t>(K));
  std::vector<std::vector<DistSpecT<Rev>>> shared_parts;
  shared_parts.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    mixer.draw_noise(shared_rng, noise.data());
    mlp_forward_params<Rev>(mixer.mlp, phi_leaves.data(), noise.data(),
                            shared_psi[static_cast<std::size_t>(k)]);
    shared_parts.push_back(cond.make<Rev>(
        shared_psi[static_cast<std::size_t>(k)].data(), nullptr));
  }

  std::vector<Rev> own_psi;
  std::vector<double> psi_val(static_cast<std::size_t>(cond.psi_dim()));
  std::vector<double> z(static_cast<std::size_t>(cond.zdim));
  std::vector<Rev> zrev(static_cast<std::size_t>(cond.zdim));
  std::vector<Rev> dens(static_cast<std::size_t>(K) + 1);
  std::vector<Rev> objectives(static_cast<std::size_t>(J));
  double value_acc = 0.0;

  for (int j = 0; j < J; ++j) {
    RngStream jrng = rng.substream(1 + static_cast<std::uint64_t>(j));
    mixer.draw_noise(jrng, noise.data());
    mlp_forward_params<Rev>(mixer.mlp, phi_leaves.data(), noise.data(),
                            own_psi);
    const auto own_parts = cond.make<Rev>(own_psi.data(), nullptr);

    // z is drawn (not reparameterized) and enters the tape as a constant.
    for (std::size_t d = 0; d < psi_val.size(); ++d)
      psi_val[d] = value_of(own_psi[d]);
    const auto sample_parts = cond.make<double>(psi_val.data(), nullptr);
    cond_sample(sample_parts, jrng, z.data());
    for (std::size_t d = 0; d < z.size(); ++d) zrev[d] = Rev(z[d]);

    int nd = 0;
    for (int k = 0; k < K; ++k)
      dens[nd++] = cond_logpdf<Rev>(
          shared_parts[static_cast<std::size_t>(k)], zrev.data());
    const Rev own_lq = cond_logpdf<Rev>(own_parts, zrev.data());
    dens[nd++] = own_lq;
    const Rev log_r =
        own_lq - logmeanexp(dens.data(), static_cast<std::size_t>(nd));

    const Rev analytic = hooks.expected_elbo<Rev>(
        own_parts[0].a[0], own_parts[0].b[0], own_parts[1].a[0],
        own_parts[1].b[0]);

    value_acc += value_of(analytic) + value_of(log_r);
    objectives[static_cast<std::size_t>(j)] =
        analytic + log_r + own_lq * value_of(log_r);
  }

  const Rev surrogate = sum(objectives.data(), objectives.size()) *
                        (1.0 / static_cast<double>(J));

  ScoreGradient out;
  out.value = value_acc / static_cast<double>(J);
  out.grad_phi.assign(phi_leaves.size(), 0.0);
  out.grad_xi.assign(xi_leaves.size(), 0.0);
  if (!std::isfinite(surrogate.v) || surrogate.is_const()) return out;
  const std::vector<double>& adj = tape.backward(surrogate.i);
  for (std::size_t i = 0; i < phi_leaves.size(); ++i)
    out.grad_phi[i] = adj[phi_leaves[i].i];
  for (std::size_t i = 0; i < xi_leaves.size(); ++i)
    out.grad_xi[i] = adj[xi_leaves[i].i];
  return out;
}

TrainResult train_conjugate(SemiImplicitPosterior& post, const ModelRef& model,
                            const TrainConfig& cfg) {
  if (cfg.iterations < 0)
    throw std::invalid_argument("train_conjugate: iterations < 0");
  if (cfg.J < 1) throw std::invalid_argument("train_conjugate: J >= 1");
  if (cfg.phi_step <= 0.0 || cfg.xi_step <= 0.0)
    throw std::invalid_argument("train_conjugate: step sizes must be > 0");
  const ConjugateHooks hooks = ConjugateHooks::make(model);
  const auto sched = cfg.k_schedule
                         ? cfg.k_schedule
                         : make_linear_ramp(cfg.k_max, cfg.iterations);

  RngStream root(cfg.seed);
  struct Moments {
    std::vector<double> m, v;
    int t = 0;
  };
  Moments phi_adam{std::vector<double>(post.phi().size(), 0.0),
                   std::vector<double>(post.phi().size(), 0.0), 0};
  Moments xi_adam{std::vector<double>(post.xi().size(), 0.0),
                  std::vector<double>(post.xi().size(), 0.0), 0};

  const auto ascend = [&](StepRule rule, Moments& st, std::span<double> p,
                          const std::vector<double>& g, double base,
                          int iter) {
    if (p.empty()) return;
    if (rule == StepRule::Adam) {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      ++st.t;
      const double c1 = 1.0 - std::pow(b1, st.t);
      const double c2 = 1.0 - std::pow(b2, st.t);
      for (std::size_t i = 0; i < p.size(); ++i) {
        st.m[i] = b1 * st.m[i] + (1.0 - b1) * g[i];
        st.v[i] = b2 * st.v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] += base * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
      }
    } else {
      const double step =
          base * std::pow(cfg.decay, static_cast<double>(iter) / 100.0);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] += step * g[i];
    }
  };

  TrainResult res;
  res.trace.reserve(static_cast<std::size_t>(cfg.iterations));
  int prev_k = 0;
  for (int t = 0; t < cfg.iterations; ++t) {
    const int K = sched(t);
    if (K < 0)
      throw std::invalid_argument("train_conjugate: schedule produced K < 0");
    if (t > 0 && K < prev_k)
      throw std::invalid_argument(
          "train_conjugate: K schedule must be non-decreasing");
    prev_k = K;

    RngStream iter_rng = root.substream(1 + static_cast<std::uint64_t>(t));
    RngStream grad_rng = iter_rng.substream(1);
    ScoreGradient g;
    try {
      g = score_grad_phi(post, hooks, K, cfg.J, grad_rng);
    } catch (const std::exception& e) {
      // A previously applied step can push parameters somewhere the next
      // evaluation rejects (e.g. an overflowed distribution parameter); stop
      // with the trace intact instead of propagating the crash.
      res.aborted = true;
      res.abort_iteration = t;
      res.abort_reason = std::string("evaluation failed at iteration ") +
                         std::to_string(t) + ": " + e.what();
      std::fprintf(stderr, "train_conjugate: %s; stopping\n",
                   res.abort_reason.c_str());
      break;
    }

    bool finite = std::isfinite(g.value);
    for (double gv : g.grad_phi) finite = finite && std::isfinite(gv);
    for (double gv : g.grad_xi) finite = finite && std::isfinite(gv);
    if (!finite) {
      res.aborted = true;
      res.abort_iteration = t;
      res.abort_reason =
          "non-finite bound or gradient at iteration " + std::to_string(t);
      std::fprintf(stderr, "train_conjugate: %s; stopping before the update\n",
                   res.abort_reason.c_str());
      break;
    }
    res.trace.push_back(-g.value);

    ascend(cfg.xi_rule, xi_adam, post.xi(), g.grad_xi, cfg.xi_step, t);
    ascend(cfg.phi_rule, phi_adam, post.phi(), g.grad_phi, cfg.phi_step, t);

    if (cfg.verbose && (t % 100 == 0 || t + 1 == cfg.iterations))
      std::fprintf(stderr, "train_conjugate: iter %d K=%d -bound=%.6f\n", t, K,
                   -g.value);
  }
  post.trained_seed = cfg.seed;
  return res;
}

}  // namespace sivi
