#include "sivi/bounds.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "sivi/conditional.hpp"
#include "sivi/rev.hpp"
#include "sivi/special.hpp"

namespace sivi {
namespace {

enum class DenomMode { IncludeOwn, ExcludeOwn };

void check_bound_args(const SemiImplicitPosterior& post, const ModelRef& model,
                      std::span<const int> batch, int N, int K, int Ktilde,
                      int J, DenomMode mode) {
  if (!post.cond.reparameterizable())
    throw std::invalid_argument(
        "bound estimators need a reparameterizable conditional; use the "
        "score-function trainer (train_conjugate) for this family");
  if (post.cond.zdim != model.zdim())
    throw std::invalid_argument("bound estimator: z dimension mismatch "
                                "between conditional and model");
  if (K < 0 || (mode == DenomMode::ExcludeOwn && K < 1))
    throw std::invalid_argument("bound estimator: K out of range");
  if (Ktilde < 1) throw std::invalid_argument("bound estimator: Ktilde >= 1");
  if (J < 1) throw std::invalid_argument("bound estimator: J >= 1");
  if (!batch.empty()) {
    if (N < static_cast<int>(batch.size()))
      throw std::invalid_argument("bound estimator: N smaller than batch");
    const auto n_data = static_cast<int>(model.data_size());
    for (int ix : batch)
      if (ix < 0 || ix >= n_data)
        throw std::out_of_range("bound estimator: batch index out of range");
  }
}

// Single implementation behind all three bound estimators, templated over the
// scalar so the taped evaluation replays the identical expression sequence.
template <class S>
S bound_core(const SemiImplicitPosterior& post, std::span<const S> phi,
             std::span<const S> xi, const ModelRef& model,
             std::span<const int> batch, int N, DenomMode mode, int K,
             int Ktilde, int J, RngStream& rng,
             std::vector<double>* per_terms, int* clip_events) {
  const ImplicitMixer& mixer = post.mixer;
  const ExplicitConditional& cond = post.cond;
  const int zdim = cond.zdim;
  const double scale =
      batch.empty() ? 1.0
                    : static_cast<double>(N) / static_cast<double>(batch.size());
  const S* xi_ptr = xi.empty() ? nullptr : xi.data();

  std::vector<double> noise(static_cast<std::size_t>(mixer.noise_dim()));
  std::vector<double> cnoise(static_cast<std::size_t>(cond.noise_dim()));

  // Shared mixture components psi^(1..K).
  RngStream shared_rng = rng.substream(0);
  std::vector<S> psi_buf;
  std::vector<std::vector<DistSpecT<S>>> shared_parts;
  shared_parts.reserve(static_cast<std::size_t>(K));
  std::vector<std::vector<S>> shared_psi(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    mixer.draw_noise(shared_rng, noise.data());
    mlp_forward_params<S>(mixer.mlp, phi.data(), noise.data(), shared_psi[k]);
    shared_parts.push_back(cond.make<S>(shared_psi[k].data(), xi_ptr));
  }

  std::vector<S> own_psi;
  std::vector<S> z(static_cast<std::size_t>(zdim));
  std::vector<S> dens(static_cast<std::size_t>(K) + 1);
  std::vector<S> w(static_cast<std::size_t>(Ktilde));
  std::vector<S> terms(static_cast<std::size_t>(J));

  for (int j = 0; j < J; ++j) {
    RngStream jrng = rng.substream(1 + static_cast<std::uint64_t>(j));
    for (int i = 0; i < Ktilde; ++i) {
      mixer.draw_noise(jrng, noise.data());
      mlp_forward_params<S>(mixer.mlp, phi.data(), noise.data(), own_psi);
      auto own_parts = cond.make<S>(own_psi.data(), xi_ptr);
      for (double& c : cnoise) c = jrng.normal();
      cond_rsample<S>(own_parts, cnoise.data(), z.data());

      int nd = 0;
      for (int k = 0; k < K; ++k)
        dens[nd++] = cond_logpdf<S>(shared_parts[k], z.data());
      if (mode == DenomMode::IncludeOwn)
        dens[nd++] = cond_logpdf<S>(own_parts, z.data());
      const S denom = logmeanexp(dens.data(), static_cast<std::size_t>(nd));
      const S lj = model.log_joint<S>(z.data(), batch, scale);
      w[static_cast<std::size_t>(i)] = lj - denom;
    }
    S term = logmeanexp(w.data(), static_cast<std::size_t>(Ktilde));
    const double tv = value_of(term);
    if (tv > kTermClip) {
      term = S(kTermClip);
      if (clip_events) ++*clip_events;
    } else if (tv < -kTermClip) {
      term = S(-kTermClip);
      if (clip_events) ++*clip_events;
    }
    if (per_terms) per_terms->push_back(value_of(term));
    terms[static_cast<std::size_t>(j)] = term;
  }
  return sum(terms.data(), terms.size()) * (1.0 / static_cast<double>(J));
}

BoundEstimate run_plain(const SemiImplicitPosterior& post,
                        const ModelRef& model, std::span<const int> batch,
                        int N, DenomMode mode, int K, int Ktilde, int J,
                        RngStream& rng) {
  check_bound_args(post, model, batch, N, K, Ktilde, J, mode);
  BoundEstimate est;
  est.K_used = K;
  est.Ktilde_used = Ktilde;
  est.per_sample_terms.reserve(static_cast<std::size_t>(J));
  est.value = bound_core<double>(post, post.phi(), post.xi(), model, batch, N,
                                 mode, K, Ktilde, J, rng,
                                 &est.per_sample_terms, &est.clip_events);
  return est;
}

}  // namespace

BoundEstimate lower_bound_K(const SemiImplicitPosterior& post,
                            const ModelRef& model, std::span<const int> batch,
                            int N, int K, int J, RngStream& rng) {
  return run_plain(post, model, batch, N, DenomMode::IncludeOwn, K, 1, J, rng);
}

BoundEstimate upper_bound_K(const SemiImplicitPosterior& post,
                            const ModelRef& model, std::span<const int> batch,
                            int N, int K, int J, RngStream& rng) {
  return run_plain(post, model, batch, N, DenomMode::ExcludeOwn, K, 1, J, rng);
}

BoundEstimate iw_lower_bound(const SemiImplicitPosterior& post,
                             const ModelRef& model, std::span<const int> batch,
                             int N, int K, int Ktilde, int J_outer,
                             RngStream& rng) {
  return run_plain(post, model, batch, N, DenomMode::IncludeOwn, K, Ktilde,
                   J_outer, rng);
}

BoundGradient lower_bound_K_grad(const SemiImplicitPosterior& post,
                                 const ModelRef& model,
                                 std::span<const int> batch, int N, int K,
                                 int J, RngStream& rng) {
  check_bound_args(post, model, batch, N, K, 1, J, DenomMode::IncludeOwn);
  static thread_local Tape tape;
  tape.clear();
  TapeScope scope(tape);
  const std::vector<Rev> phi_leaves = make_leaves(tape, post.phi());
  const std::vector<Rev> xi_leaves = make_leaves(tape, post.xi());
  const std::span<const Rev> phi_span(phi_leaves.data(), phi_leaves.size());
  const std::span<const Rev> xi_span(xi_leaves.data(), xi_leaves.size());

  BoundGradient out;
  const Rev value =
      bound_core<Rev>(post, phi_span, xi_span, model, batch, N,
                      DenomMode::IncludeOwn, K, 1, J, rng, nullptr,
                      &out.clip_events);
  out.value = value.v;
  out.grad_phi.assign(phi_leaves.size(), 0.0);
  out.grad_xi.assign(xi_leaves.size(), 0.0);
  if (!std::isfinite(value.v) || value.is_const()) return out;

  const std::vector<double>& adj = tape.backward(value.i);
  for (std::size_t i = 0; i < phi_leaves.size(); ++i)
    out.grad_phi[i] = adj[phi_leaves[i].i];
  for (std::size_t i = 0; i < xi_leaves.size(); ++i)
    out.grad_xi[i] = adj[xi_leaves[i].i];
  return out;
}

double regularizer_B_K(const SemiImplicitPosterior& post, int K, int J,
                       RngStream& rng) {
  if (!post.cond.reparameterizable())
    throw std::invalid_argument("regularizer_B_K: conditional must be "
                                "reparameterizable");
  if (K < 0 || J < 1)
    throw std::invalid_argument("regularizer_B_K: K >= 0 and J >= 1");
  const ImplicitMixer& mixer = post.mixer;
  const ExplicitConditional& cond = post.cond;
  const std::span<const double> phi = post.phi();
  const std::span<const double> xi = post.xi();
  const double* xi_ptr = xi.empty() ? nullptr : xi.data();

  std::vector<double> noise(static_cast<std::size_t>(mixer.noise_dim()));
  std::vector<double> cnoise(static_cast<std::size_t>(cond.noise_dim()));

  RngStream shared_rng = rng.substream(0);
  std::vector<std::vector<double>> shared_psi(static_cast<std::size_t>(K));
  std::vector<std::vector<DistSpec>> shared_parts;
  shared_parts.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    mixer.draw_noise(shared_rng, noise.data());
    mlp_forward_params<double>(mixer.mlp, phi.data(), noise.data(),
                               shared_psi[k]);
    shared_parts.push_back(cond.make<double>(shared_psi[k].data(), xi_ptr));
  }

  std::vector<double> own_psi;
  std::vector<double> z(static_cast<std::size_t>(cond.zdim));
  std::vector<double> dens(static_cast<std::size_t>(K) + 1);
  double acc = 0.0;
  for (int j = 0; j < J; ++j) {
    RngStream jrng = rng.substream(1 + static_cast<std::uint64_t>(j));
    mixer.draw_noise(jrng, noise.data());
    mlp_forward_params<double>(mixer.mlp, phi.data(), noise.data(), own_psi);
    const auto own_parts = cond.make<double>(own_psi.data(), xi_ptr);
    for (double& c : cnoise) c = jrng.normal();
    cond_rsample<double>(own_parts, cnoise.data(), z.data());
    int nd = 0;
    for (int k = 0; k < K; ++k)
      dens[nd++] = cond_logpdf<double>(shared_parts[k], z.data());
    const double own_lq = cond_logpdf<double>(own_parts, z.data());
    dens[nd++] = own_lq;
    acc += own_lq - logmeanexp(dens.data(), static_cast<std::size_t>(nd));
  }
  return acc / static_cast<double>(J);
}

double correction_A_K(const SemiImplicitPosterior& post, int K, int J,
                      RngStream& rng) {
  if (!post.cond.reparameterizable())
    throw std::invalid_argument("correction_A_K: conditional must be "
                                "reparameterizable");
  if (K < 1 || J < 1)
    throw std::invalid_argument("correction_A_K: K >= 1 and J >= 1");
  const ImplicitMixer& mixer = post.mixer;
  const ExplicitConditional& cond = post.cond;
  const std::span<const double> phi = post.phi();
  const std::span<const double> xi = post.xi();
  const double* xi_ptr = xi.empty() ? nullptr : xi.data();

  std::vector<double> noise(static_cast<std::size_t>(mixer.noise_dim()));
  std::vector<double> cnoise(static_cast<std::size_t>(cond.noise_dim()));
  std::vector<double> fresh_psi;
  std::vector<double> z(static_cast<std::size_t>(cond.zdim));
  std::vector<std::vector<double>> mix_psi(static_cast<std::size_t>(K));
  std::vector<double> dens(static_cast<std::size_t>(K));

  double acc = 0.0;
  for (int j = 0; j < J; ++j) {
    RngStream jrng = rng.substream(1 + static_cast<std::uint64_t>(j));
    // z from the marginal: fresh psi, then z ~ q(z|psi).
    mixer.draw_noise(jrng, noise.data());
    mlp_forward_params<double>(mixer.mlp, phi.data(), noise.data(), fresh_psi);
    const auto fresh_parts = cond.make<double>(fresh_psi.data(), xi_ptr);
    for (double& c : cnoise) c = jrng.normal();
    cond_rsample<double>(fresh_parts, cnoise.data(), z.data());
    // K mixture components; the reference density is component 1.
    double ref = 0.0;
    for (int k = 0; k < K; ++k) {
      mixer.draw_noise(jrng, noise.data());
      mlp_forward_params<double>(mixer.mlp, phi.data(), noise.data(),
                                 mix_psi[k]);
      const auto parts = cond.make<double>(mix_psi[k].data(), xi_ptr);
      dens[static_cast<std::size_t>(k)] = cond_logpdf<double>(parts, z.data());
      if (k == 0) ref = dens[0];
    }
    acc += logmeanexp(dens.data(), static_cast<std::size_t>(K)) - ref;
  }
  return acc / static_cast<double>(J);
}

}  // namespace sivi
