#pragma once

#include <stdexcept>
#include <vector>

#include "sivi/dist.hpp"

namespace sivi {

// The explicit conditional layer q_xi(z | psi): maps the mixing output psi
// (and the explicit parameter block xi) to a product of distribution parts
// laid out over consecutive z coordinates.
enum class CondKind : std::uint8_t {
  MvnDiagFixedVar,       // z ~ N(psi, sigma0_sq I); xi empty
  LogNormalFixedVar,     // z ~ LogNormal(psi, sigma0_sq); 1-D; xi empty
  LogNormalLogitNormal,  // z = (r, p); psi = (mu_r, mu_p); xi empty
  GammaBeta,             // z = (r, p); psi raw 4-dim, exp links; xi empty
  MvnMeanCov             // z ~ N(psi, Sigma_xi); xi = log-sds or packed chol
};

struct ExplicitConditional {
  CondKind kind;
  int zdim = 1;
  double sigma0_sq = 0.1;  // fixed conditional variance where applicable
  bool full_cov = false;   // MvnMeanCov: full Cholesky vs diagonal

  int psi_dim() const { return kind == CondKind::GammaBeta ? 4 : zdim; }

  int xi_len() const {
    if (kind != CondKind::MvnMeanCov) return 0;
    return full_cov ? packed_tri_len(zdim) : zdim;
  }

  bool reparameterizable() const { return kind != CondKind::GammaBeta; }

  // Standard-normal coordinates one reparameterized z draw consumes.
  int noise_dim() const {
    switch (kind) {
      case CondKind::MvnDiagFixedVar:
      case CondKind::MvnMeanCov:
        return zdim;
      case CondKind::LogNormalFixedVar:
        return 1;
      case CondKind::LogNormalLogitNormal:
        return 2;
      case CondKind::GammaBeta:
        return 0;
    }
    return 0;
  }

  // Distribution parts over consecutive z slices.
  template <class S>
  std::vector<DistSpecT<S>> make(const S* psi, const S* xi) const {
    using std::exp;
    switch (kind) {
      case CondKind::MvnDiagFixedVar: {
        DistSpecT<S> d{Family::MvnDiag, zdim, {}, {}};
        d.a.assign(psi, psi + zdim);
        d.b.assign(static_cast<std::size_t>(zdim), S(sigma0_sq));
        return {std::move(d)};
      }
      case CondKind::LogNormalFixedVar: {
        DistSpecT<S> d{Family::LogNormal, 1, {psi[0]}, {S(sigma0_sq)}};
        return {std::move(d)};
      }
      case CondKind::LogNormalLogitNormal: {
        DistSpecT<S> r{Family::LogNormal, 1, {psi[0]}, {S(sigma0_sq)}};
        DistSpecT<S> p{Family::LogitNormal, 1, {psi[1]}, {S(sigma0_sq)}};
        return {std::move(r), std::move(p)};
      }
      case CondKind::GammaBeta: {
        DistSpecT<S> r{Family::Gamma, 1, {exp(psi[0])}, {exp(psi[1])}};
        DistSpecT<S> p{Family::Beta, 1, {exp(psi[2])}, {exp(psi[3])}};
        return {std::move(r), std::move(p)};
      }
      case CondKind::MvnMeanCov: {
        DistSpecT<S> d{Family::MvnFull, zdim, {}, {}};
        d.a.assign(psi, psi + zdim);
        const int plen = packed_tri_len(zdim);
        d.b.assign(static_cast<std::size_t>(plen), S(0.0));
        if (full_cov) {
          for (int k = 0; k < plen; ++k) d.b[k] = xi[k];
        } else {
          // Diagonal: xi holds the log standard deviations.
          for (int i = 0; i < zdim; ++i) d.b[i * (i + 1) / 2 + i] = xi[i];
        }
        return {std::move(d)};
      }
    }
    throw std::logic_error("ExplicitConditional::make: unknown kind");
  }
};

// Sum of part log densities at z (parts over consecutive z slices).
template <class S>
S cond_logpdf(const std::vector<DistSpecT<S>>& parts, const S* z) {
  S acc = 0.0;
  int off = 0;
  for (const auto& part : parts) {
    acc = acc + logpdf(part, z + off);
    off += part.dim;
  }
  return acc;
}

// Reparameterized draw through all parts; `noise` holds standard normals.
template <class S>
void cond_rsample(const std::vector<DistSpecT<S>>& parts, const double* noise,
                  S* z) {
  int zoff = 0;
  int noff = 0;
  for (const auto& part : parts) {
    rsample(part, noise + noff, z + zoff);
    zoff += part.dim;
    noff += rsample_noise_dim(part.family, part.dim);
  }
}

// Exact (non-differentiable) draw through all parts.
void cond_sample(const std::vector<DistSpec>& parts, RngStream& rng, double* z);

}  // namespace sivi
