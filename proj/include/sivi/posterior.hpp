#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sivi/conditional.hpp"
#include "sivi/mlp.hpp"

namespace sivi {

enum class NoiseKind : std::uint8_t { Normal, PepperSalt };

// The implicit mixing layer: psi = T_phi(eps), eps ~ q(eps).  A single-entry
// widths list makes T_phi a constant map (point-mass mixing distribution).
struct ImplicitMixer {
  Mlp mlp;
  NoiseKind noise = NoiseKind::Normal;

  int noise_dim() const { return mlp.in_dim(); }
  int psi_dim() const { return mlp.out_dim(); }
  bool constant() const { return mlp.widths.size() <= 1; }

  void draw_noise(RngStream& rng, double* buf) const {
    const int n = noise_dim();
    if (noise == NoiseKind::Normal) {
      rng.fill_normal(buf, static_cast<std::size_t>(n));
    } else {
      // Binary pepper-and-salt: iid fair coin on {0, 1}.
      for (int i = 0; i < n; ++i) buf[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
  }
};

// Semi-implicit variational posterior h_phi(z) = E_{psi ~ q_phi} q_xi(z|psi).
// Owns the flat parameter vector with named slices "phi" (mixer) and "xi"
// (explicit conditional).
struct SemiImplicitPosterior {
  ImplicitMixer mixer;
  ExplicitConditional cond;
  ParamVector params;
  std::uint64_t trained_seed = 0;

  SemiImplicitPosterior() = default;
  SemiImplicitPosterior(ImplicitMixer m, ExplicitConditional c);

  std::span<const double> phi() const { return params.slice("phi"); }
  std::span<const double> xi() const { return params.slice("xi"); }
  std::span<double> phi() { return params.slice("phi"); }
  std::span<double> xi() { return params.slice("xi"); }

  // Glorot-uniform mixer weights from the given stream; xi unchanged.
  void init_params(RngStream& rng);
};

// `count` mixing-layer draws, one per row.
Tensor mix_sample(const ImplicitMixer& mixer, std::span<const double> phi,
                  RngStream& rng, int count);

// Taped variant: psi rows as tape scalars plus the phi leaves they flow from.
struct TapedMix {
  std::vector<std::vector<Rev>> psi;
  std::vector<Rev> phi_leaves;
};
TapedMix mix_sample(const ImplicitMixer& mixer, std::span<const double> phi,
                    RngStream& rng, int count, Tape& tape);

// `count` iid z draws via eps -> psi -> z feed-forward, one per row.
Tensor posterior_draws(const SemiImplicitPosterior& post, RngStream& rng,
                       int count);

// Versioned JSON round trip.
std::string posterior_to_json(const SemiImplicitPosterior& post);
SemiImplicitPosterior posterior_from_json(const std::string& text);

}  // namespace sivi
