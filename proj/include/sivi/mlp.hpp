#pragma once

#include <span>
#include <vector>

#include "sivi/rev.hpp"
#include "sivi/rng.hpp"
#include "sivi/tensor.hpp"

namespace sivi {

// Multilayer perceptron: rectifier on hidden layers, identity output.
// widths = [in, hidden..., out].  A single-entry widths list denotes a
// constant map: the parameters are just the output biases and the input is
// ignored (used for point-mass mixing distributions).
//
// Parameter layout per layer: weights row-major [out][in], then biases [out].
struct Mlp {
  std::vector<int> widths;

  int in_dim() const { return widths.size() <= 1 ? 0 : widths.front(); }
  int out_dim() const { return widths.back(); }

  int param_count() const {
    if (widths.size() <= 1) return widths.empty() ? 0 : widths.back();
    int n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      n += (widths[l] + 1) * widths[l + 1];
    return n;
  }
};

// Glorot-uniform weights, zero biases, drawn deterministically from `rng`.
void mlp_init_glorot(const Mlp& net, std::span<double> params, RngStream& rng);

// Forward pass over scalar type S (double, or Rev with an active tape when
// the parameters are tape leaves).  The identical arithmetic expression order
// in both instantiations keeps taped and untaped outputs bit-identical.
template <class S>
void mlp_forward_params(const Mlp& net, const S* params, const double* input,
                        std::vector<S>& out) {
  if (net.widths.size() <= 1) {
    const int d = net.out_dim();
    out.assign(params, params + d);
    return;
  }
  std::vector<S> cur;
  std::vector<S> next;
  const std::size_t L = net.widths.size() - 1;
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const int nin = net.widths[l];
    const int nout = net.widths[l + 1];
    const S* w = params + off;
    const S* b = params + off + static_cast<std::size_t>(nin) * nout;
    next.clear();
    next.reserve(nout);
    const bool hidden = (l + 1 < L);
    for (int o = 0; o < nout; ++o) {
      S y = (l == 0) ? dot(w + static_cast<std::size_t>(o) * nin, input, nin)
                     : dot(w + static_cast<std::size_t>(o) * nin, cur.data(), nin);
      y = y + b[o];
      next.push_back(hidden ? relu(y) : y);
    }
    cur.swap(next);
    off += static_cast<std::size_t>(nin + 1) * nout;
  }
  out = std::move(cur);
}

// Plain forward pass.
Tensor mlp_forward(const Mlp& net, std::span<const double> params,
                   const Tensor& input);

// Taped forward pass: creates one leaf per parameter, runs the recorded
// forward, and hands back both so callers can read d(out)/d(param) after
// Tape::backward.
struct TapedForward {
  std::vector<Rev> out;
  std::vector<Rev> param_leaves;
};
TapedForward mlp_forward(const Mlp& net, std::span<const double> params,
                         const Tensor& input, Tape& tape);

// Creates tape leaves for a parameter block.
std::vector<Rev> make_leaves(Tape& tape, std::span<const double> values);

}  // namespace sivi
