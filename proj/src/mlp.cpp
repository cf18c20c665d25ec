#include "sivi/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace sivi {

void mlp_init_glorot(const Mlp& net, std::span<double> params, RngStream& rng) {
  if (params.size() != static_cast<std::size_t>(net.param_count()))
    throw std::invalid_argument("mlp_init_glorot: parameter size mismatch");
  if (net.widths.size() <= 1) {
    for (auto& p : params) p = 0.0;
    return;
  }
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const int nin = net.widths[l];
    const int nout = net.widths[l + 1];
    const double limit = std::sqrt(6.0 / (nin + nout));
    for (int k = 0; k < nin * nout; ++k)
      params[off + k] = rng.uniform(-limit, limit);
    off += static_cast<std::size_t>(nin) * nout;
    for (int k = 0; k < nout; ++k) params[off + k] = 0.0;
    off += nout;
  }
}

static void check_input(const Mlp& net, const Tensor& input) {
  if (net.widths.size() > 1 &&
      input.numel() != static_cast<std::size_t>(net.in_dim()))
    throw std::invalid_argument("mlp_forward: input width mismatch");
}

Tensor mlp_forward(const Mlp& net, std::span<const double> params,
                   const Tensor& input) {
  check_input(net, input);
  if (params.size() != static_cast<std::size_t>(net.param_count()))
    throw std::invalid_argument("mlp_forward: parameter size mismatch");
  std::vector<double> out;
  mlp_forward_params<double>(net, params.data(), input.data.data(), out);
  return Tensor::vector(std::move(out));
}

std::vector<Rev> make_leaves(Tape& tape, std::span<const double> values) {
  TapeScope scope(tape);
  std::vector<Rev> leaves;
  leaves.reserve(values.size());
  for (double v : values) leaves.push_back(Rev::leaf(v));
  return leaves;
}

TapedForward mlp_forward(const Mlp& net, std::span<const double> params,
                         const Tensor& input, Tape& tape) {
  check_input(net, input);
  if (params.size() != static_cast<std::size_t>(net.param_count()))
    throw std::invalid_argument("mlp_forward: parameter size mismatch");
  TapedForward r;
  r.param_leaves = make_leaves(tape, params);
  TapeScope scope(tape);
  mlp_forward_params<Rev>(net, r.param_leaves.data(), input.data.data(), r.out);
  return r;
}

}  // namespace sivi
