#include "sivi/posterior.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace sivi {

SemiImplicitPosterior::SemiImplicitPosterior(ImplicitMixer m,
                                             ExplicitConditional c)
    : mixer(std::move(m)), cond(c) {
  if (mixer.psi_dim() != cond.psi_dim())
    throw std::invalid_argument(
        "SemiImplicitPosterior: mixer output dim != conditional psi dim");
  params.add_slice("phi", static_cast<std::size_t>(mixer.mlp.param_count()));
  params.add_slice("xi", static_cast<std::size_t>(cond.xi_len()));
}

void SemiImplicitPosterior::init_params(RngStream& rng) {
  auto phi_slice = params.slice("phi");
  mlp_init_glorot(mixer.mlp, phi_slice, rng);
}

Tensor mix_sample(const ImplicitMixer& mixer, std::span<const double> phi,
                  RngStream& rng, int count) {
  if (count < 0) throw std::invalid_argument("mix_sample: count must be >= 0");
  const int pd = mixer.psi_dim();
  Tensor out = Tensor::zeros(
      {static_cast<std::size_t>(count), static_cast<std::size_t>(pd)});
  std::vector<double> noise(static_cast<std::size_t>(mixer.noise_dim()));
  std::vector<double> psi;
  for (int c = 0; c < count; ++c) {
    mixer.draw_noise(rng, noise.data());
    mlp_forward_params<double>(mixer.mlp, phi.data(), noise.data(), psi);
    for (int i = 0; i < pd; ++i) out.row(c)[i] = psi[i];
  }
  return out;
}

TapedMix mix_sample(const ImplicitMixer& mixer, std::span<const double> phi,
                    RngStream& rng, int count, Tape& tape) {
  TapedMix r;
  r.phi_leaves = make_leaves(tape, phi);
  TapeScope scope(tape);
  std::vector<double> noise(static_cast<std::size_t>(mixer.noise_dim()));
  r.psi.resize(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    mixer.draw_noise(rng, noise.data());
    mlp_forward_params<Rev>(mixer.mlp, r.phi_leaves.data(), noise.data(),
                            r.psi[c]);
  }
  return r;
}

Tensor posterior_draws(const SemiImplicitPosterior& post, RngStream& rng,
                       int count) {
  const int zd = post.cond.zdim;
  Tensor out = Tensor::zeros(
      {static_cast<std::size_t>(count), static_cast<std::size_t>(zd)});
  std::vector<double> eps(static_cast<std::size_t>(post.mixer.noise_dim()));
  std::vector<double> cnoise(static_cast<std::size_t>(post.cond.noise_dim()));
  std::vector<double> psi;
  const auto phi = post.phi();
  const auto xi = post.xi();
  for (int c = 0; c < count; ++c) {
    post.mixer.draw_noise(rng, eps.data());
    mlp_forward_params<double>(post.mixer.mlp, phi.data(), eps.data(), psi);
    auto parts = post.cond.make<double>(psi.data(), xi.data());
    if (post.cond.reparameterizable()) {
      rng.fill_normal(cnoise.data(), cnoise.size());
      cond_rsample<double>(parts, cnoise.data(), out.row(c));
    } else {
      cond_sample(parts, rng, out.row(c));
    }
  }
  return out;
}

void cond_sample(const std::vector<DistSpec>& parts, RngStream& rng,
                 double* z) {
  int off = 0;
  for (const auto& part : parts) {
    Tensor draw = sample(part, rng);
    for (int i = 0; i < part.dim; ++i) z[off + i] = draw.data[i];
    off += part.dim;
  }
}

namespace {

const char* cond_kind_name(CondKind k) {
  switch (k) {
    case CondKind::MvnDiagFixedVar: return "mvn_diag_fixed_var";
    case CondKind::LogNormalFixedVar: return "lognormal_fixed_var";
    case CondKind::LogNormalLogitNormal: return "lognormal_logitnormal";
    case CondKind::GammaBeta: return "gamma_beta";
    case CondKind::MvnMeanCov: return "mvn_mean_cov";
  }
  throw std::logic_error("unknown conditional kind");
}

CondKind cond_kind_from(const std::string& s) {
  if (s == "mvn_diag_fixed_var") return CondKind::MvnDiagFixedVar;
  if (s == "lognormal_fixed_var") return CondKind::LogNormalFixedVar;
  if (s == "lognormal_logitnormal") return CondKind::LogNormalLogitNormal;
  if (s == "gamma_beta") return CondKind::GammaBeta;
  if (s == "mvn_mean_cov") return CondKind::MvnMeanCov;
  throw std::invalid_argument("unknown conditional kind: " + s);
}

}  // namespace

std::string posterior_to_json(const SemiImplicitPosterior& post) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["mixer"]["widths"] = post.mixer.mlp.widths;
  j["mixer"]["noise"] =
      post.mixer.noise == NoiseKind::Normal ? "normal" : "pepper_salt";
  j["conditional"]["kind"] = cond_kind_name(post.cond.kind);
  j["conditional"]["zdim"] = post.cond.zdim;
  j["conditional"]["sigma0_sq"] = post.cond.sigma0_sq;
  j["conditional"]["full_cov"] = post.cond.full_cov;
  const auto phi = post.phi();
  const auto xi = post.xi();
  j["phi"] = std::vector<double>(phi.begin(), phi.end());
  j["xi"] = std::vector<double>(xi.begin(), xi.end());
  j["trained_seed"] = post.trained_seed;
  return j.dump(2);
}

SemiImplicitPosterior posterior_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("posterior_from_json: unsupported version");
  ImplicitMixer mixer;
  mixer.mlp.widths = j.at("mixer").at("widths").get<std::vector<int>>();
  mixer.noise = j.at("mixer").at("noise").get<std::string>() == "pepper_salt"
                    ? NoiseKind::PepperSalt
                    : NoiseKind::Normal;
  ExplicitConditional cond;
  cond.kind = cond_kind_from(j.at("conditional").at("kind").get<std::string>());
  cond.zdim = j.at("conditional").at("zdim").get<int>();
  cond.sigma0_sq = j.at("conditional").at("sigma0_sq").get<double>();
  cond.full_cov = j.at("conditional").at("full_cov").get<bool>();
  SemiImplicitPosterior post(mixer, cond);
  const auto phi = j.at("phi").get<std::vector<double>>();
  const auto xi = j.at("xi").get<std::vector<double>>();
  auto phi_slice = post.params.slice("phi");
  auto xi_slice = post.params.slice("xi");
  if (phi.size() != phi_slice.size() || xi.size() != xi_slice.size())
    throw std::invalid_argument("posterior_from_json: parameter size mismatch");
  std::copy(phi.begin(), phi.end(), phi_slice.begin());
  std::copy(xi.begin(), xi.end(), xi_slice.begin());
  post.trained_seed = j.value("trained_seed", 0ull);
  return post;
}

}  // namespace sivi
