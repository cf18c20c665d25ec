#include "sivi/dist.hpp"

#include <cmath>
#include <limits>

#include "sivi/special.hpp"

namespace sivi {

void validate(const DistSpec& d) {
  detail::check_params_finite(d);
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  switch (d.family) {
    case Family::MvnDiag:
      require(d.a.size() == static_cast<std::size_t>(d.dim) &&
                  d.b.size() == static_cast<std::size_t>(d.dim),
              "MvnDiag: parameter length mismatch");
      for (double v : d.b) require(v > 0.0, "MvnDiag: variance must be > 0");
      return;
    case Family::MvnFull:
      require(d.a.size() == static_cast<std::size_t>(d.dim) &&
                  d.b.size() == static_cast<std::size_t>(packed_tri_len(d.dim)),
              "MvnFull: parameter length mismatch");
      return;  // diagonal is exponentiated, so any finite packing is valid
    case Family::LogNormal:
    case Family::LogitNormal:
      require(d.dim == 1 && d.a.size() == 1 && d.b.size() == 1,
              "LogNormal/LogitNormal: scalar family");
      require(d.b[0] > 0.0, "variance must be > 0");
      return;
    case Family::Gamma:
      require(d.dim == 1 && d.a.size() == 1 && d.b.size() == 1,
              "Gamma: scalar family");
      require(d.a[0] > 0.0 && d.b[0] > 0.0, "Gamma: shape, rate must be > 0");
      return;
    case Family::Beta:
      require(d.dim == 1 && d.a.size() == 1 && d.b.size() == 1,
              "Beta: scalar family");
      require(d.a[0] > 0.0 && d.b[0] > 0.0, "Beta: alpha, beta must be > 0");
      return;
    case Family::NegBinomial:
      require(d.dim == 1 && d.a.size() == 1 && d.b.size() == 1,
              "NegBinomial: scalar family");
      require(d.a[0] > 0.0, "NegBinomial: r must be > 0");
      require(d.b[0] > 0.0 && d.b[0] < 1.0, "NegBinomial: p must be in (0,1)");
      return;
    case Family::BernoulliLogit:
      require(d.a.size() == static_cast<std::size_t>(d.dim),
              "BernoulliLogit: parameter length mismatch");
      return;
  }
  throw std::logic_error("validate: unknown family");
}

double logpdf(const DistSpec& d, const Tensor& z) {
  if (z.numel() != static_cast<std::size_t>(d.dim))
    throw std::invalid_argument("logpdf: z dimension mismatch");
  return logpdf<double>(d, z.data.data());
}

Tensor rsample(const DistSpec& d, const Tensor& noise) {
  const int nd = rsample_noise_dim(d.family, d.dim);
  if (noise.numel() != static_cast<std::size_t>(nd))
    throw std::invalid_argument("rsample: noise dimension mismatch");
  std::vector<double> out(d.dim);
  rsample<double>(d, noise.data.data(), out.data());
  return Tensor::vector(std::move(out));
}

double gamma_sample(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("gamma_sample: shape, rate must be > 0");
  // Draws must stay inside the open support (0, inf): for tiny shapes the
  // exact draw can round to 0.0, where log densities blow up downstream.
  if (shape < 1.0)
    return std::max(std::exp(log_gamma_sample(shape, rng)) / rate,
                    std::numeric_limits<double>::min());
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double log_gamma_sample(double shape, RngStream& rng) {
  if (!(shape > 0.0))
    throw std::invalid_argument("log_gamma_sample: shape must be > 0");
  if (shape >= 1.0) return std::log(gamma_sample(shape, 1.0, rng));
  // Boost: G(shape) = G(shape + 1) * U^(1/shape), taken in log space so tiny
  // shapes (e.g. 0.01) do not underflow.
  const double g = gamma_sample(shape + 1.0, 1.0, rng);
  return std::log(g) + std::log(rng.uniform()) / shape;
}

double beta_sample(double alpha, double beta, RngStream& rng) {
  const double lx = log_gamma_sample(alpha, rng);
  const double ly = log_gamma_sample(beta, rng);
  const double p = sigmoid(lx - ly);  // X / (X + Y)
  // Keep the draw inside the open support (0, 1): the sigmoid rounds to an
  // endpoint once |lx - ly| saturates, and boundary values carry infinite
  // log densities downstream (the pole of a bathtub-shaped Beta).
  const double lo = std::numeric_limits<double>::min();
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::min(std::max(p, lo), hi);
}

int poisson_sample(double lambda, RngStream& rng) {
  if (lambda < 0.0) throw std::invalid_argument("poisson_sample: lambda < 0");
  if (lambda == 0.0) return 0;
  // Exponential race, split into chunks so the loop length stays modest while
  // the draw remains exact (sums of Poissons are Poisson).
  int total = 0;
  double remaining = lambda;
  while (remaining > 0.0) {
    const double chunk = remaining > 40.0 ? 40.0 : remaining;
    remaining -= chunk;
    double acc = 0.0;
    int k = -1;
    while (acc < chunk) {
      acc += -std::log(rng.uniform());
      ++k;
    }
    total += k;
  }
  return total;
}

int negbinomial_sample(double r, double p, RngStream& rng) {
  // Gamma-Poisson mixture: lambda ~ Gamma(r, (1-p)/p), x | lambda ~ Poisson.
  const double lambda = gamma_sample(r, (1.0 - p) / p, rng);
  return poisson_sample(lambda, rng);
}

Tensor sample(const DistSpec& d, RngStream& rng) {
  validate(d);
  switch (d.family) {
    case Family::MvnDiag:
    case Family::MvnFull:
    case Family::LogNormal:
    case Family::LogitNormal: {
      const int nd = rsample_noise_dim(d.family, d.dim);
      Tensor noise = Tensor::zeros({static_cast<std::size_t>(nd)});
      rng.fill_normal(noise.data.data(), noise.data.size());
      return rsample(d, noise);
    }
    case Family::Gamma:
      return Tensor::vector({gamma_sample(d.a[0], d.b[0], rng)});
    case Family::Beta:
      return Tensor::vector({beta_sample(d.a[0], d.b[0], rng)});
    case Family::NegBinomial:
      return Tensor::vector(
          {static_cast<double>(negbinomial_sample(d.a[0], d.b[0], rng))});
    case Family::BernoulliLogit: {
      std::vector<double> out(d.dim);
      for (int i = 0; i < d.dim; ++i)
        out[i] = rng.uniform() < sigmoid(d.a[i]) ? 1.0 : 0.0;
      return Tensor::vector(std::move(out));
    }
  }
  throw std::logic_error("sample: unknown family");
}

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;

// S1(a) = sum_{k>=1} 1 / ((k - 1/2)^2 + a^2) = (pi / (2a)) tanh(pi a)
double pg_series_s1(double a) {
  if (std::abs(a) < 1e-8) return kPi * kPi / 2.0;
  return kPi * std::tanh(kPi * a) / (2.0 * a);
}

// S2(a) = sum_{k>=1} 1 / ((k - 1/2)^2 + a^2)^2
//       = (pi / (4 a^3)) (tanh(pi a) - pi a sech^2(pi a))
double pg_series_s2(double a) {
  const double x = kPi * a;
  if (std::abs(a) < 0.02) {
    // tanh(x) - x sech^2(x) = (2/3)x^3 - (8/15)x^5 + (34/105)x^7 + O(x^9);
    // the direct formula cancels catastrophically near zero.
    const double x2 = x * x;
    return (kPi * kPi * kPi * kPi / 4.0) *
           (2.0 / 3.0 - x2 * (8.0 / 15.0 - x2 * (34.0 / 105.0)));
  }
  const double t = std::tanh(x);
  const double sech2 = 1.0 - t * t;
  return kPi * (t - x * sech2) / (4.0 * a * a * a);
}

}  // namespace

double polya_gamma_sample(double c, RngStream& rng, int trunc_m) {
  if (trunc_m < 1) throw std::invalid_argument("polya_gamma_sample: M >= 1");
  const double a = c / (2.0 * kPi);
  const double a2 = a * a;
  double partial1 = 0.0;
  double partial2 = 0.0;
  double acc = 0.0;
  for (int k = 1; k < trunc_m; ++k) {
    const double dk = (k - 0.5) * (k - 0.5) + a2;
    partial1 += 1.0 / dk;
    partial2 += 1.0 / (dk * dk);
    acc += -std::log(rng.uniform()) / dk;  // Exp(1) / d_k
  }
  const double tail1 = pg_series_s1(a) - partial1;
  const double tail2 = pg_series_s2(a) - partial2;
  // Gamma(s, rate) with mean tail1 and variance tail2.
  const double rate = tail1 / tail2;
  const double s = tail1 * rate;
  acc += gamma_sample(s, rate, rng);
  return acc / (2.0 * kPi * kPi);
}

int crt_sample(int n, double r, RngStream& rng) {
  if (n < 0 || !(r > 0.0)) throw std::invalid_argument("crt_sample: bad inputs");
  int l = 0;
  for (int t = 1; t <= n; ++t)
    if (rng.uniform() < r / (r + t - 1.0)) ++l;
  return l;
}

}  // namespace sivi
