#pragma once

#include <cmath>
#include <cstdint>

namespace sivi {

// Counter-based pseudorandom stream built on the SplitMix64 finalizer.
// Same seed => same sequence on every platform; substreams derived by index
// are decorrelated by construction (distinct keys through a bijective mixer).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix64(seed ^ kGolden)) {}

  RngStream substream(std::uint64_t index) const {
    RngStream s(0);
    s.key_ = mix64(key_ + kLeap * (index + 1));
    s.counter_ = 0;
    s.have_cached_ = false;
    return s;
  }

  std::uint64_t next_u64() { return mix64(key_ + kGolden * ++counter_); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one draw of the pair is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  void fill_normal(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
  static constexpr std::uint64_t kLeap = 0x632be59bd9b4e019ull;

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace sivi
