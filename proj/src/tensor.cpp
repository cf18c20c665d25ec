#include "sivi/tensor.hpp"

#include <cmath>

namespace sivi {

bool cholesky_lower(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) return false;
    const double Ljj = std::sqrt(d);
    a[j * n + j] = Ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / Ljj;
    }
  }
  // Zero the strict upper triangle so the factor is usable as-is.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
  return true;
}

void cholesky_solve(const std::vector<double>& L, std::size_t n,
                    std::vector<double>& b) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= L[i * n + k] * b[k];
    b[i] = s / L[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= L[k * n + i] * b[k];
    b[i] = s / L[i * n + i];
  }
}

std::vector<double> cholesky_inverse(const std::vector<double>& L, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  std::vector<double> e(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::fill(e.begin(), e.end(), 0.0);
    e[c] = 1.0;
    cholesky_solve(L, n, e);
    for (std::size_t r = 0; r < n; ++r) inv[r * n + c] = e[r];
  }
  return inv;
}

}  // namespace sivi
