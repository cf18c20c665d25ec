#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sivi {

// Dense row-major double tensor with shape metadata.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size())
      throw std::invalid_argument("Tensor: shape/data mismatch");
  }

  static Tensor vector(std::vector<double> d) {
    const std::size_t n = d.size();
    return Tensor({n}, std::move(d));
  }
  static Tensor zeros(std::vector<std::size_t> s) {
    const std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }
};

// Flat parameter vector carved into named slices (layer weights, conditional
// parameters, ...).  Slice offsets partition the vector exactly.
struct ParamVector {
  struct Slice {
    std::string name;
    std::size_t offset;
    std::size_t len;
  };

  std::vector<double> data;
  std::vector<Slice> slices;

  std::size_t add_slice(const std::string& name, std::size_t len) {
    const std::size_t off = data.size();
    slices.push_back({name, off, len});
    data.resize(off + len, 0.0);
    return off;
  }

  const Slice& find(const std::string& name) const {
    for (const auto& s : slices)
      if (s.name == name) return s;
    throw std::out_of_range("ParamVector: no slice named " + name);
  }

  std::span<double> slice(const std::string& name) {
    const Slice& s = find(name);
    return {data.data() + s.offset, s.len};
  }
  std::span<const double> slice(const std::string& name) const {
    const Slice& s = find(name);
    return {data.data() + s.offset, s.len};
  }
};

// Dense symmetric positive-definite helpers for the small systems the Gibbs
// and mean-field updates need (dimension <= a few dozen).

// In-place lower Cholesky of a row-major n x n matrix; returns false if a
// pivot is not positive.  Only the lower triangle of `a` is referenced/written.
bool cholesky_lower(std::vector<double>& a, std::size_t n);

// Solves L y = b then L^T x = y for lower-triangular L (row-major n x n).
void cholesky_solve(const std::vector<double>& L, std::size_t n,
                    std::vector<double>& b);

// Inverse of an SPD matrix from its lower Cholesky factor (row-major output).
std::vector<double> cholesky_inverse(const std::vector<double>& L, std::size_t n);

}  // namespace sivi
