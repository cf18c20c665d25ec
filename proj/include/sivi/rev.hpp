#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sivi/special.hpp"

namespace sivi {

// Tape-based reverse-mode autodiff over scalars.  Nodes store parent indices
// and local partial derivatives in pooled arrays; backward() replays adjoints
// in reverse topological (= recording) order.
class Tape {
 public:
  Tape() { head_.push_back(0); }

  std::uint32_t leaf(double v) {
    val_.push_back(v);
    head_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return static_cast<std::uint32_t>(val_.size() - 1);
  }

  std::uint32_t unary(double v, std::uint32_t p, double d) {
    val_.push_back(v);
    parents_.push_back(p);
    partials_.push_back(d);
    head_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return static_cast<std::uint32_t>(val_.size() - 1);
  }

  std::uint32_t binary(double v, std::uint32_t p0, double d0, std::uint32_t p1,
                       double d1) {
    val_.push_back(v);
    parents_.push_back(p0);
    partials_.push_back(d0);
    parents_.push_back(p1);
    partials_.push_back(d1);
    head_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return static_cast<std::uint32_t>(val_.size() - 1);
  }

  // Begins an n-ary node; feed parents with push_parent, then seal.
  void begin_node(double v) { val_.push_back(v); }
  void push_parent(std::uint32_t p, double d) {
    parents_.push_back(p);
    partials_.push_back(d);
  }
  std::uint32_t seal_node() {
    head_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return static_cast<std::uint32_t>(val_.size() - 1);
  }

  std::size_t size() const { return val_.size(); }
  double value(std::uint32_t i) const { return val_[i]; }

  void clear() {
    val_.clear();
    parents_.clear();
    partials_.clear();
    head_.assign(1, 0);
  }

  // Adjoints of node `out` with respect to every node (leaves included).
  const std::vector<double>& backward(std::uint32_t out);

  const std::vector<double>& adjoints() const { return adj_; }

 private:
  std::vector<double> val_;
  std::vector<std::uint32_t> head_;  // head_[i]..head_[i+1) indexes parents_
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
  std::vector<double> adj_;
};

inline thread_local Tape* g_active_tape = nullptr;

// RAII activation of a tape for the Rev operator overloads.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
  ~TapeScope() { g_active_tape = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Scalar tracked on the active tape.  A Rev holding kConstIdx is a constant:
// it records nothing and contributes no gradient.
struct Rev {
  static constexpr std::uint32_t kConstIdx = 0xffffffffu;

  double v = 0.0;
  std::uint32_t i = kConstIdx;

  Rev() = default;
  Rev(double c) : v(c) {}  // NOLINT: implicit constants are the point
  Rev(double value, std::uint32_t idx) : v(value), i(idx) {}

  bool is_const() const { return i == kConstIdx; }

  static Rev leaf(double value) {
    assert(g_active_tape != nullptr);
    return Rev(value, g_active_tape->leaf(value));
  }
};

inline double value_of(double x) { return x; }
inline double value_of(const Rev& x) { return x.v; }

namespace detail {
inline Rev record1(double v, const Rev& a, double da) {
  if (a.is_const()) return Rev(v);
  return Rev(v, g_active_tape->unary(v, a.i, da));
}
inline Rev record2(double v, const Rev& a, double da, const Rev& b, double db) {
  if (a.is_const() && b.is_const()) return Rev(v);
  if (a.is_const()) return Rev(v, g_active_tape->unary(v, b.i, db));
  if (b.is_const()) return Rev(v, g_active_tape->unary(v, a.i, da));
  return Rev(v, g_active_tape->binary(v, a.i, da, b.i, db));
}
}  // namespace detail

inline Rev operator+(const Rev& a, const Rev& b) {
  return detail::record2(a.v + b.v, a, 1.0, b, 1.0);
}
inline Rev operator-(const Rev& a, const Rev& b) {
  return detail::record2(a.v - b.v, a, 1.0, b, -1.0);
}
inline Rev operator*(const Rev& a, const Rev& b) {
  return detail::record2(a.v * b.v, a, b.v, b, a.v);
}
inline Rev operator/(const Rev& a, const Rev& b) {
  const double inv = 1.0 / b.v;
  return detail::record2(a.v * inv, a, inv, b, -a.v * inv * inv);
}
inline Rev operator-(const Rev& a) { return detail::record1(-a.v, a, -1.0); }
inline Rev& operator+=(Rev& a, const Rev& b) { return a = a + b; }
inline Rev& operator-=(Rev& a, const Rev& b) { return a = a - b; }
inline Rev& operator*=(Rev& a, const Rev& b) { return a = a * b; }
inline Rev& operator/=(Rev& a, const Rev& b) { return a = a / b; }

inline bool operator<(const Rev& a, const Rev& b) { return a.v < b.v; }
inline bool operator>(const Rev& a, const Rev& b) { return a.v > b.v; }
inline bool operator<=(const Rev& a, const Rev& b) { return a.v <= b.v; }
inline bool operator>=(const Rev& a, const Rev& b) { return a.v >= b.v; }

inline Rev exp(const Rev& a) {
  const double e = std::exp(a.v);
  return detail::record1(e, a, e);
}
inline Rev log(const Rev& a) {
  return detail::record1(std::log(a.v), a, 1.0 / a.v);
}
inline Rev sqrt(const Rev& a) {
  const double s = std::sqrt(a.v);
  return detail::record1(s, a, 0.5 / s);
}
inline Rev tanh(const Rev& a) {
  const double t = std::tanh(a.v);
  return detail::record1(t, a, 1.0 - t * t);
}
inline Rev lgamma(const Rev& a) {
  return detail::record1(std::lgamma(a.v), a, digamma(a.v));
}
inline Rev digamma(const Rev& a) {
  return detail::record1(digamma(a.v), a, trigamma(a.v));
}
inline Rev log1p(const Rev& a) {
  return detail::record1(std::log1p(a.v), a, 1.0 / (1.0 + a.v));
}
inline Rev log1pexp(const Rev& a) {
  return detail::record1(log1pexp(a.v), a, sigmoid(a.v));
}
inline Rev sigmoid(const Rev& a) {
  const double s = sigmoid(a.v);
  return detail::record1(s, a, s * (1.0 - s));
}
inline Rev pow(const Rev& a, double e) {
  return detail::record1(std::pow(a.v, e), a, e * std::pow(a.v, e - 1.0));
}

// Rectifier with subgradient 0 at the kink.
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline Rev relu(const Rev& a) {
  if (a.v > 0.0) return detail::record1(a.v, a, 1.0);
  return Rev(0.0);
}

// Left-to-right sum; the Rev overload records one n-ary node.
inline double sum(const double* xs, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += xs[k];
  return s;
}
Rev sum(const Rev* xs, std::size_t n);

// Left-to-right inner products.  The (Rev, Rev) overload contributes partials
// for both factor vectors; the mixed overload treats `b` as constant data.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}
Rev dot(const Rev* a, const Rev* b, std::size_t n);
Rev dot(const Rev* a, const double* b, std::size_t n);

// logmeanexp over n scalars; shares the ascending summation order with the
// plain-double version in special.hpp, so taped and untaped values agree
// bit-for-bit and the result is exactly permutation invariant.
Rev logmeanexp(const Rev* xs, std::size_t n);

// Central finite-difference gradient; test oracle for the tape.
template <class F>
std::vector<double> finite_diff_grad(const F& f, std::vector<double> at,
                                     double step) {
  std::vector<double> g(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) {
    const double saved = at[k];
    at[k] = saved + step;
    const double fp = f(at);
    at[k] = saved - step;
    const double fm = f(at);
    at[k] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_grad: non-finite evaluation");
    g[k] = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace sivi
