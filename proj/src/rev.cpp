#include "sivi/rev.hpp"

#include <cmath>
#include <stdexcept>

namespace sivi {

const std::vector<double>& Tape::backward(std::uint32_t out) {
  if (out >= val_.size()) throw std::out_of_range("Tape::backward: bad node id");
  adj_.assign(val_.size(), 0.0);
  adj_[out] = 1.0;
  for (std::uint32_t i = out + 1; i-- > 0;) {
    const double a = adj_[i];
    if (a == 0.0) continue;
    const std::uint32_t lo = head_[i];
    const std::uint32_t hi = head_[i + 1];
    for (std::uint32_t k = lo; k < hi; ++k) adj_[parents_[k]] += a * partials_[k];
  }
  return adj_;
}

Rev sum(const Rev* xs, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += xs[k].v;
  bool any = false;
  for (std::size_t k = 0; k < n; ++k)
    if (!xs[k].is_const()) {
      any = true;
      break;
    }
  if (!any) return Rev(s);
  Tape* t = g_active_tape;
  t->begin_node(s);
  for (std::size_t k = 0; k < n; ++k)
    if (!xs[k].is_const()) t->push_parent(xs[k].i, 1.0);
  return Rev(s, t->seal_node());
}

Rev dot(const Rev* a, const Rev* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k].v * b[k].v;
  bool any = false;
  for (std::size_t k = 0; k < n; ++k)
    if (!a[k].is_const() || !b[k].is_const()) {
      any = true;
      break;
    }
  if (!any) return Rev(s);
  Tape* t = g_active_tape;
  t->begin_node(s);
  for (std::size_t k = 0; k < n; ++k) {
    if (!a[k].is_const()) t->push_parent(a[k].i, b[k].v);
    if (!b[k].is_const()) t->push_parent(b[k].i, a[k].v);
  }
  return Rev(s, t->seal_node());
}

Rev dot(const Rev* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k].v * b[k];
  bool any = false;
  for (std::size_t k = 0; k < n; ++k)
    if (!a[k].is_const()) {
      any = true;
      break;
    }
  if (!any) return Rev(s);
  Tape* t = g_active_tape;
  t->begin_node(s);
  for (std::size_t k = 0; k < n; ++k)
    if (!a[k].is_const()) t->push_parent(a[k].i, b[k]);
  return Rev(s, t->seal_node());
}

Rev logmeanexp(const Rev* xs, std::size_t n) {
  if (n == 0) throw std::invalid_argument("logmeanexp: empty input");
  thread_local std::vector<double> vals;
  thread_local std::vector<std::uint32_t> order;
  vals.resize(n);
  for (std::size_t k = 0; k < n; ++k) vals[k] = xs[k].v;
  ascending_order(vals.data(), n, order);
  const double m = vals[order[n - 1]];
  thread_local std::vector<double> ex;
  ex.resize(n);
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ex[order[k]] = std::exp(vals[order[k]] - m);
    s += ex[order[k]];
  }
  const double value = m + std::log(s) - std::log(static_cast<double>(n));
  bool any = false;
  for (std::size_t k = 0; k < n; ++k)
    if (!xs[k].is_const()) {
      any = true;
      break;
    }
  if (!any) return Rev(value);
  Tape* t = g_active_tape;
  t->begin_node(value);
  const double inv_s = 1.0 / s;
  for (std::size_t k = 0; k < n; ++k)
    if (!xs[k].is_const()) t->push_parent(xs[k].i, ex[k] * inv_s);
  return Rev(value, t->seal_node());
}

}  // namespace sivi
