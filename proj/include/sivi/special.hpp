#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sivi {

// Digamma function psi(x) = d/dx log Gamma(x), x > 0.
double digamma(double x);

// Trigamma function psi'(x), x > 0.
double trigamma(double x);

// log(1 + exp(x)) without overflow.
double log1pexp(double x);

// Logistic sigmoid 1 / (1 + exp(-x)).
double sigmoid(double x);

// log Beta(a, b) = lgamma(a) + lgamma(b) - lgamma(a + b).
double log_beta(double a, double b);

// Indices 0..n-1 ordered so values[order[k]] is ascending (ties keep the
// smaller index first).  Shared by the plain and taped logmeanexp so both
// sum exponentials in the identical order.
void ascending_order(const double* values, std::size_t n,
                     std::vector<std::uint32_t>& order);

// log( (1/n) sum_i exp(x_i) ), evaluated as max + log(sum exp(x - max)) - log n
// with the sum taken in ascending value order.  Exactly invariant under
// permutation of the inputs.
double logmeanexp(const double* xs, std::size_t n);

}  // namespace sivi
