#pragma once

// Independent reference computations used only by the tests. They share no
// code with the library: Boost.Multiprecision instead of GMP, recursion
// instead of the scheduled fold.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

// C(n, k) from one row of Pascal's triangle.
inline cpp_int binomial_pascal(unsigned n, unsigned k) {
  std::vector<cpp_int> row(k + 1, 0);
  row[0] = 1;
  for (unsigned i = 1; i <= n; ++i)
    for (unsigned j = std::min(i, k); j >= 1; --j) row[j] += row[j - 1];
  return row[k];
}

// C(n, k) = n! / (k! (n-k)!) via falling factorial over factorial.
inline cpp_int binomial_product(std::uint64_t n, std::uint64_t k) {
  cpp_int num = 1, den = 1;
  for (std::uint64_t i = 0; i < k; ++i) {
    num *= cpp_int(n - i);
    den *= cpp_int(i + 1);
  }
  return num / den;
}

// E[clamp(X, lo, hi)] for X ~ Poisson(mean), summed to convergence.
inline double clipped_poisson_mean(double mean, unsigned lo, unsigned hi) {
  long double p = std::exp(-static_cast<long double>(mean));
  long double total = 0, mass = 0;
  for (unsigned k = 0; k < 2000; ++k) {
    if (k > 0) p *= static_cast<long double>(mean) / k;
    const unsigned v = k < lo ? lo : (k > hi ? hi : k);
    total += p * v;
    mass += p;
  }
  return static_cast<double>(total / mass);
}

inline double clipped_poisson_variance(double mean, unsigned lo, unsigned hi) {
  const double mu = clipped_poisson_mean(mean, lo, hi);
  long double p = std::exp(-static_cast<long double>(mean));
  long double total = 0;
  for (unsigned k = 0; k < 2000; ++k) {
    if (k > 0) p *= static_cast<long double>(mean) / k;
    const double v = k < lo ? lo : (k > hi ? hi : k);
    total += p * (v - mu) * (v - mu);
  }
  return static_cast<double>(total);
}

}  // namespace oracle
