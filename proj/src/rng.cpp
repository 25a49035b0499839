// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/rng.hpp"

#include <cmath>

namespace aschpuf {

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

template <std::size_t N>
double horner(const double (&c)[N], double x) {
  double acc = c[N - 1];
  for (std::size_t i = N - 1; i-- > 0;) acc = acc * x + c[i];
  return acc;
}

// Wichura (1988), algorithm AS241 PPND16.
constexpr double kA[] = {3.387132872796366608,   133.14166789178437745, 1971.5909503065514427,
                         13731.693765509461125,  45921.953931549871457, 67265.770927008700853,
                         33430.575583588128105,  2509.0809287301226727};
constexpr double kB[] = {1.0,                    42.313330701600911252, 687.1870074920579083,
                         5394.1960214247511077,  21213.794301586595867, 39307.89580009271061,
                         28729.085735721942674,  5226.495278852545925};
constexpr double kC[] = {1.42343711074968357734,    4.6303378461565452959,    5.7694972214606914055,
                         3.64784832476320460504,    1.27045825245236838258,   0.24178072517745061177,
                         0.0227238449892691845833,  7.7454501427834140764e-4};
constexpr double kD[] = {1.0,                       2.05319162663775882187,   1.6763848301838038494,
                         0.68976733498510000455,    0.14810397642748007459,   0.0151986665636164571966,
                         5.475938084995344946e-4,   1.05075007164441684324e-9};
constexpr double kE[] = {6.6579046435011037772,     5.4637849111641143699,    1.7848265399172913358,
                         0.29656057182850489123,    0.026532189526576123093,  0.0012426609473880784386,
                         2.71155556874348757815e-5, 2.01033439929228813265e-7};
constexpr double kF[] = {1.0,                       0.59983220655588793769,   0.13692988092273580531,
                         0.0148753612908506148525,  7.868691311456132591e-4,  1.8463183175100546818e-5,
                         1.4215117583164458887e-7,  2.04426310338993978564e-15};

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    return std::nan("");
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * horner(kA, r) / horner(kB, r);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = horner(kC, r) / horner(kD, r);
  } else {
    r -= 5.0;
    val = horner(kE, r) / horner(kF, r);
  }
  return q < 0.0 ? -val : val;
}

double NoiseStream::exponential(double mean) { return -mean * std::log(uniform()); }

std::uint64_t NoiseStream::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  // Inversion underflows for large means; a Poisson(m) is the sum of two Poisson(m/2).
  if (mean > 500.0) return poisson(mean / 2.0) + poisson(mean / 2.0);
  const double u = uniform();
  double term = std::exp(-mean);
  double cdf = term;
  std::uint64_t k = 0;
  while (u > cdf) {
    ++k;
    term *= mean / static_cast<double>(k);
    cdf += term;
    if (term < 1e-300 && static_cast<double>(k) > mean) break;
  }
  return k;
}

}  // namespace aschpuf
