// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <vector>

#include "aschpuf/error.hpp"
#include "aschpuf/metrics.hpp"
#include "aschpuf/rng.hpp"
#include "doctest.h"

using namespace aschpuf;

namespace {

// 1 - (1 - p)^n as an alternating binomial sum in long double.
double ker_oracle(double p, unsigned n) {
  long double sum = 0.0L, term = 1.0L;
  for (unsigned k = 1; k <= n; ++k) {
    term *= static_cast<long double>(n - k + 1) / k * p;
    sum += (k % 2 ? term : -term);
  }
  return static_cast<double>(sum);
}

bool within_ulps(double a, double b, int ulps) {
  double x = b;
  for (int i = 0; i < ulps; ++i) x = std::nextafter(x, a);
  return a == x || (a - b) * (a - x) <= 0.0;
}

std::vector<std::uint8_t> random_bits(std::size_t n, std::uint64_t seed) {
  NoiseStream s(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = s.next_u64() >> 63;
  return v;
}

}  // namespace

TEST_CASE("bit error rate") {
  const std::vector<std::uint8_t> golden{1, 0, 1, 1};
  const std::vector<std::uint8_t> none(4, 0);
  std::vector<std::vector<std::uint8_t>> evals(3, golden);
  CHECK(ber(evals, golden, none).ber == 0.0);
  CHECK(ber(evals, golden, none).pessimistic_ber == doctest::Approx(1.0 / 12.0));
  evals[1][2] = 0;
  evals[2][2] = 0;
  evals[2][0] = 0;
  const auto r = ber(evals, golden, none);
  CHECK(r.n_errors == 3);
  CHECK(r.ber == 3.0 / 12.0);
  CHECK(r.unstable_fraction == 0.5);
  CHECK(r.pessimistic_ber == 0.0);

  const std::vector<std::uint8_t> mask{0, 0, 1, 0};
  const auto masked = ber(evals, golden, mask);
  CHECK(masked.n_errors == 1);
  CHECK(masked.masking_ratio == 0.25);
  CHECK(masked.ber == 1.0 / 9.0);
  CHECK_THROWS_AS(ber(evals, golden, std::vector<std::uint8_t>(4, 1)), Error);
}

TEST_CASE("one error in 4096 bits over 20000 evaluations") {
  std::vector<std::uint32_t> counts(4096, 0);
  counts[17] = 1;
  const auto r = ber_from_counts(counts, 20000, std::vector<std::uint8_t>(4096, 0));
  CHECK(r.ber == doctest::Approx(1.22e-8).epsilon(0.001));
}

TEST_CASE("pessimistic bound") {
  CHECK(pessimistic_ber(10 * 4096, 0.10, 20000) == doctest::Approx(1.36e-9).epsilon(0.003));
  CHECK(pessimistic_ber(10 * 4096, 0.31, 20000) == doctest::Approx(1.77e-9).epsilon(0.003));
  CHECK(pessimistic_ber(1, 0.0, 1) == 1.0);
  CHECK(pessimistic_ber(4096, 0.2, 2000) == 2.0 * pessimistic_ber(4096, 0.2, 4000));
  CHECK_THROWS_AS(pessimistic_ber(4096, 1.0, 10), Error);
}

TEST_CASE("key error rate") {
  CHECK(ker(0.0, 128) == 0.0);
  CHECK(ker(1.0, 5) == 1.0);
  CHECK(within_ulps(ker(1e-8, 128), ker_oracle(1e-8, 128), 1));
  CHECK(ker(1e-8, 128) == doctest::Approx(1.28e-6).epsilon(1e-4));
  CHECK(ker(3e-3, 1) == 3e-3);
  double prev = 0.0;
  for (double p : {1e-12, 1e-9, 1e-6, 1e-3, 0.1, 0.5}) {
    CHECK(ker(p, 64) > prev);
    if (p <= 0.1) CHECK(ker(p, 65) > ker(p, 64));
    CHECK(within_ulps(ker(p, 8), ker_oracle(p, 8), 4));
    prev = ker(p, 64);
  }
}

TEST_CASE("detection accuracy") {
  BitGrid oracle(2, 4), dark(2, 4);
  oracle.set(1, true);
  oracle.set(5, true);
  dark = oracle;
  CHECK(detection_accuracy(dark, oracle).accuracy == 1.0);
  dark.set(2, true);
  dark.set(6, true);
  const auto r = detection_accuracy(dark, oracle);
  CHECK(r.accuracy == 0.5);
  CHECK(r.rate == 1.0);
  CHECK(r.accuracy == doctest::Approx(r.rate * r.oracle / r.dark));
  try {
    detection_accuracy(BitGrid(2, 4), oracle);
    FAIL("expected NoDarkBits");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kNoDarkBits);
  }
}

TEST_CASE("hamming distance is a metric on 8-bit keys") {
  auto bits = [](unsigned v) {
    std::vector<std::uint8_t> b(8);
    for (unsigned i = 0; i < 8; ++i) b[i] = (v >> i) & 1u;
    return b;
  };
  for (unsigned a = 0; a < 256; a += 3) {
    for (unsigned b = 0; b < 256; b += 5) {
      const auto ka = bits(a), kb = bits(b);
      const std::size_t d = hamming_distance(ka, kb);
      CHECK(d == static_cast<std::size_t>(__builtin_popcount(a ^ b)));
      CHECK(d == hamming_distance(kb, ka));
      CHECK((d == 0) == (a == b));
      for (unsigned c = 0; c < 256; c += 37) CHECK(d <= hamming_distance(ka, bits(c)) + hamming_distance(bits(c), kb));
    }
  }
}

TEST_CASE("hamming suites") {
  std::vector<BitVector> keys;
  for (std::uint64_t s = 0; s < 10; ++s) keys.push_back(random_bits(4096, s));
  std::vector<std::vector<BitVector>> same(10);
  for (std::size_t c = 0; c < 10; ++c) same[c].assign(3, keys[c]);
  const auto r = hamming_suites(keys, same);
  CHECK(r.intra_mean == 0.0);
  CHECK(std::isinf(r.separation));
  // 45 pairs of 4096 bits: sd of the mean is about 0.0012.
  CHECK(std::fabs(r.inter_mean - 0.5) < 0.004);

  std::vector<BitVector> one{keys[0]};
  CHECK_THROWS_AS(inter_hd_mean(one), Error);
  std::vector<std::vector<BitVector>> single{{keys[0]}};
  CHECK_THROWS_AS(intra_hd_mean(single), Error);
}

TEST_CASE("autocorrelation") {
  const auto white = random_bits(40960, 42);
  const auto r = autocorrelation(white, 100);
  CHECK(r.bound == doctest::Approx(0.00813).epsilon(0.001));
  CHECK(r.acf.size() == 100);
  // White noise stays inside a z-bound with probability 2*Phi(z)-1: 0.90 at 1.645, 0.95 at 1.96.
  // The windows are about 4 binomial sd wide.
  CHECK(r.within_bound >= 78);
  const auto r95 = autocorrelation(white, 100, kAcfZ95);
  CHECK(r95.bound == doctest::Approx(1.96 / std::sqrt(40960.0)));
  CHECK(r95.within_bound >= 86);
  std::size_t total = 0;
  for (std::uint64_t s = 0; s < 50; ++s) total += autocorrelation(random_bits(40960, 500 + s), 100).within_bound;
  CHECK(std::fabs(total / 5000.0 - 0.90) < 0.02);

  std::vector<std::uint8_t> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i & 1u;
  CHECK(autocorrelation(alt, 2).acf[0] == doctest::Approx(-1.0).epsilon(0.01));
  CHECK_THROWS_AS(autocorrelation(alt, 1000), Error);
}

TEST_CASE("randomness battery") {
  int freq = 0, runs = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto r = randomness_battery(random_bits(4096, 1000 + s));
    freq += r.frequency_pass;
    runs += r.runs_pass;
  }
  CHECK(freq >= 98);
  CHECK(runs >= 98);
  CHECK_FALSE(randomness_battery(std::vector<std::uint8_t>(4096, 0)).frequency_pass);
  std::vector<std::uint8_t> alt(4096);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i & 1u;
  const auto r = randomness_battery(alt);
  CHECK(r.frequency_pass);
  CHECK_FALSE(r.runs_pass);
  CHECK_THROWS_AS(randomness_battery(std::vector<std::uint8_t>(100, 0)), Error);
}
