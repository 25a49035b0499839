// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "aschpuf/error.hpp"

namespace aschpuf {

namespace {

BerReport finish_ber(std::uint64_t errors, std::uint64_t unstable, std::uint64_t unmasked, std::uint64_t total,
                     std::uint64_t n_evals) {
  if (unmasked == 0) throw Error(Errc::kEmptyPopulation, "every bit is masked");
  if (n_evals == 0) throw Error(Errc::kInvalidArgument, "n_evals must be >= 1");
  BerReport r;
  r.n_bits = unmasked;
  r.n_evals = n_evals;
  r.n_errors = errors;
  r.masking_ratio = static_cast<double>(total - unmasked) / static_cast<double>(total);
  r.ber = static_cast<double>(errors) / (static_cast<double>(unmasked) * static_cast<double>(n_evals));
  if (errors == 0) r.pessimistic_ber = pessimistic_ber(static_cast<double>(total), r.masking_ratio, n_evals);
  r.unstable_fraction = static_cast<double>(unstable) / static_cast<double>(unmasked);
  return r;
}

}  // namespace

BerReport ber(std::span<const std::vector<std::uint8_t>> evals, std::span<const std::uint8_t> golden,
              std::span<const std::uint8_t> mask) {
  if (mask.size() != golden.size()) throw Error(Errc::kDimensionMismatch, "mask and golden differ in size");
  for (const auto& e : evals) {
    if (e.size() != golden.size()) throw Error(Errc::kDimensionMismatch, "evaluation and golden differ in size");
  }
  std::vector<std::uint32_t> counts(golden.size(), 0);
  for (const auto& e : evals) {
    for (std::size_t i = 0; i < golden.size(); ++i) counts[i] += (e[i] != 0) != (golden[i] != 0) ? 1u : 0u;
  }
  return ber_from_counts(counts, evals.size(), mask);
}

BerReport ber_from_counts(std::span<const std::uint32_t> errors, std::uint64_t n_evals,
                          std::span<const std::uint8_t> mask) {
  if (mask.size() != errors.size()) throw Error(Errc::kDimensionMismatch, "mask and error counts differ in size");
  std::uint64_t total_errors = 0;
  std::uint64_t unstable = 0;
  std::uint64_t unmasked = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (mask[i]) continue;
    ++unmasked;
    total_errors += errors[i];
    unstable += errors[i] ? 1u : 0u;
  }
  return finish_ber(total_errors, unstable, unmasked, errors.size(), n_evals);
}

double pessimistic_ber(double n_bits, double masking_ratio, double n_evals) {
  if (!(masking_ratio >= 0.0 && masking_ratio < 1.0)) {
    throw Error(Errc::kInvalidArgument, "masking_ratio must be in [0, 1)");
  }
  if (!(n_evals >= 1.0) || !(n_bits > 0.0)) throw Error(Errc::kInvalidArgument, "n_bits and n_evals must be positive");
  return 1.0 / (n_bits * (1.0 - masking_ratio) * n_evals);
}

double ker(double ber, std::uint64_t n_key_bits) {
  if (!(ber >= 0.0 && ber <= 1.0)) throw Error(Errc::kInvalidArgument, "ber must be in [0, 1]");
  if (ber == 1.0) return n_key_bits ? 1.0 : 0.0;
  const long double n = static_cast<long double>(n_key_bits);
  return static_cast<double>(-std::expm1(n * std::log1p(-static_cast<long double>(ber))));
}

DetectionReport detection_accuracy(const BitGrid& dark, const BitGrid& unstable_oracle) {
  if (!dark.same_shape(unstable_oracle)) throw Error(Errc::kDimensionMismatch, "dark and oracle differ in shape");
  DetectionReport r;
  r.dark = dark.count();
  if (r.dark == 0) throw Error(Errc::kNoDarkBits, "no dark bits");
  r.oracle = unstable_oracle.count();
  r.both = dark.intersection_count(unstable_oracle);
  r.accuracy = static_cast<double>(r.both) / static_cast<double>(r.dark);
  r.rate = r.oracle ? static_cast<double>(r.both) / static_cast<double>(r.oracle) : 1.0;
  return r;
}

std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw Error(Errc::kDimensionMismatch, "keys differ in length");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != 0) != (b[i] != 0) ? 1u : 0u;
  return d;
}

double inter_hd_mean(std::span<const BitVector> keys_by_chip) {
  if (keys_by_chip.size() < 2) throw Error(Errc::kInsufficientPopulation, "inter-die HD needs >= 2 chips");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < keys_by_chip.size(); ++a) {
    for (std::size_t b = a + 1; b < keys_by_chip.size(); ++b) {
      if (keys_by_chip[a].empty()) throw Error(Errc::kInsufficientPopulation, "empty key");
      sum += static_cast<double>(hamming_distance(keys_by_chip[a], keys_by_chip[b])) / keys_by_chip[a].size();
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double intra_hd_mean(std::span<const std::vector<BitVector>> reevals_by_chip) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& chip : reevals_by_chip) {
    if (chip.size() < 2) throw Error(Errc::kInsufficientPopulation, "intra-die HD needs >= 2 re-evaluations");
    for (std::size_t a = 0; a < chip.size(); ++a) {
      for (std::size_t b = a + 1; b < chip.size(); ++b) {
        if (chip[a].empty()) throw Error(Errc::kInsufficientPopulation, "empty key");
        sum += static_cast<double>(hamming_distance(chip[a], chip[b])) / chip[a].size();
        ++pairs;
      }
    }
  }
  if (pairs == 0) throw Error(Errc::kInsufficientPopulation, "no chips for intra-die HD");
  return sum / static_cast<double>(pairs);
}

HdReport hamming_suites(std::span<const BitVector> keys_by_chip,
                        std::span<const std::vector<BitVector>> reevals_by_chip) {
  HdReport r;
  r.inter_mean = inter_hd_mean(keys_by_chip);
  r.intra_mean = intra_hd_mean(reevals_by_chip);
  r.separation = r.intra_mean > 0.0 ? r.inter_mean / r.intra_mean : std::numeric_limits<double>::infinity();
  return r;
}

AcfReport autocorrelation(std::span<const std::uint8_t> bits, std::size_t max_lag, double z) {
  const std::size_t n = bits.size();
  if (n <= max_lag) throw Error(Errc::kInvalidArgument, "need more bits than max_lag");
  std::vector<double> x(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i] = bits[i] ? 1.0 : -1.0;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double& v : x) {
    v -= mean;
    c0 += v * v;
  }
  AcfReport r;
  r.bound = z / std::sqrt(static_cast<double>(n));
  r.acf.resize(max_lag);
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) ck += x[i] * x[i + k];
    r.acf[k - 1] = c0 > 0.0 ? ck / c0 : 0.0;
    if (std::fabs(r.acf[k - 1]) <= r.bound) ++r.within_bound;
  }
  return r;
}

RandomnessReport randomness_battery(std::span<const std::uint8_t> bits) {
  const std::size_t n = bits.size();
  if (n < 4096) throw Error(Errc::kInsufficientPopulation, "randomness battery needs >= 4096 bits");
  RandomnessReport r;
  std::int64_t s = 0;
  std::size_t ones = 0;
  for (auto b : bits) {
    s += b ? 1 : -1;
    ones += b ? 1u : 0u;
  }
  const double dn = static_cast<double>(n);
  r.frequency_p = std::erfc(std::fabs(static_cast<double>(s)) / std::sqrt(2.0 * dn));
  r.frequency_pass = r.frequency_p >= kRandomnessAlpha;

  const double pi = static_cast<double>(ones) / dn;
  if (std::fabs(pi - 0.5) >= 2.0 / std::sqrt(dn)) {
    r.runs_p = 0.0;
  } else {
    std::size_t runs = 1;
    for (std::size_t i = 1; i < n; ++i) runs += (bits[i] != 0) != (bits[i - 1] != 0) ? 1u : 0u;
    const double num = std::fabs(static_cast<double>(runs) - 2.0 * dn * pi * (1.0 - pi));
    r.runs_p = std::erfc(num / (2.0 * std::sqrt(2.0 * dn) * pi * (1.0 - pi)));
  }
  r.runs_pass = r.runs_p >= kRandomnessAlpha;
  return r;
}

}  // namespace aschpuf
