// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aschpuf/bitgrid.hpp"

namespace aschpuf {

struct BerReport {
  std::uint64_t n_bits = 0;  // unmasked bits
  std::uint64_t n_evals = 0;
  std::uint64_t n_errors = 0;
  double masking_ratio = 0.0;
  double ber = 0.0;
  double pessimistic_ber = 0.0;  // only set when n_errors == 0
  double unstable_fraction = 0.0;
};

/// evals[k] is the k-th evaluation of every cell, row-major like `golden`.
BerReport ber(std::span<const std::vector<std::uint8_t>> evals, std::span<const std::uint8_t> golden,
              std::span<const std::uint8_t> mask);

/// Same report from per-cell error counts (errors[i] out of n_evals).
BerReport ber_from_counts(std::span<const std::uint32_t> errors, std::uint64_t n_evals,
                          std::span<const std::uint8_t> mask);

/// Zero-error upper bound 1 / (n_bits (1 - masking_ratio) n_evals).
double pessimistic_ber(double n_bits, double masking_ratio, double n_evals);

/// Probability that an N-bit key contains at least one error.
double ker(double ber, std::uint64_t n_key_bits);

struct DetectionReport {
  double accuracy = 0.0;  // |dark & oracle| / |dark|
  double rate = 0.0;      // |dark & oracle| / |oracle|, 1 when the oracle is empty
  std::size_t dark = 0;
  std::size_t oracle = 0;
  std::size_t both = 0;
};

DetectionReport detection_accuracy(const BitGrid& dark, const BitGrid& unstable_oracle);

std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct HdReport {
  double inter_mean = 0.0;
  double intra_mean = 0.0;
  double separation = 0.0;  // inter / intra, +inf when intra is 0
};

using BitVector = std::vector<std::uint8_t>;

/// Inter: pairwise over one key per chip. Intra: pairwise among each chip's
/// re-evaluations, averaged over all pairs. Distances are normalized by length.
HdReport hamming_suites(std::span<const BitVector> keys_by_chip,
                        std::span<const std::vector<BitVector>> reevals_by_chip);

double inter_hd_mean(std::span<const BitVector> keys_by_chip);
double intra_hd_mean(std::span<const std::vector<BitVector>> reevals_by_chip);

inline constexpr double kAcfZ90 = 1.645;
inline constexpr double kAcfZ95 = 1.96;

struct AcfReport {
  std::vector<double> acf;  // acf[k-1] is lag k
  double bound = 0.0;
  std::size_t within_bound = 0;
};

AcfReport autocorrelation(std::span<const std::uint8_t> bits, std::size_t max_lag, double z = kAcfZ90);

struct RandomnessReport {
  double frequency_p = 0.0;
  double runs_p = 0.0;
  bool frequency_pass = false;
  bool runs_pass = false;
};

inline constexpr double kRandomnessAlpha = 0.01;

/// Monobit frequency and runs tests, pass at alpha = 0.01. The runs test
/// reports p = 0 when its frequency prerequisite fails.
RandomnessReport randomness_battery(std::span<const std::uint8_t> bits);

}  // namespace aschpuf
