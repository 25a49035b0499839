// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>

#include "aschpuf/bitgrid.hpp"
#include "aschpuf/keygen.hpp"
#include "aschpuf/puf_cell.hpp"
#include "aschpuf/rng.hpp"
#include "aschpuf/stabilization_map.hpp"

namespace aschpuf {

/// Reference DAC for V1: an 8-bit coarse SAR stage dithered by a 4-bit PWM.
/// Full code = coarse * 2^fine_bits + fine; V1 = center + (code - mid) * fine_lsb.
struct DacModel {
  unsigned coarse_bits = 8;
  unsigned fine_bits = 4;
  double fine_lsb_mV = 0.13;
  double center_mV = 615.0;
  double v2_offset_mV = 0.0;  // V2 = center + offset

  std::uint32_t fine_steps() const { return 1u << fine_bits; }
  std::uint32_t coarse_steps() const { return 1u << coarse_bits; }
  std::uint32_t max_code() const { return (1u << (coarse_bits + fine_bits)) - 1; }
  double coarse_lsb_mV() const { return fine_lsb_mV * fine_steps(); }
  double v1(std::uint32_t code) const {
    return center_mV + (static_cast<double>(code) - static_cast<double>((max_code() + 1) / 2)) * fine_lsb_mV;
  }
  double v2() const { return center_mV + v2_offset_mV; }
};

/// Majority-voted comparator. Each vote is wrong with flip_probability when
/// the inputs are within one fine LSB of each other, and right otherwise.
struct Comparator {
  double flip_probability = 0.05;
  unsigned votes = 5;

  /// Decides a >= b.
  bool at_least(double a, double b, double fine_lsb_mV, NoiseStream& rng) const;
};

struct LockState {
  std::uint32_t coarse_code = 0;
  std::uint32_t fine_code = 0;
  double residual_mV = 0.0;  // V1 - V2 at the locked code
  std::uint32_t cycles_used = 0;

  std::uint32_t code(const DacModel& dac) const { return coarse_code * dac.fine_steps() + fine_code; }
};

struct TimingReport {
  std::uint32_t lock_cycles = 0;
  std::uint32_t skew_detect_cycles = 0;
  std::uint32_t total_cycles = 0;
  double cycle_period_us = 20.0;
  double wall_time_us = 0.0;

  TimingReport& operator+=(const TimingReport& other);
};

/// Binary search for the largest coarse code with V1 <= V2; always 8 cycles.
/// Throws kTargetOutOfRange if V2 lies outside the DAC span.
std::pair<std::uint32_t, std::uint32_t> coarse_lock(const DacModel& dac, const Comparator& cmp, NoiseStream& rng);

/// Linear search from fine code 0 to the first code with V1 >= V2; saturates
/// at the last code. Returns (fine_code, cycles).
std::pair<std::uint32_t, std::uint32_t> fine_lock(const DacModel& dac, std::uint32_t coarse_code,
                                                  const Comparator& cmp, NoiseStream& rng);

LockState lock(const DacModel& dac, const Comparator& cmp, NoiseStream& rng);

struct AschOptions {
  DacModel dac{};  // v2_offset is redrawn for every self-check
  Comparator comparator{};
  std::uint32_t session_len = 64;
  bool negative_skew_first = true;
  double cycle_period_us = 20.0;
  std::uint32_t golden_averages = kDefaultGoldenAverages;
};

struct SelfCheckResult {
  BitGrid dark;
  TimingReport timing;
  LockState lock;
  double skew_low_mV = 0.0;   // effective skew of the negative session, lock residual included
  double skew_high_mV = 0.0;  // effective skew of the positive session
};

/// Locks the DAC, then runs a -skew and a +skew session of session_len
/// evaluations per selected cell. A cell is dark if it flipped in either
/// session or the two majorities differ. Unselected cells are never dark.
SelfCheckResult self_check(const ChipModel& chip, CellConfig config, const Environment& env, double skew_mV,
                           const AschOptions& opts, NoiseStream& rng, const BitGrid* select = nullptr);

struct AschResult {
  StabilizationMap map;
  Key key;
  TimingReport timing;
  BitGrid first_dark;  // dark set of the original-config check
};

/// Enrollment-time flow: check originals, heal the dark ones, recheck the
/// healed ones and mask what is still dark. The key is the stabilized readout
/// of golden planes over every unmasked cell. Pass `golden` to reuse planes.
AschResult run_s_asch(const ChipModel& chip, const Environment& env, double skew_mV, const AschOptions& opts,
                      NoiseStream& rng, const GoldenPlanes* golden = nullptr);

/// Power-up flow: same pipeline at the field env; the key is one generation
/// with the fresh map. key_bits == 0 takes every unmasked cell.
AschResult run_d_asch_powerup(const ChipModel& chip, const Environment& env, double skew_mV,
                              const AschOptions& opts, NoiseStream& rng, std::size_t key_bits = 0);

struct AscResult {
  BitGrid mask;
  TimingReport timing;
};

/// Check-only baseline: every dark cell is masked, nothing is healed. Uses the
/// same stream as the first check of run_s_asch for a given rng state.
AscResult asc_only(const ChipModel& chip, const Environment& env, double skew_mV, const AschOptions& opts,
                   NoiseStream& rng);

}  // namespace aschpuf
