// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/asch.hpp"

#include <cmath>
#include <string>

#include "aschpuf/error.hpp"
#include "aschpuf/parallel.hpp"

namespace aschpuf {

namespace {

// Sub-stream tags inside one flow run.
constexpr std::uint64_t kFirstCheck = 1;
constexpr std::uint64_t kHealCheck = 2;
constexpr std::uint64_t kGolden = 3;
constexpr std::uint64_t kFieldKey = 5;

// Sub-stream tags inside one self-check.
constexpr std::uint64_t kLockStream = 0;
constexpr std::uint64_t kNegativeSession = 1;
constexpr std::uint64_t kPositiveSession = 2;

void finish(TimingReport& t) {
  t.total_cycles = t.lock_cycles + t.skew_detect_cycles;
  t.wall_time_us = t.total_cycles * t.cycle_period_us;
}

}  // namespace

TimingReport& TimingReport::operator+=(const TimingReport& other) {
  lock_cycles += other.lock_cycles;
  skew_detect_cycles += other.skew_detect_cycles;
  finish(*this);
  return *this;
}

bool Comparator::at_least(double a, double b, double fine_lsb_mV, NoiseStream& rng) const {
  const bool ideal = a >= b;
  if (flip_probability <= 0.0 || std::fabs(a - b) >= fine_lsb_mV) return ideal;
  unsigned agree = 0;
  for (unsigned v = 0; v < votes; ++v) agree += rng.uniform() >= flip_probability ? 1u : 0u;
  return 2 * agree > votes ? ideal : !ideal;
}

std::pair<std::uint32_t, std::uint32_t> coarse_lock(const DacModel& dac, const Comparator& cmp, NoiseStream& rng) {
  const double v2 = dac.v2();
  if (!(v2 >= dac.v1(0) && v2 <= dac.v1(dac.max_code()))) {
    throw Error(Errc::kTargetOutOfRange, "V2 = " + std::to_string(v2) + " mV outside the DAC span");
  }
  std::uint32_t code = 0;
  for (std::uint32_t bit = dac.coarse_steps() >> 1; bit != 0; bit >>= 1) {
    const std::uint32_t trial = code | bit;
    if (cmp.at_least(v2, dac.v1(trial * dac.fine_steps()), dac.fine_lsb_mV, rng)) code = trial;
  }
  return {code, dac.coarse_bits};
}

std::pair<std::uint32_t, std::uint32_t> fine_lock(const DacModel& dac, std::uint32_t coarse_code,
                                                  const Comparator& cmp, NoiseStream& rng) {
  const double v2 = dac.v2();
  const std::uint32_t base = coarse_code * dac.fine_steps();
  for (std::uint32_t f = 0; f < dac.fine_steps(); ++f) {
    if (cmp.at_least(dac.v1(base + f), v2, dac.fine_lsb_mV, rng)) return {f, f + 1};
  }
  return {dac.fine_steps() - 1, dac.fine_steps()};
}

LockState lock(const DacModel& dac, const Comparator& cmp, NoiseStream& rng) {
  LockState s;
  const auto [coarse, coarse_cycles] = coarse_lock(dac, cmp, rng);
  const auto [fine, fine_cycles] = fine_lock(dac, coarse, cmp, rng);
  s.coarse_code = coarse;
  s.fine_code = fine;
  s.cycles_used = coarse_cycles + fine_cycles;
  s.residual_mV = dac.v1(s.code(dac)) - dac.v2();
  return s;
}

SelfCheckResult self_check(const ChipModel& chip, CellConfig config, const Environment& env, double skew_mV,
                           const AschOptions& opts, NoiseStream& rng, const BitGrid* select) {
  validate(env);
  if (!(skew_mV >= 0.0)) throw Error(Errc::kInvalidArgument, "skew must be >= 0");
  if (opts.session_len == 0) throw Error(Errc::kInvalidArgument, "session_len must be >= 1");
  if (select && (select->rows() != chip.rows || select->cols() != chip.cols)) {
    throw Error(Errc::kDimensionMismatch, "select bitmap does not match chip");
  }
  const NoiseStream run = rng.split();

  NoiseStream lock_rng = run.fork(kLockStream);
  DacModel dac = opts.dac;
  dac.v2_offset_mV = chip.model.imbalance_range_mV * (2.0 * lock_rng.uniform() - 1.0);
  SelfCheckResult out;
  out.lock = lock(dac, opts.comparator, lock_rng);

  const auto steps = static_cast<std::int64_t>(std::llround(skew_mV / dac.fine_lsb_mV));
  const std::int64_t code = out.lock.code(dac);
  if (code - steps < 0 || code + steps > static_cast<std::int64_t>(dac.max_code())) {
    throw Error(Errc::kTargetOutOfRange, "skewed code outside the DAC span");
  }
  out.skew_low_mV = dac.v1(static_cast<std::uint32_t>(code - steps)) - dac.v2();
  out.skew_high_mV = dac.v1(static_cast<std::uint32_t>(code + steps)) - dac.v2();

  // Sessions are keyed by polarity, so their order only affects timing order.
  const NoiseStream neg = run.fork(kNegativeSession);
  const NoiseStream pos = run.fork(kPositiveSession);
  out.dark = BitGrid(chip.rows, chip.cols);
  parallel_for(chip.size(), [&](std::size_t i) {
    if (select && !(*select)[i]) return;
    const CellModel& cell = chip.cells[i];
    const std::uint64_t tag = cell_tag(i, config);
    NoiseStream first = (opts.negative_skew_first ? neg : pos).fork(tag);
    NoiseStream second = (opts.negative_skew_first ? pos : neg).fork(tag);
    const double s1 = opts.negative_skew_first ? out.skew_low_mV : out.skew_high_mV;
    const double s2 = opts.negative_skew_first ? out.skew_high_mV : out.skew_low_mV;
    const auto a = evaluate_session(cell, config, env, chip.model, s1, opts.session_len, first);
    const auto b = evaluate_session(cell, config, env, chip.model, s2, opts.session_len, second);
    out.dark.set(i, a.flipped || b.flipped || a.majority_bit != b.majority_bit);
  });

  out.timing.cycle_period_us = opts.cycle_period_us;
  out.timing.lock_cycles = out.lock.cycles_used;
  out.timing.skew_detect_cycles = static_cast<std::uint32_t>(2 * chip.rows);
  finish(out.timing);
  return out;
}

namespace {

// Check, heal, recheck. Fills map bitmaps and timing; the key is left to the caller.
AschResult heal_pipeline(const ChipModel& chip, const Environment& env, double skew_mV, const AschOptions& opts,
                         const NoiseStream& run, MapSource source) {
  AschResult r;
  NoiseStream first_rng = run.fork(kFirstCheck);
  NoiseStream heal_rng = run.fork(kHealCheck);
  auto first = self_check(chip, CellConfig::kOriginal, env, skew_mV, opts, first_rng);
  auto second = self_check(chip, CellConfig::kHealed, env, skew_mV, opts, heal_rng, &first.dark);

  r.map = StabilizationMap(chip.rows, chip.cols);
  r.map.skew_mV = skew_mV;
  r.map.source = source;
  r.map.env_at_check = env;
  for (std::size_t i = 0; i < chip.size(); ++i) {
    r.map.mask.set(i, second.dark[i]);
    r.map.heal.set(i, first.dark[i] && !second.dark[i]);
  }
  r.first_dark = std::move(first.dark);
  r.timing = first.timing;
  r.timing += second.timing;
  return r;
}

}  // namespace

AschResult run_s_asch(const ChipModel& chip, const Environment& env, double skew_mV, const AschOptions& opts,
                      NoiseStream& rng, const GoldenPlanes* golden) {
  const NoiseStream run = rng.split();
  AschResult r = heal_pipeline(chip, env, skew_mV, opts, run, MapSource::kStatic);
  GoldenPlanes local;
  if (!golden) {
    NoiseStream golden_rng = run.fork(kGolden);
    local = collect_golden(chip, env, opts.golden_averages, golden_rng);
    golden = &local;
  }
  r.key = stabilize_readout(golden->orig.bits, golden->healed.bits, r.map, r.map.usable_bits());
  r.key.provenance = chip.chip_id + ":s-asch";
  return r;
}

AschResult run_d_asch_powerup(const ChipModel& chip, const Environment& env, double skew_mV,
                              const AschOptions& opts, NoiseStream& rng, std::size_t key_bits) {
  const NoiseStream run = rng.split();
  AschResult r = heal_pipeline(chip, env, skew_mV, opts, run, MapSource::kDynamic);
  NoiseStream key_rng = run.fork(kFieldKey);
  r.key = generate_key(chip, r.map, env, key_bits ? key_bits : r.map.usable_bits(), key_rng);
  r.key.provenance = chip.chip_id + ":d-asch";
  return r;
}

AscResult asc_only(const ChipModel& chip, const Environment& env, double skew_mV, const AschOptions& opts,
                   NoiseStream& rng) {
  const NoiseStream run = rng.split();
  NoiseStream first_rng = run.fork(kFirstCheck);
  auto first = self_check(chip, CellConfig::kOriginal, env, skew_mV, opts, first_rng);
  return {std::move(first.dark), first.timing};
}

}  // namespace aschpuf
