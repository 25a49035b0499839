// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aschpuf/bitgrid.hpp"
#include "aschpuf/rng.hpp"

namespace aschpuf {

/// Supply voltage and temperature operating point.
struct Environment {
  double vdd_V = 1.2;
  double temperature_C = 25.0;

  bool operator==(const Environment&) const = default;
};

/// Throws kInvalidArgument outside vdd [0.5, 1.6] V or temperature [-55, 150] C.
void validate(const Environment& env);

enum class CellConfig : std::uint8_t {
  kOriginal = 0,  // 4-stage chain
  kHealed = 1,    // stages 1 and 2 shorted, 3-stage chain
};

/// Stress-driven aging. Each call to apply_aging scales every rate by
/// accel = exp(temp_accel_per_C * dT) * exp(vdd_accel_per_V * dV), measured from nominal.
struct AgingModel {
  double sigma_drift_mV = 0.0025;    // random-walk drift per sqrt(hour) at accel 1
  double temp_accel_per_C = 0.03;
  double vdd_accel_per_V = 2.0;
  double trap_rate_per_h = 3.2e-6;   // telegraph-noise traps per cell-config-hour at accel 1
  double trap_amplitude_mV = 2.0;    // mean of the exponential trap amplitude

  bool operator==(const AgingModel&) const = default;
};

/// Behavioral model parameters. Defaults are the shipped calibration.
struct ModelConfig {
  double sigma_process_mV = 21.0;
  double sigma_noise_mV = 0.19;
  double sigma_tempco_uV_per_C = 43.0;
  // Tempco magnitudes are uniform in mu*(1 +/- spread), with a random sign and
  // RMS sigma_tempco. 0 gives a fixed magnitude, 1 a triangular-ish spread.
  double tempco_spread = 0.25;
  double sigma_voltco_uV_per_V = 750.0;
  double heal_correlation = 0.0;
  double heal_bias_mV = 0.0;
  Environment nominal{};
  double imbalance_range_mV = 20.0;
  std::uint64_t seed = 0x5eed0a5c4f00dULL;
  AgingModel aging{};

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-cell static parameters. Units: mV, uV/C, uV/V.
struct CellModel {
  double dv_orig = 0.0;
  double dv_heal = 0.0;
  double tc_orig = 0.0;
  double tc_heal = 0.0;
  double vc_orig = 0.0;
  double vc_heal = 0.0;
  double drift_orig = 0.0;
  double drift_heal = 0.0;
  double trap_orig = 0.0;  // telegraph amplitude from aging traps
  double trap_heal = 0.0;

  double dv(CellConfig c) const { return c == CellConfig::kOriginal ? dv_orig : dv_heal; }
  double tc(CellConfig c) const { return c == CellConfig::kOriginal ? tc_orig : tc_heal; }
  double vc(CellConfig c) const { return c == CellConfig::kOriginal ? vc_orig : vc_heal; }
  double drift(CellConfig c) const { return c == CellConfig::kOriginal ? drift_orig : drift_heal; }
  double trap(CellConfig c) const { return c == CellConfig::kOriginal ? trap_orig : trap_heal; }

  bool operator==(const CellModel&) const = default;
};

struct ChipModel {
  std::string chip_id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<CellModel> cells;  // row-major
  ModelConfig model;

  std::size_t size() const { return cells.size(); }
  bool operator==(const ChipModel&) const = default;
};

inline constexpr std::size_t kDefaultRows = 32;
inline constexpr std::size_t kDefaultCols = 128;

/// Deterministic in (cfg.seed, chip_id).
ChipModel sample_chip(const ModelConfig& cfg, std::string_view chip_id, std::size_t rows = kDefaultRows,
                      std::size_t cols = kDefaultCols);

/// Linear decision margin in mV. Positive resolves to 1.
double margin(const CellModel& cell, CellConfig config, const Environment& env, const Environment& nominal,
              double skew_mV, double noise_mV);

inline double static_margin(const CellModel& cell, CellConfig config, const Environment& env,
                            const ModelConfig& model, double skew_mV = 0.0) {
  return margin(cell, config, env, model.nominal, skew_mV, 0.0);
}

/// Largest |noise| a single evaluation can add. A cell whose static margin is
/// beyond this resolves deterministically, so its draws can be skipped.
inline double noise_bound(const CellModel& cell, CellConfig config, const ModelConfig& model) {
  return model.sigma_noise_mV * kNormalDrawBound + cell.trap(config);
}

/// Stream tag of a cell's evaluation stream inside a chip-level run.
constexpr std::uint64_t cell_tag(std::size_t index, CellConfig config) {
  return static_cast<std::uint64_t>(index) * 2 + static_cast<std::uint64_t>(config);
}

/// One evaluation: consumes exactly one draw from `rng`. Ties resolve to 1.
bool evaluate_bit(const CellModel& cell, CellConfig config, const Environment& env, const ModelConfig& model,
                  double skew_mV, NoiseStream& rng);

struct SessionResult {
  bool majority_bit = true;  // ties resolve to 1
  bool flipped = false;      // both values observed
  std::uint32_t ones = 0;
};

/// n_evals consecutive evaluations; consumes exactly n_evals draws.
SessionResult evaluate_session(const CellModel& cell, CellConfig config, const Environment& env,
                               const ModelConfig& model, double skew_mV, std::uint32_t n_evals, NoiseStream& rng);

/// Number of evaluations out of n_evals disagreeing with `expected`.
std::uint32_t count_disagreements(const CellModel& cell, CellConfig config, const Environment& env,
                                  const ModelConfig& model, double skew_mV, bool expected, std::uint32_t n_evals,
                                  NoiseStream& rng);

double aging_acceleration(const AgingModel& aging, const Environment& stress, const Environment& nominal);

/// Returns the aged chip; hours == 0 returns an identical copy.
ChipModel apply_aging(const ChipModel& chip, double hours, const Environment& stress_env, NoiseStream& rng);

/// Brute-force oracle: marks every cell whose evaluation ever disagrees with
/// its golden bit at any grid point.
BitGrid ground_truth_unstable(const ChipModel& chip, CellConfig config, const BitGrid& golden,
                              std::span<const Environment> env_grid, double skew_mV, std::uint32_t n_evals,
                              NoiseStream& rng);

}  // namespace aschpuf
