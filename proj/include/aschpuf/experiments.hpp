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

#include "aschpuf/asch.hpp"
#include "aschpuf/keygen.hpp"
#include "aschpuf/puf_cell.hpp"
#include "aschpuf/rng.hpp"
#include "aschpuf/stabilization_map.hpp"

namespace aschpuf {

std::vector<double> default_temperatures();  // -45 .. 125 C
std::vector<double> default_vdds();          // 0.7, 1.2, 1.4 V
std::vector<double> sweep_vdds();            // 0.7 .. 1.4 V in 0.1 V steps
std::vector<double> default_skews();         // 0.25 .. 20 mV in 0.25 mV steps
std::vector<double> oracle_temperatures();   // -40 .. 125 C, 12 points
std::vector<double> default_aging_hours();   // 0 .. 96 h

inline constexpr Environment kWorstCorner{0.7, 125.0};
inline constexpr Environment kAgingStress{1.4, 150.0};
inline constexpr double kDetectionSkew_mV = 6.0;
inline constexpr double kFullRangeSkew_mV = 10.0;

/// Cartesian product, temperature-major.
std::vector<Environment> env_grid(std::span<const double> temps, std::span<const double> vdds);

struct ExperimentConfig {
  ModelConfig model{};
  std::size_t chips = 10;
  std::size_t rows = kDefaultRows;
  std::size_t cols = kDefaultCols;
  std::uint32_t evals = 2000;
  AschOptions asch{};
};

std::string chip_name(std::size_t index);

/// Independent root stream per experiment purpose.
NoiseStream experiment_stream(std::uint64_t seed, std::string_view purpose);

std::vector<ChipModel> sample_population(const ExperimentConfig& cfg);

/// Per-cell error counts against golden planes, indexed [env][cell].
/// Equivalent to n_evals calls of generate_key(chip, map, env, L, es) with
/// es = rng.split().fork(env_index), for any map.
struct ErrorScan {
  std::uint32_t n_evals = 0;
  std::vector<std::vector<std::uint32_t>> orig;
  std::vector<std::vector<std::uint32_t>> healed;  // empty if not scanned
};

ErrorScan scan_errors(const ChipModel& chip, const GoldenPlanes& golden, std::span<const Environment> envs,
                      std::uint32_t n_evals, NoiseStream& rng, bool with_healed = true);

/// Key-bit errors over every scanned env for cells the map keeps.
std::uint64_t key_errors(const ErrorScan& scan, const StabilizationMap& map);
/// Errors over every scanned env in the original config for unmasked cells.
std::uint64_t mask_errors(const ErrorScan& scan, const BitGrid& mask);

/// Pooled raw BER statistics of the original config.
struct CalibrationReport {
  double nominal_ber = 0.0;
  double nominal_unstable = 0.0;
  double temp_sweep_ber = 0.0;
  double vdd_sweep_ber = 0.0;
};

struct CalibrationTargets {
  double nominal_ber_lo = 1.5e-3, nominal_ber_hi = 6e-3;
  double unstable_lo = 0.02, unstable_hi = 0.05;
  double temp_ber_lo = 2e-2, temp_ber_hi = 8e-2;
  double vdd_ber_lo = 1e-3, vdd_ber_hi = 1e-2;

  bool met(const CalibrationReport& r) const;
};

CalibrationReport calibrate(const ExperimentConfig& cfg, std::uint64_t seed);

/// Coarse grid search over sigma_noise and sigma_tempco around cfg.model,
/// returning the model whose report is closest to the target centers.
ModelConfig fit_model(const ExperimentConfig& cfg, std::uint64_t seed);

struct SkewRow {
  double skew_mV = 0.0;
  std::string mode;  // "asc", "s-asch" or "d-asch"
  double masking_ratio = 0.0;
  std::uint64_t errors = 0;
  std::uint64_t bit_evals = 0;
  double ber = 0.0;
  double pessimistic_ber = 0.0;
};

/// Enrolls at the nominal env for each skew and evaluates keys over envs.
/// D-ASCH rows check at every env separately.
std::vector<SkewRow> sweep_skew(const ExperimentConfig& cfg, std::uint64_t seed, std::span<const double> skews,
                                std::span<const Environment> envs, bool include_dynamic);

struct ZeroBerResult {
  bool found = false;
  double skew_mV = 0.0;
  double s_asch_ratio = 0.0;
  double asc_ratio = 0.0;
  double asc_ratio_zero_ber = 0.0;  // ASC at its own smallest zero-error skew, -1 if none
  std::uint64_t asc_errors = 0;     // ASC errors at the S-ASCH skew
};

/// Smallest skew whose S-ASCH keys show zero errors over envs, pooled over chips.
ZeroBerResult find_zero_ber_skew(const ExperimentConfig& cfg, std::uint64_t seed, std::span<const double> skews,
                                 std::span<const Environment> envs);

struct StaticKeyCheck {
  std::uint64_t n_cells = 0;
  std::uint64_t n_evals = 0;  // per cell, over all envs
  std::uint64_t errors = 0;
  double masking_ratio = 0.0;
  double ber = 0.0;
  double pessimistic_ber = 0.0;  // set when errors == 0
};

/// Re-enrolls the find_zero_ber_skew population at skew_mV and counts key-bit
/// errors over envs with fresh evaluation noise.
StaticKeyCheck check_static_keys(const ExperimentConfig& cfg, std::uint64_t seed, double skew_mV,
                                 std::span<const Environment> envs);

struct EnvRow {
  std::string sweep;  // "temperature" or "vdd"
  Environment env{};
  std::string mode;   // "raw", "s-asch" or "d-asch"
  double skew_mV = 0.0;
  double masking_ratio = 0.0;
  std::uint64_t errors = 0;
  std::uint64_t bit_evals = 0;
  double ber = 0.0;
};

std::vector<EnvRow> sweep_env(const ExperimentConfig& cfg, std::uint64_t seed, std::span<const double> temps,
                              std::span<const double> vdds, std::span<const double> skews);

struct AgingRow {
  double hours = 0.0;
  std::string series;  // "s-asch@<h>" or "d-asch"
  bool found = false;
  double skew_mV = 0.0;
  double masking_ratio = 0.0;
};

/// Masking ratio needed for zero errors at eval_env after stress aging,
/// for S-ASCH enrolled at each of enroll_hours and for D-ASCH.
std::vector<AgingRow> aging_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                       std::span<const double> hours, std::span<const double> enroll_hours,
                                       std::span<const double> skews, const Environment& stress,
                                       const Environment& eval_env);

}  // namespace aschpuf
