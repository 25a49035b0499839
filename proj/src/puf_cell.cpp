// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/puf_cell.hpp"

#include <cmath>
#include <string>

#include "aschpuf/error.hpp"
#include "aschpuf/parallel.hpp"

namespace aschpuf {

void validate(const Environment& env) {
  if (!(env.vdd_V >= 0.5 && env.vdd_V <= 1.6)) {
    throw Error(Errc::kInvalidArgument, "vdd " + std::to_string(env.vdd_V) + " V outside [0.5, 1.6]");
  }
  if (!(env.temperature_C >= -55.0 && env.temperature_C <= 150.0)) {
    throw Error(Errc::kInvalidArgument,
                "temperature " + std::to_string(env.temperature_C) + " C outside [-55, 150]");
  }
}

void ModelConfig::validate() const {
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::kConfig, std::string(name) + " must be >= 0");
  };
  non_negative(sigma_process_mV, "sigma_process");
  non_negative(sigma_noise_mV, "sigma_noise");
  non_negative(sigma_tempco_uV_per_C, "sigma_tempco");
  non_negative(sigma_voltco_uV_per_V, "sigma_voltco");
  non_negative(imbalance_range_mV, "imbalance_range");
  non_negative(aging.sigma_drift_mV, "aging.sigma_drift");
  non_negative(aging.trap_rate_per_h, "aging.trap_rate");
  non_negative(aging.trap_amplitude_mV, "aging.trap_amplitude");
  if (!(tempco_spread >= 0.0 && tempco_spread <= 1.0)) throw Error(Errc::kConfig, "tempco_spread must be in [0, 1]");
  if (!(std::fabs(heal_correlation) <= 1.0)) throw Error(Errc::kConfig, "|heal_correlation| must be <= 1");
  if (!std::isfinite(heal_bias_mV)) throw Error(Errc::kConfig, "heal_bias must be finite");
  try {
    aschpuf::validate(nominal);
  } catch (const Error& e) {
    throw Error(Errc::kConfig, std::string("nominal environment: ") + e.what());
  }
}

namespace {

double draw_tempco(NoiseStream& s, double sigma, double spread) {
  const std::uint64_t bits = s.next_u64();
  const double u = NoiseStream::uniform_from_bits(bits);
  const double mu = sigma / std::sqrt(1.0 + spread * spread / 3.0);
  const double magnitude = mu * (1.0 - spread + 2.0 * spread * u);
  return (bits & 1u) ? magnitude : -magnitude;
}

}  // namespace

ChipModel sample_chip(const ModelConfig& cfg, std::string_view chip_id, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw Error(Errc::kInvalidArgument, "rows and cols must be >= 1");
  cfg.validate();
  ChipModel chip;
  chip.chip_id = std::string(chip_id);
  chip.rows = rows;
  chip.cols = cols;
  chip.model = cfg;
  chip.cells.resize(rows * cols);

  const std::uint64_t chip_key = derive_key(cfg.seed, hash_string(chip_id));
  const double rho = cfg.heal_correlation;
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (std::size_t i = 0; i < chip.cells.size(); ++i) {
    NoiseStream s(derive_key(chip_key, i));
    CellModel& c = chip.cells[i];
    const double z1 = s.normal();
    const double z2 = s.normal();
    c.dv_orig = cfg.sigma_process_mV * z1;
    c.dv_heal = cfg.sigma_process_mV * (rho * z1 + rho_c * z2) + cfg.heal_bias_mV;
    c.tc_orig = draw_tempco(s, cfg.sigma_tempco_uV_per_C, cfg.tempco_spread);
    c.tc_heal = draw_tempco(s, cfg.sigma_tempco_uV_per_C, cfg.tempco_spread);
    c.vc_orig = cfg.sigma_voltco_uV_per_V * s.normal();
    c.vc_heal = cfg.sigma_voltco_uV_per_V * s.normal();
  }
  return chip;
}

double margin(const CellModel& cell, CellConfig config, const Environment& env, const Environment& nominal,
              double skew_mV, double noise_mV) {
  return cell.dv(config) + cell.tc(config) * (env.temperature_C - nominal.temperature_C) / 1000.0 +
         cell.vc(config) * (env.vdd_V - nominal.vdd_V) / 1000.0 + cell.drift(config) + skew_mV + noise_mV;
}

namespace {

// Decodes one draw into a noise sample: top 52 bits feed the Gaussian, bit 0
// picks the telegraph state.
inline double noise_from_bits(std::uint64_t bits, double sigma, double trap) {
  double n = sigma * normal_quantile(NoiseStream::uniform_from_bits(bits));
  if (trap > 0.0) n += (bits & 1u) ? trap : -trap;
  return n;
}

}  // namespace

bool evaluate_bit(const CellModel& cell, CellConfig config, const Environment& env, const ModelConfig& model,
                  double skew_mV, NoiseStream& rng) {
  const double m0 = static_margin(cell, config, env, model, skew_mV);
  const double bound = noise_bound(cell, config, model);
  if (m0 > bound) {
    rng.skip(1);
    return true;
  }
  if (m0 < -bound) {
    rng.skip(1);
    return false;
  }
  return m0 + noise_from_bits(rng.next_u64(), model.sigma_noise_mV, cell.trap(config)) >= 0.0;
}

SessionResult evaluate_session(const CellModel& cell, CellConfig config, const Environment& env,
                               const ModelConfig& model, double skew_mV, std::uint32_t n_evals, NoiseStream& rng) {
  if (n_evals == 0) throw Error(Errc::kInvalidArgument, "n_evals must be >= 1");
  const double m0 = static_margin(cell, config, env, model, skew_mV);
  const double bound = noise_bound(cell, config, model);
  SessionResult r;
  if (m0 > bound || m0 < -bound) {
    rng.skip(n_evals);
    r.ones = m0 > 0.0 ? n_evals : 0;
  } else {
    const double trap = cell.trap(config);
    for (std::uint32_t k = 0; k < n_evals; ++k) {
      r.ones += (m0 + noise_from_bits(rng.next_u64(), model.sigma_noise_mV, trap) >= 0.0) ? 1u : 0u;
    }
  }
  r.flipped = r.ones > 0 && r.ones < n_evals;
  r.majority_bit = 2 * static_cast<std::uint64_t>(r.ones) >= n_evals;
  return r;
}

std::uint32_t count_disagreements(const CellModel& cell, CellConfig config, const Environment& env,
                                  const ModelConfig& model, double skew_mV, bool expected, std::uint32_t n_evals,
                                  NoiseStream& rng) {
  if (n_evals == 0) return 0;
  const auto s = evaluate_session(cell, config, env, model, skew_mV, n_evals, rng);
  return expected ? n_evals - s.ones : s.ones;
}

double aging_acceleration(const AgingModel& aging, const Environment& stress, const Environment& nominal) {
  return std::exp(aging.temp_accel_per_C * (stress.temperature_C - nominal.temperature_C)) *
         std::exp(aging.vdd_accel_per_V * (stress.vdd_V - nominal.vdd_V));
}

ChipModel apply_aging(const ChipModel& chip, double hours, const Environment& stress_env, NoiseStream& rng) {
  if (!(hours >= 0.0)) throw Error(Errc::kInvalidArgument, "hours must be >= 0");
  validate(stress_env);
  ChipModel aged = chip;
  NoiseStream run = rng.split();
  if (hours == 0.0) return aged;

  const AgingModel& a = chip.model.aging;
  const double effective_h = hours * aging_acceleration(a, stress_env, chip.model.nominal);
  const double drift_sigma = a.sigma_drift_mV * std::sqrt(effective_h);
  const double trap_mean = a.trap_rate_per_h * effective_h;
  parallel_for(aged.cells.size(), [&](std::size_t i) {
    NoiseStream s = run.fork(i);
    CellModel& c = aged.cells[i];
    c.drift_orig += drift_sigma * s.normal();
    for (auto k = s.poisson(trap_mean); k > 0; --k) c.trap_orig += s.exponential(a.trap_amplitude_mV);
    c.drift_heal += drift_sigma * s.normal();
    for (auto k = s.poisson(trap_mean); k > 0; --k) c.trap_heal += s.exponential(a.trap_amplitude_mV);
  });
  return aged;
}

BitGrid ground_truth_unstable(const ChipModel& chip, CellConfig config, const BitGrid& golden,
                              std::span<const Environment> env_grid, double skew_mV, std::uint32_t n_evals,
                              NoiseStream& rng) {
  if (env_grid.empty()) throw Error(Errc::kInvalidArgument, "env_grid must be non-empty");
  if (golden.rows() != chip.rows || golden.cols() != chip.cols) {
    throw Error(Errc::kDimensionMismatch, "golden plane does not match chip");
  }
  NoiseStream run = rng.split();
  BitGrid unstable(chip.rows, chip.cols);
  for (std::size_t e = 0; e < env_grid.size(); ++e) {
    const Environment& env = env_grid[e];
    const NoiseStream env_stream = run.fork(e);
    parallel_for(chip.size(), [&](std::size_t i) {
      if (unstable[i]) return;
      NoiseStream s = env_stream.fork(cell_tag(i, config));
      if (count_disagreements(chip.cells[i], config, env, chip.model, skew_mV, golden[i], n_evals, s) > 0) {
        unstable.set(i, true);
      }
    });
  }
  return unstable;
}

}  // namespace aschpuf
