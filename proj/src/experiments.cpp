// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <tuple>
#include <utility>

#include "aschpuf/error.hpp"
#include "aschpuf/metrics.hpp"
#include "aschpuf/parallel.hpp"

namespace aschpuf {

namespace {

// Per-chip sub-stream tags.
constexpr std::uint64_t kGoldenTag = 1;
constexpr std::uint64_t kEnrollTag = 2;
constexpr std::uint64_t kScanTag = 3;
constexpr std::uint64_t kFieldTag = 4;
constexpr std::uint64_t kAgingTag = 5;
constexpr std::uint64_t kVerifyScanTag = 6;

std::vector<double> linspace_steps(double first, double last, double step) {
  std::vector<double> v;
  const auto n = static_cast<long>(std::llround((last - first) / step));
  for (long i = 0; i <= n; ++i) v.push_back(std::round((first + step * static_cast<double>(i)) * 1e6) / 1e6);
  return v;
}

std::uint32_t cell_errors(const ErrorScan& scan, const StabilizationMap& map, std::size_t e, std::size_t i) {
  if (map.mask[i]) return 0;
  return map.heal[i] ? scan.healed[e][i] : scan.orig[e][i];
}

std::uint64_t key_errors_at(const ErrorScan& scan, const StabilizationMap& map, std::size_t e) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < map.size(); ++i) total += cell_errors(scan, map, e, i);
  return total;
}

GoldenPlanes golden_for(const ChipModel& chip, const ExperimentConfig& cfg, NoiseStream rng) {
  return collect_golden(chip, chip.model.nominal, cfg.asch.golden_averages, rng);
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

std::vector<double> default_temperatures() { return {-45, -20, 0, 25, 50, 75, 100, 125}; }
std::vector<double> default_vdds() { return {0.7, 1.2, 1.4}; }
std::vector<double> sweep_vdds() { return linspace_steps(0.7, 1.4, 0.1); }
std::vector<double> default_skews() { return linspace_steps(0.25, 20.0, 0.25); }
std::vector<double> oracle_temperatures() { return {-40, -25, -10, 5, 25, 40, 55, 70, 85, 100, 115, 125}; }
std::vector<double> default_aging_hours() { return {0, 6, 12, 18, 24, 48, 72, 96}; }

std::vector<Environment> env_grid(std::span<const double> temps, std::span<const double> vdds) {
  std::vector<Environment> out;
  for (double t : temps) {
    for (double v : vdds) {
      Environment e{v, t};
      validate(e);
      out.push_back(e);
    }
  }
  if (out.empty()) throw Error(Errc::kInvalidArgument, "empty environment grid");
  return out;
}

std::string chip_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "chip-%02zu", index);
  return buf;
}

NoiseStream experiment_stream(std::uint64_t seed, std::string_view purpose) {
  return NoiseStream(derive_key(seed, hash_string(purpose)));
}

std::vector<ChipModel> sample_population(const ExperimentConfig& cfg) {
  if (cfg.chips == 0) throw Error(Errc::kInvalidArgument, "chips must be >= 1");
  if (cfg.evals == 0) throw Error(Errc::kInvalidArgument, "evals must be >= 1");
  std::vector<ChipModel> chips;
  chips.reserve(cfg.chips);
  for (std::size_t c = 0; c < cfg.chips; ++c) chips.push_back(sample_chip(cfg.model, chip_name(c), cfg.rows, cfg.cols));
  return chips;
}

ErrorScan scan_errors(const ChipModel& chip, const GoldenPlanes& golden, std::span<const Environment> envs,
                      std::uint32_t n_evals, NoiseStream& rng, bool with_healed) {
  if (n_evals == 0) throw Error(Errc::kInvalidArgument, "n_evals must be >= 1");
  const NoiseStream run = rng.split();
  ErrorScan scan;
  scan.n_evals = n_evals;
  scan.orig.assign(envs.size(), std::vector<std::uint32_t>(chip.size(), 0));
  if (with_healed) scan.healed.assign(envs.size(), std::vector<std::uint32_t>(chip.size(), 0));

  std::vector<std::uint64_t> keys(n_evals);
  for (std::size_t e = 0; e < envs.size(); ++e) {
    validate(envs[e]);
    NoiseStream es = run.fork(e);
    for (auto& k : keys) k = es.next_u64();
    parallel_for(chip.size(), [&](std::size_t i) {
      const CellModel& cell = chip.cells[i];
      for (int c = 0; c < (with_healed ? 2 : 1); ++c) {
        const auto config = static_cast<CellConfig>(c);
        const bool g = (config == CellConfig::kOriginal ? golden.orig.bits : golden.healed.bits)[i];
        const double m0 = static_margin(cell, config, envs[e], chip.model);
        const double bound = noise_bound(cell, config, chip.model);
        std::uint32_t errors = 0;
        if (m0 > bound) {
          errors = g ? 0 : n_evals;
        } else if (m0 < -bound) {
          errors = g ? n_evals : 0;
        } else {
          const std::uint64_t tag = cell_tag(i, config);
          for (std::uint32_t k = 0; k < n_evals; ++k) {
            NoiseStream s(derive_key(keys[k], tag));
            errors += evaluate_bit(cell, config, envs[e], chip.model, 0.0, s) != g ? 1u : 0u;
          }
        }
        (config == CellConfig::kOriginal ? scan.orig : scan.healed)[e][i] = errors;
      }
    });
  }
  return scan;
}

std::uint64_t key_errors(const ErrorScan& scan, const StabilizationMap& map) {
  if (scan.healed.size() != scan.orig.size() && map.heal.count() > 0) {
    throw Error(Errc::kInvalidArgument, "scan has no healed-config counts");
  }
  std::uint64_t total = 0;
  for (std::size_t e = 0; e < scan.orig.size(); ++e) total += key_errors_at(scan, map, e);
  return total;
}

std::uint64_t mask_errors(const ErrorScan& scan, const BitGrid& mask) {
  std::uint64_t total = 0;
  for (const auto& env_counts : scan.orig) {
    for (std::size_t i = 0; i < mask.size(); ++i) total += mask[i] ? 0 : env_counts[i];
  }
  return total;
}

bool CalibrationTargets::met(const CalibrationReport& r) const {
  return r.nominal_ber >= nominal_ber_lo && r.nominal_ber <= nominal_ber_hi && r.nominal_unstable >= unstable_lo &&
         r.nominal_unstable <= unstable_hi && r.temp_sweep_ber >= temp_ber_lo && r.temp_sweep_ber <= temp_ber_hi &&
         r.vdd_sweep_ber >= vdd_ber_lo && r.vdd_sweep_ber <= vdd_ber_hi;
}

CalibrationReport calibrate(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto chips = sample_population(cfg);
  const Environment nominal = cfg.model.nominal;
  std::vector<Environment> envs{nominal};
  const auto temps = default_temperatures();
  const auto vdds = sweep_vdds();
  for (double t : temps) envs.push_back({nominal.vdd_V, t});
  for (double v : vdds) envs.push_back({v, nominal.temperature_C});

  const NoiseStream root = experiment_stream(seed, "calibrate");
  std::vector<std::vector<std::uint64_t>> errors(chips.size(), std::vector<std::uint64_t>(envs.size(), 0));
  std::vector<std::uint64_t> unstable(chips.size(), 0);
  parallel_for(chips.size(), [&](std::size_t c) {
    const NoiseStream cs = root.fork(c);
    NoiseStream gs = cs.fork(kGoldenTag);
    GoldenPlanes golden;
    golden.orig = golden_plane(chips[c], CellConfig::kOriginal, nominal, cfg.asch.golden_averages, gs);
    NoiseStream ss = cs.fork(kScanTag);
    const ErrorScan scan = scan_errors(chips[c], golden, envs, cfg.evals, ss, false);
    for (std::size_t e = 0; e < envs.size(); ++e) {
      for (auto n : scan.orig[e]) errors[c][e] += n;
    }
    for (auto n : scan.orig[0]) unstable[c] += n ? 1u : 0u;
  });

  auto pooled = [&](std::size_t first, std::size_t count) {
    std::uint64_t total = 0;
    for (const auto& chip_errors : errors) {
      for (std::size_t e = first; e < first + count; ++e) total += chip_errors[e];
    }
    const double denom = static_cast<double>(chips.size()) * static_cast<double>(cfg.rows * cfg.cols) *
                         static_cast<double>(cfg.evals) * static_cast<double>(count);
    return static_cast<double>(total) / denom;
  };
  CalibrationReport r;
  r.nominal_ber = pooled(0, 1);
  std::uint64_t unstable_total = 0;
  for (auto u : unstable) unstable_total += u;
  r.nominal_unstable = static_cast<double>(unstable_total) / static_cast<double>(chips.size() * cfg.rows * cfg.cols);
  r.temp_sweep_ber = pooled(1, temps.size());
  r.vdd_sweep_ber = pooled(1 + temps.size(), vdds.size());
  return r;
}

ModelConfig fit_model(const ExperimentConfig& cfg, std::uint64_t seed) {
  const double center_nominal = 2.9e-3, center_unstable = 0.032, center_temp = 4.2e-2, center_vdd = 4e-3;
  auto score = [&](const CalibrationReport& r) {
    auto term = [](double v, double c) {
      const double l = std::log(std::max(v, 1e-12) / c);
      return l * l;
    };
    return term(r.nominal_ber, center_nominal) + term(r.nominal_unstable, center_unstable) +
           term(r.temp_sweep_ber, center_temp) + term(r.vdd_sweep_ber, center_vdd);
  };
  ModelConfig best = cfg.model;
  double best_score = std::numeric_limits<double>::infinity();
  for (double fn : {0.8, 0.9, 1.0, 1.1, 1.25}) {
    for (double ft : {0.8, 0.9, 1.0, 1.1, 1.25}) {
      for (double fv : {0.5, 1.0, 2.0}) {
        ExperimentConfig trial = cfg;
        trial.model.sigma_noise_mV = cfg.model.sigma_noise_mV * fn;
        trial.model.sigma_tempco_uV_per_C = cfg.model.sigma_tempco_uV_per_C * ft;
        trial.model.sigma_voltco_uV_per_V = cfg.model.sigma_voltco_uV_per_V * fv;
        const double s = score(calibrate(trial, seed));
        if (s < best_score) {
          best_score = s;
          best = trial.model;
        }
      }
    }
  }
  return best;
}

namespace {

// Golden planes and an error scan for every chip of a population.
struct PopulationScan {
  std::vector<ChipModel> chips;
  std::vector<GoldenPlanes> golden;
  std::vector<ErrorScan> scans;
  std::vector<NoiseStream> chip_streams;
};

PopulationScan scan_population(const ExperimentConfig& cfg, const NoiseStream& root,
                               std::span<const Environment> envs) {
  PopulationScan p;
  p.chips = sample_population(cfg);
  p.golden.resize(p.chips.size());
  p.scans.resize(p.chips.size());
  for (std::size_t c = 0; c < p.chips.size(); ++c) p.chip_streams.push_back(root.fork(c));
  parallel_for(p.chips.size(), [&](std::size_t c) {
    p.golden[c] = golden_for(p.chips[c], cfg, p.chip_streams[c].fork(kGoldenTag));
    NoiseStream ss = p.chip_streams[c].fork(kScanTag);
    p.scans[c] = scan_errors(p.chips[c], p.golden[c], envs, cfg.evals, ss);
  });
  return p;
}

}  // namespace

std::vector<SkewRow> sweep_skew(const ExperimentConfig& cfg, std::uint64_t seed, std::span<const double> skews,
                                std::span<const Environment> envs, bool include_dynamic) {
  if (skews.empty() || envs.empty()) throw Error(Errc::kInvalidArgument, "skew and env lists must be non-empty");
  const PopulationScan p = scan_population(cfg, experiment_stream(seed, "sweep-skew"), envs);
  const std::size_t n_chips = p.chips.size();
  const std::uint64_t cells = cfg.rows * cfg.cols;
  std::vector<SkewRow> rows;
  for (double skew : skews) {
    std::vector<std::uint64_t> s_err(n_chips), s_mask(n_chips), a_err(n_chips), a_mask(n_chips);
    std::vector<std::uint64_t> d_err(n_chips), d_mask(n_chips);
    parallel_for(n_chips, [&](std::size_t c) {
      const NoiseStream enroll = p.chip_streams[c].fork(kEnrollTag);
      NoiseStream s_rng = enroll;
      NoiseStream a_rng = enroll;
      const auto s = run_s_asch(p.chips[c], cfg.model.nominal, skew, cfg.asch, s_rng, &p.golden[c]);
      const auto a = asc_only(p.chips[c], cfg.model.nominal, skew, cfg.asch, a_rng);
      s_err[c] = key_errors(p.scans[c], s.map);
      s_mask[c] = s.map.mask.count();
      a_err[c] = mask_errors(p.scans[c], a.mask);
      a_mask[c] = a.mask.count();
      if (include_dynamic) {
        const NoiseStream field = p.chip_streams[c].fork(kFieldTag);
        for (std::size_t e = 0; e < envs.size(); ++e) {
          NoiseStream d_rng = field.fork(e);
          const auto d = run_d_asch_powerup(p.chips[c], envs[e], skew, cfg.asch, d_rng);
          d_err[c] += key_errors_at(p.scans[c], d.map, e);
          d_mask[c] += d.map.mask.count();
        }
      }
    });
    auto emit = [&](const char* mode, const std::vector<std::uint64_t>& err, const std::vector<std::uint64_t>& mask,
                    std::uint64_t mask_den, std::uint64_t env_factor) {
      SkewRow r;
      r.skew_mV = skew;
      r.mode = mode;
      std::uint64_t masked = 0;
      for (std::size_t c = 0; c < n_chips; ++c) {
        r.errors += err[c];
        masked += mask[c];
      }
      r.masking_ratio = ratio(masked, mask_den);
      const double unmasked_fraction = 1.0 - r.masking_ratio;
      const double bits = static_cast<double>(n_chips * cells) * unmasked_fraction;
      r.bit_evals = static_cast<std::uint64_t>(std::llround(bits * cfg.evals * static_cast<double>(env_factor)));
      r.ber = r.bit_evals ? static_cast<double>(r.errors) / static_cast<double>(r.bit_evals) : 0.0;
      if (r.errors == 0 && r.masking_ratio < 1.0) {
        r.pessimistic_ber = pessimistic_ber(static_cast<double>(n_chips * cells), r.masking_ratio,
                                            static_cast<double>(cfg.evals) * static_cast<double>(env_factor));
      }
      rows.push_back(r);
    };
    emit("asc", a_err, a_mask, n_chips * cells, envs.size());
    emit("s-asch", s_err, s_mask, n_chips * cells, envs.size());
    if (include_dynamic) emit("d-asch", d_err, d_mask, n_chips * cells * envs.size(), envs.size());
  }
  return rows;
}

ZeroBerResult find_zero_ber_skew(const ExperimentConfig& cfg, std::uint64_t seed, std::span<const double> skews,
                                 std::span<const Environment> envs) {
  const PopulationScan p = scan_population(cfg, experiment_stream(seed, "zero-ber"), envs);
  const std::size_t n_chips = p.chips.size();
  const double cells = static_cast<double>(n_chips * cfg.rows * cfg.cols);
  ZeroBerResult out;
  out.asc_ratio_zero_ber = -1.0;
  for (double skew : skews) {
    std::vector<std::uint64_t> s_err(n_chips), s_mask(n_chips), a_err(n_chips), a_mask(n_chips);
    parallel_for(n_chips, [&](std::size_t c) {
      const NoiseStream enroll = p.chip_streams[c].fork(kEnrollTag);
      NoiseStream a_rng = enroll;
      const auto a = asc_only(p.chips[c], cfg.model.nominal, skew, cfg.asch, a_rng);
      a_err[c] = mask_errors(p.scans[c], a.mask);
      a_mask[c] = a.mask.count();
      if (!out.found) {
        NoiseStream s_rng = enroll;
        const auto s = run_s_asch(p.chips[c], cfg.model.nominal, skew, cfg.asch, s_rng, &p.golden[c]);
        s_err[c] = key_errors(p.scans[c], s.map);
        s_mask[c] = s.map.mask.count();
      }
    });
    std::uint64_t se = 0, sm = 0, ae = 0, am = 0;
    for (std::size_t c = 0; c < n_chips; ++c) {
      se += s_err[c];
      sm += s_mask[c];
      ae += a_err[c];
      am += a_mask[c];
    }
    if (!out.found && se == 0) {
      out.found = true;
      out.skew_mV = skew;
      out.s_asch_ratio = static_cast<double>(sm) / cells;
      out.asc_ratio = static_cast<double>(am) / cells;
      out.asc_errors = ae;
    }
    if (out.found && ae == 0) {
      out.asc_ratio_zero_ber = static_cast<double>(am) / cells;
      break;
    }
  }
  return out;
}

StaticKeyCheck check_static_keys(const ExperimentConfig& cfg, std::uint64_t seed, double skew_mV,
                                 std::span<const Environment> envs) {
  if (envs.empty()) throw Error(Errc::kInvalidArgument, "empty environment list");
  const NoiseStream root = experiment_stream(seed, "zero-ber");
  const auto chips = sample_population(cfg);
  std::vector<std::uint64_t> errors(chips.size()), masked(chips.size());
  parallel_for(chips.size(), [&](std::size_t c) {
    const NoiseStream cs = root.fork(c);
    const GoldenPlanes golden = golden_for(chips[c], cfg, cs.fork(kGoldenTag));
    NoiseStream enroll = cs.fork(kEnrollTag);
    const auto s = run_s_asch(chips[c], cfg.model.nominal, skew_mV, cfg.asch, enroll, &golden);
    NoiseStream scan_rng = cs.fork(kVerifyScanTag);
    errors[c] = key_errors(scan_errors(chips[c], golden, envs, cfg.evals, scan_rng), s.map);
    masked[c] = s.map.mask.count();
  });
  StaticKeyCheck out;
  out.n_cells = chips.size() * cfg.rows * cfg.cols;
  out.n_evals = static_cast<std::uint64_t>(cfg.evals) * envs.size();
  std::uint64_t m = 0;
  for (std::size_t c = 0; c < chips.size(); ++c) {
    out.errors += errors[c];
    m += masked[c];
  }
  out.masking_ratio = ratio(m, out.n_cells);
  out.ber = static_cast<double>(out.errors) /
            (static_cast<double>(out.n_cells - m) * static_cast<double>(out.n_evals));
  if (out.errors == 0) {
    out.pessimistic_ber =
        pessimistic_ber(static_cast<double>(out.n_cells), out.masking_ratio, static_cast<double>(out.n_evals));
  }
  return out;
}

std::vector<EnvRow> sweep_env(const ExperimentConfig& cfg, std::uint64_t seed, std::span<const double> temps,
                              std::span<const double> vdds, std::span<const double> skews) {
  std::vector<Environment> envs;
  std::vector<std::string> labels;
  for (double t : temps) {
    envs.push_back({cfg.model.nominal.vdd_V, t});
    labels.emplace_back("temperature");
  }
  for (double v : vdds) {
    envs.push_back({v, cfg.model.nominal.temperature_C});
    labels.emplace_back("vdd");
  }
  if (envs.empty()) throw Error(Errc::kInvalidArgument, "empty environment sweep");
  for (const auto& e : envs) validate(e);
  const PopulationScan p = scan_population(cfg, experiment_stream(seed, "sweep-env"), envs);
  const std::size_t n_chips = p.chips.size();
  const std::uint64_t cells = cfg.rows * cfg.cols;

  // [skew][chip] static maps enrolled at nominal.
  std::vector<std::vector<StabilizationMap>> static_maps(skews.size(), std::vector<StabilizationMap>(n_chips));
  for (std::size_t k = 0; k < skews.size(); ++k) {
    parallel_for(n_chips, [&](std::size_t c) {
      NoiseStream rng = p.chip_streams[c].fork(kEnrollTag);
      static_maps[k][c] = run_s_asch(p.chips[c], cfg.model.nominal, skews[k], cfg.asch, rng, &p.golden[c]).map;
    });
  }

  std::vector<EnvRow> rows;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    EnvRow raw{labels[e], envs[e], "raw", 0.0, 0.0, 0, n_chips * cells * cfg.evals, 0.0};
    for (std::size_t c = 0; c < n_chips; ++c) {
      for (auto n : p.scans[c].orig[e]) raw.errors += n;
    }
    raw.ber = ratio(raw.errors, raw.bit_evals);
    rows.push_back(raw);
    for (std::size_t k = 0; k < skews.size(); ++k) {
      EnvRow s{labels[e], envs[e], "s-asch", skews[k], 0.0, 0, 0, 0.0};
      EnvRow d{labels[e], envs[e], "d-asch", skews[k], 0.0, 0, 0, 0.0};
      std::vector<std::uint64_t> d_err(n_chips), d_mask(n_chips);
      parallel_for(n_chips, [&](std::size_t c) {
        NoiseStream rng = p.chip_streams[c].fork(kFieldTag).fork(e);
        const auto dm = run_d_asch_powerup(p.chips[c], envs[e], skews[k], cfg.asch, rng).map;
        d_err[c] = key_errors_at(p.scans[c], dm, e);
        d_mask[c] = dm.mask.count();
      });
      std::uint64_t s_mask = 0, dm_total = 0;
      for (std::size_t c = 0; c < n_chips; ++c) {
        s.errors += key_errors_at(p.scans[c], static_maps[k][c], e);
        s_mask += static_maps[k][c].mask.count();
        d.errors += d_err[c];
        dm_total += d_mask[c];
      }
      s.masking_ratio = ratio(s_mask, n_chips * cells);
      s.bit_evals = (n_chips * cells - s_mask) * cfg.evals;
      s.ber = ratio(s.errors, s.bit_evals);
      d.masking_ratio = ratio(dm_total, n_chips * cells);
      d.bit_evals = (n_chips * cells - dm_total) * cfg.evals;
      d.ber = ratio(d.errors, d.bit_evals);
      rows.push_back(s);
      rows.push_back(d);
    }
  }
  return rows;
}

std::vector<AgingRow> aging_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                       std::span<const double> hours, std::span<const double> enroll_hours,
                                       std::span<const double> skews, const Environment& stress,
                                       const Environment& eval_env) {
  if (hours.empty() || skews.empty()) throw Error(Errc::kInvalidArgument, "hours and skews must be non-empty");
  if (!std::is_sorted(hours.begin(), hours.end()) || hours.front() < 0.0) {
    throw Error(Errc::kInvalidArgument, "hours must be ascending and >= 0");
  }
  for (double h : enroll_hours) {
    if (std::find(hours.begin(), hours.end(), h) == hours.end()) {
      throw Error(Errc::kInvalidArgument, "enrollment hour " + std::to_string(h) + " is not a time point");
    }
  }
  validate(stress);
  validate(eval_env);
  const NoiseStream root = experiment_stream(seed, "aging");
  std::vector<ChipModel> chips = sample_population(cfg);
  const std::size_t n_chips = chips.size();
  const double cells = static_cast<double>(n_chips * cfg.rows * cfg.cols);
  const std::span<const Environment> eval_envs(&eval_env, 1);
  const bool hour0_enrolled = std::find(enroll_hours.begin(), enroll_hours.end(), 0.0) != enroll_hours.end();

  struct Enrollment {
    double hour;
    std::vector<GoldenPlanes> golden;                  // [chip]
    std::vector<std::vector<StabilizationMap>> maps;  // [chip][skew]
  };
  std::vector<Enrollment> enrolled;
  std::vector<GoldenPlanes> server_golden(n_chips);  // hour-0 planes, the D-ASCH reference
  std::vector<AgingRow> rows;
  double prev = 0.0;

  // Smallest skew with zero pooled errors; errors_for(c, k) gives chip c's errors at skews[k].
  auto zero_search = [&](double h, const std::string& series, auto&& errors_and_mask) {
    AgingRow row{h, series, false, 0.0, 0.0};
    for (std::size_t k = 0; k < skews.size(); ++k) {
      std::vector<std::uint64_t> err(n_chips), mask(n_chips);
      parallel_for(n_chips, [&](std::size_t c) { std::tie(err[c], mask[c]) = errors_and_mask(c, k); });
      std::uint64_t e = 0, m = 0;
      for (std::size_t c = 0; c < n_chips; ++c) {
        e += err[c];
        m += mask[c];
      }
      if (e == 0) {
        row.found = true;
        row.skew_mV = skews[k];
        row.masking_ratio = static_cast<double>(m) / cells;
        break;
      }
    }
    rows.push_back(row);
  };

  for (std::size_t t = 0; t < hours.size(); ++t) {
    const double h = hours[t];
    parallel_for(n_chips, [&](std::size_t c) {
      NoiseStream rng = root.fork(c).fork(kAgingTag).fork(t);
      chips[c] = apply_aging(chips[c], h - prev, stress, rng);
    });
    prev = h;
    if (t == 0) {
      parallel_for(n_chips, [&](std::size_t c) {
        server_golden[c] = golden_for(chips[c], cfg, root.fork(c).fork(kGoldenTag));
      });
    }
    if (std::find(enroll_hours.begin(), enroll_hours.end(), h) != enroll_hours.end()) {
      Enrollment en{h, std::vector<GoldenPlanes>(n_chips), std::vector<std::vector<StabilizationMap>>(n_chips)};
      parallel_for(n_chips, [&](std::size_t c) {
        en.golden[c] = t == 0 ? server_golden[c] : golden_for(chips[c], cfg, root.fork(c).fork(kGoldenTag).fork(t));
        const NoiseStream enroll = root.fork(c).fork(kEnrollTag).fork(t);
        for (double skew : skews) {
          NoiseStream rng = enroll;
          en.maps[c].push_back(run_s_asch(chips[c], cfg.model.nominal, skew, cfg.asch, rng, &en.golden[c]).map);
        }
      });
      enrolled.push_back(std::move(en));
    }

    // Common evaluation noise across time points.
    std::vector<ErrorScan> server_scans(n_chips);
    parallel_for(n_chips, [&](std::size_t c) {
      NoiseStream rng = root.fork(c).fork(kScanTag);
      server_scans[c] = scan_errors(chips[c], server_golden[c], eval_envs, cfg.evals, rng);
    });
    for (const Enrollment& en : enrolled) {
      std::vector<ErrorScan> own;
      const std::vector<ErrorScan>* scans = &server_scans;
      if (en.hour != 0.0 || !hour0_enrolled) {
        own.resize(n_chips);
        parallel_for(n_chips, [&](std::size_t c) {
          NoiseStream rng = root.fork(c).fork(kScanTag);
          own[c] = scan_errors(chips[c], en.golden[c], eval_envs, cfg.evals, rng);
        });
        scans = &own;
      }
      char label[32];
      std::snprintf(label, sizeof(label), "s-asch@%g", en.hour);
      zero_search(h, label, [&](std::size_t c, std::size_t k) {
        const auto& map = en.maps[c][k];
        return std::pair<std::uint64_t, std::uint64_t>{key_errors(( *scans)[c], map), map.mask.count()};
      });
    }
    zero_search(h, "d-asch", [&](std::size_t c, std::size_t k) {
      NoiseStream rng = root.fork(c).fork(kFieldTag);
      const auto d = run_d_asch_powerup(chips[c], eval_env, skews[k], cfg.asch, rng);
      return std::pair<std::uint64_t, std::uint64_t>{key_errors(server_scans[c], d.map), d.map.mask.count()};
    });
  }
  return rows;
}

}  // namespace aschpuf
