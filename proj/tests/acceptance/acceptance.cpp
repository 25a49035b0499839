// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Runs the acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is the number of failed criteria.

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "../support/message_gen.hpp"
#include "aschpuf/asch.hpp"
#include "aschpuf/error.hpp"
#include "aschpuf/experiments.hpp"
#include "aschpuf/metrics.hpp"
#include "aschpuf/protocol.hpp"

using namespace aschpuf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

bool within_one_ulp(double a, double b) { return a == b || std::nextafter(b, a) == a; }

ExperimentConfig shipped() { return ExperimentConfig{}; }

std::vector<Environment> full_grid() {
  const auto temps = default_temperatures();
  const auto vdds = default_vdds();
  return env_grid(temps, vdds);
}

// 1 - (1 - p)^n as an alternating binomial sum in long double.
double ker_oracle(double p, unsigned n) {
  long double sum = 0.0L, term = 1.0L;
  for (unsigned k = 1; k <= n; ++k) {
    term *= static_cast<long double>(n - k + 1) / k * p;
    sum += (k % 2 ? term : -term);
  }
  return static_cast<double>(sum);
}

Outcome equation_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const double pes = pessimistic_ber(10 * 4096, 0.10, 20000);
  const double closed = 1.0 / (40960.0 * 0.9 * 20000.0);
  const bool pes_ok = within_one_ulp(pes, closed) && std::fabs(pes - 1.36e-9) < 0.005e-9;

  const double k = ker(1e-8, 128);
  const double k_ref = ker_oracle(1e-8, 128);
  const bool ker_ok = within_one_ulp(k, k_ref);

  NoiseStream s(0xbe5);
  bool ber_ok = true;
  for (int trial = 0; trial < 50 && ber_ok; ++trial) {
    std::vector<std::vector<std::uint8_t>> evals(64, std::vector<std::uint8_t>(64));
    std::vector<std::uint8_t> golden(64), mask(64);
    for (std::size_t i = 0; i < 64; ++i) {
      golden[i] = s.next_u64() & 1;
      mask[i] = s.uniform() < 0.2;
    }
    const double p_err = s.uniform() * 0.1;
    for (auto& row : evals) {
      for (std::size_t i = 0; i < 64; ++i) row[i] = golden[i] ^ (s.uniform() < p_err ? 1 : 0);
    }
    std::uint64_t errors = 0, unmasked = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      if (mask[i]) continue;
      ++unmasked;
      for (std::size_t e = 0; e < 64; ++e) errors += evals[e][i] != golden[i];
    }
    const auto r = ber(evals, golden, mask);
    ber_ok = r.n_errors == errors && r.ber == static_cast<double>(errors) / (static_cast<double>(unmasked) * 64.0);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {pes_ok && ker_ok && ber_ok && secs < 1.0,
          fmt("pessimistic %.6e (closed %.6e) ker %.10e (oracle %.10e) eq1 %s, %.3fs", pes, closed, k, k_ref,
              ber_ok ? "exact" : "MISMATCH", secs)};
}

Outcome calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = shipped();
  const auto r = calibrate(cfg, cfg.model.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {CalibrationTargets{}.met(r) && secs < 300.0,
          fmt("nominal BER %.3e, unstable %.2f%%, temp-sweep BER %.3e, vdd-sweep BER %.3e, %.1fs", r.nominal_ber,
              100.0 * r.nominal_unstable, r.temp_sweep_ber, r.vdd_sweep_ber, secs)};
}

Outcome detection() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig m;
  std::vector<Environment> grid;
  for (double t : oracle_temperatures()) grid.push_back({m.nominal.vdd_V, t});
  std::size_t cells = 0, dark = 0, oracle = 0, both = 0;
  for (std::size_t c = 0; c < 25; ++c) {
    const ChipModel chip = sample_chip(m, chip_name(c) + "-det");
    const NoiseStream root = experiment_stream(m.seed, "detection").fork(c);
    NoiseStream g = root.fork(1), o = root.fork(2), s = root.fork(3);
    const auto golden = golden_plane(chip, CellConfig::kOriginal, m.nominal, kDefaultGoldenAverages, g);
    const auto truth = ground_truth_unstable(chip, CellConfig::kOriginal, golden.bits, grid, 0.0, 200, o);
    const auto check = self_check(chip, CellConfig::kOriginal, m.nominal, kDetectionSkew_mV, AschOptions{}, s);
    cells += chip.size();
    dark += check.dark.count();
    oracle += truth.count();
    both += check.dark.intersection_count(truth);
  }
  const double rate = static_cast<double>(both) / oracle;
  const double acc = static_cast<double>(both) / dark;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {cells >= 100000 && both == oracle && acc >= 0.55 && acc <= 0.80 && secs < 300.0,
          fmt("%zu cells, oracle %zu, dark %zu, rate %.5f, accuracy %.4f, %.1fs", cells, oracle, dark, rate, acc,
              secs)};
}

std::vector<ZeroBerResult> zero_results;

Outcome healing_benefit() {
  const ExperimentConfig cfg = shipped();
  const auto grid = full_grid();
  const auto skews = default_skews();
  bool ok = true;
  std::string detail;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto z = find_zero_ber_skew(cfg, cfg.model.seed + k, skews, grid);
    zero_results.push_back(z);
    const double reduction = z.found ? (z.asc_ratio - z.s_asch_ratio) / z.asc_ratio : 0.0;
    ok = ok && z.found && z.s_asch_ratio < z.asc_ratio && reduction >= 0.25;
    detail += fmt("%s[%.2f mV S %.2f%% ASC %.2f%% -%.0f%%]", k ? " " : "", z.skew_mV, 100 * z.s_asch_ratio,
                  100 * z.asc_ratio, 100 * reduction);
  }
  return {ok, detail};
}

Outcome zero_ber_end_to_end() {
  if (zero_results.empty() || !zero_results[0].found) return {false, "no zero-error skew available"};
  const ExperimentConfig cfg = shipped();
  const auto grid = full_grid();
  const auto r = check_static_keys(cfg, cfg.model.seed, zero_results[0].skew_mV, grid);
  const double expected = pessimistic_ber(static_cast<double>(r.n_cells), r.masking_ratio,
                                          static_cast<double>(r.n_evals));
  const bool ok = r.n_cells == cfg.chips * cfg.rows * cfg.cols && r.n_evals == cfg.evals * grid.size() &&
                  r.errors == 0 && r.pessimistic_ber == expected;
  return {ok, fmt("skew %.2f mV, %llu cells x %llu evals, %llu errors, masking %.2f%%, pessimistic BER %.3e",
                  zero_results[0].skew_mV, static_cast<unsigned long long>(r.n_cells),
                  static_cast<unsigned long long>(r.n_evals), static_cast<unsigned long long>(r.errors),
                  100 * r.masking_ratio, r.pessimistic_ber)};
}

Outcome mirror_property() {
  const ExperimentConfig cfg = shipped();
  const auto chips = sample_population(cfg);
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) return {false, "socketpair failed"};
  ServerDb db;
  std::thread server([&] { serve_connection(fds[1], db); });
  FrameReader reader;
  std::size_t accepted = 0, mirrored = 0, sessions = 0;
  double max_ratio = 0.0;
  NoiseStream root = experiment_stream(cfg.model.seed, "mirror");
  try {
    for (std::size_t c = 0; c < chips.size(); ++c) {
      const ChipModel& chip = chips[c];
      NoiseStream g = root.fork(2 * c);
      const GoldenPlanes golden = collect_golden(chip, chip.model.nominal, kDefaultGoldenAverages, g);
      const auto record = make_dynamic_record(chip.chip_id, golden.orig, golden.healed);
      if (request(fds[0], reader, EnrollDynamicMsg{record}) != VerdictStatus::kAccept) break;
      NoiseStream s = root.fork(2 * c + 1);
      for (int t = 0; t < 20; ++t) {
        const Environment env{0.7 + 0.7 * s.uniform(), -45.0 + 170.0 * s.uniform()};
        const auto d = run_d_asch_powerup(chip, env, kFullRangeSkew_mV, cfg.asch, s);
        ++sessions;
        max_ratio = std::max(max_ratio, d.map.masking_ratio());
        mirrored += server_expected_key(record, d.map, d.key.size()).same_bits(d.key);
        if (request(fds[0], reader, SessionMapMsg{d.map}) != VerdictStatus::kAccept) continue;
        accepted += request(fds[0], reader, KeyProofMsg{chip.chip_id, d.key.bits}) == VerdictStatus::kAccept;
      }
    }
  } catch (const Error& e) {
    ::shutdown(fds[0], SHUT_RDWR);
    server.join();
    ::close(fds[0]);
    ::close(fds[1]);
    return {false, std::string("error: ") + e.what()};
  }
  ::shutdown(fds[0], SHUT_WR);
  server.join();
  ::close(fds[0]);
  ::close(fds[1]);
  return {sessions == 200 && accepted == 200 && mirrored == 200,
          fmt("%zu sessions, %zu accepted, %zu bit-exact mirrors, max masking %.2f%%", sessions, accepted, mirrored,
              100 * max_ratio)};
}

Outcome timing() {
  const ModelConfig m;
  const ChipModel chip = sample_chip(m, "timing", 32, 128);
  const AschOptions opts;
  NoiseStream s = experiment_stream(m.seed, "timing");
  std::uint32_t max_lock = 0, max_check = 0;
  double max_wall = 0.0;
  bool exact = true;
  for (int t = 0; t < 200; ++t) {
    const auto r = run_s_asch(chip, kWorstCorner, kFullRangeSkew_mV, opts, s);
    const auto single = asc_only(chip, kWorstCorner, kFullRangeSkew_mV, opts, s).timing;
    max_lock = std::max(max_lock, single.lock_cycles);
    max_check = std::max(max_check, single.total_cycles);
    max_wall = std::max(max_wall, r.timing.wall_time_us);
    exact = exact && single.skew_detect_cycles == 2 * 32 && single.total_cycles == single.lock_cycles + 64 &&
            single.wall_time_us == single.total_cycles * 20.0 &&
            r.timing.wall_time_us == (r.timing.lock_cycles + 128) * 20.0;
  }
  const bool bound_arith = (24 + 64) * 20 == 1760 && 2 * 1760 < 4000;
  return {exact && bound_arith && max_lock <= 24 && max_check <= 88 && max_wall < 4000.0,
          fmt("max lock %u cycles, max self-check %u cycles, max dual-round wall %.0f us", max_lock, max_check,
              max_wall)};
}

Outcome lock_residual() {
  const ModelConfig m;
  const Comparator ideal{0.0, 5};
  NoiseStream s = experiment_stream(m.seed, "lock");
  double worst = 0.0;
  int near = 0;
  for (int t = 0; t < 1000; ++t) {
    DacModel dac;
    dac.v2_offset_mV = m.imbalance_range_mV * (2.0 * s.uniform() - 1.0);
    const LockState st = lock(dac, ideal, s);
    worst = std::max(worst, std::fabs(st.residual_mV));
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c <= dac.max_code(); ++c) {
      if (std::fabs(dac.v1(c) - dac.v2()) < std::fabs(dac.v1(best) - dac.v2())) best = c;
    }
    near += std::abs(static_cast<long>(st.code(dac)) - static_cast<long>(best)) <= 1;
  }
  return {worst <= 0.13 && near >= 990, fmt("worst |residual| %.4f mV, %d/1000 within 1 code of the scan optimum",
                                            worst, near)};
}

Outcome uniqueness() {
  const ExperimentConfig cfg = shipped();
  const auto chips = sample_population(cfg);
  const NoiseStream root = experiment_stream(cfg.model.seed, "uniqueness");
  std::vector<BitVector> orig_keys, healed_keys;
  std::vector<std::vector<BitVector>> regen(chips.size());
  BitVector pooled;
  for (std::size_t c = 0; c < chips.size(); ++c) {
    NoiseStream g = root.fork(3 * c);
    const GoldenPlanes golden = collect_golden(chips[c], cfg.model.nominal, kDefaultGoldenAverages, g);
    const auto o = golden.orig.bits.data();
    const auto h = golden.healed.bits.data();
    orig_keys.emplace_back(o.begin(), o.end());
    healed_keys.emplace_back(h.begin(), h.end());
    pooled.insert(pooled.end(), o.begin(), o.end());

    NoiseStream f = root.fork(3 * c + 1);
    const auto flow = run_s_asch(chips[c], cfg.model.nominal, kFullRangeSkew_mV, cfg.asch, f, &golden);
    NoiseStream r = root.fork(3 * c + 2);
    for (int k = 0; k < 100; ++k) {
      regen[c].push_back(generate_key(chips[c], flow.map, cfg.model.nominal, flow.key.size(), r).bits);
    }
  }
  const double inter_o = inter_hd_mean(orig_keys);
  const double inter_h = inter_hd_mean(healed_keys);
  const double intra = intra_hd_mean(regen);
  const auto acf = autocorrelation(pooled, 100, kAcfZ90);
  const bool ok = inter_o >= 0.49 && inter_o <= 0.51 && inter_h >= 0.49 && inter_h <= 0.51 && intra == 0.0 &&
                  pooled.size() == 40960 && std::fabs(acf.bound - 0.0081) < 0.00005 && acf.within_bound >= 95;
  return {ok, fmt("inter HD %.4f / %.4f (healed), intra HD %.2g over 100 regenerations, ACF %zu/100 lags within %.5f",
                  inter_o, inter_h, intra, acf.within_bound, acf.bound)};
}

Outcome aging() {
  const ExperimentConfig cfg = shipped();
  const auto hours = default_aging_hours();
  const std::vector<double> enroll{0.0};
  const auto skews = default_skews();
  const auto rows = aging_experiment(cfg, cfg.model.seed, hours, enroll, skews, kAgingStress, kWorstCorner);
  std::vector<double> s, d;
  bool found = true;
  for (const auto& r : rows) {
    found = found && r.found;
    (r.series == "d-asch" ? d : s).push_back(r.masking_ratio);
  }
  if (s.size() != hours.size() || d.size() != hours.size()) return {false, "missing aging series"};
  const auto [dmin, dmax] = std::minmax_element(d.begin(), d.end());
  const bool monotone = std::is_sorted(s.begin(), s.end());
  const bool ok = found && *dmax - *dmin <= 0.04 && monotone && s.back() > d.back();
  std::string detail = fmt("D-ASCH %.2f..%.2f%% (span %.2f pt), S-ASCH@0h", 100 * *dmin, 100 * *dmax,
                           100 * (*dmax - *dmin));
  for (double v : s) detail += fmt(" %.2f", 100 * v);
  detail += monotone ? "% (non-decreasing)" : "% (NOT monotone)";
  return {ok, detail};
}

Outcome codec_fuzz() {
  NoiseStream s = experiment_stream(0xf022, "codec");
  std::size_t identical = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const Message m = testing::random_message(s);
    try {
      identical += decode_message(encode_message(m)) == m;
    } catch (const Error&) {
    }
  }
  // Every non-empty strict prefix must be rejected as truncated, both one-shot and streamed.
  std::size_t cuts = 0, rejected = 0;
  for (int i = 0; i < 300; ++i) {
    const Bytes b = encode_message(testing::random_message(s));
    for (std::size_t cut = 1; cut < b.size(); ++cut) {
      ++cuts;
      bool one_shot = false, streamed = false;
      try {
        decode_frame(std::span(b.data(), cut));
      } catch (const Error& e) {
        one_shot = e.code() == Errc::kTruncated;
      }
      FrameReader r;
      r.feed(std::span(b.data(), cut));
      try {
        streamed = !r.next().has_value();
        r.finish();
        streamed = false;
      } catch (const Error& e) {
        streamed = streamed && e.code() == Errc::kTruncated;
      }
      rejected += one_shot && streamed;
    }
  }
  // Random byte flips either fail to decode or decode to a message that re-encodes to the same bytes.
  std::size_t corrupt = 0, consistent = 0;
  for (int i = 0; i < 20000; ++i) {
    Bytes b = encode_message(testing::random_message(s));
    b[s.next_u64() % b.size()] ^= static_cast<std::uint8_t>(1u << (s.next_u64() % 8));
    ++corrupt;
    try {
      consistent += encode_message(decode_message(b)) == b;
    } catch (const Error&) {
      ++consistent;
    }
  }
  return {identical == n && rejected == cuts && consistent == corrupt,
          fmt("%zu/%zu round trips identical, %zu/%zu truncations rejected, %zu/%zu corruptions consistent",
              identical, n, rejected, cuts, consistent, corrupt)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"C1  equation oracles", equation_oracles},
      {"C2  calibration targets", calibration},
      {"C3  detection accuracy", detection},
      {"C4  healing benefit", healing_benefit},
      {"C5  zero-BER end to end", zero_ber_end_to_end},
      {"C6  D-ASCH mirror property", mirror_property},
      {"C7  timing model", timing},
      {"C8  lock residual", lock_residual},
      {"C9  uniqueness suite", uniqueness},
      {"C10 aging trends", aging},
      {"C11 protocol codec", codec_fuzz},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed;
}
