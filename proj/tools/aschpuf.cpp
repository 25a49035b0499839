// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Experiment driver and protocol endpoints.

#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "aschpuf/asch.hpp"
#include "aschpuf/error.hpp"
#include "aschpuf/experiments.hpp"
#include "aschpuf/keygen.hpp"
#include "aschpuf/model_io.hpp"
#include "aschpuf/protocol.hpp"

namespace {

using namespace aschpuf;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitVerification = 3;
constexpr int kExitCalibrationMiss = 4;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t chips = 10;
  std::uint32_t evals = 2000;
  std::vector<double> temps;
  std::vector<double> vdds;
  std::vector<double> skews;
  std::string out;
  std::string mode;
};

// Opens --out or falls back to stdout.
class CsvOut {
 public:
  explicit CsvOut(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error(Errc::kIo, "cannot write " + path);
    }
  }
  std::ostream& os() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

ExperimentConfig make_config(const CommonArgs& a, std::uint64_t& seed) {
  ExperimentConfig cfg;
  if (!a.config_path.empty()) cfg.model = load_model_config(a.config_path);
  if (a.seed) cfg.model.seed = *a.seed;
  if (a.chips == 0) throw Error(Errc::kConfig, "--chips must be >= 1");
  if (a.evals == 0) throw Error(Errc::kConfig, "--evals must be >= 1");
  cfg.chips = a.chips;
  cfg.evals = a.evals;
  seed = cfg.model.seed;
  return cfg;
}

void add_common(CLI::App* sub, CommonArgs& a, bool env_lists, bool skew_list) {
  sub->add_option("--config", a.config_path, "Model config file (key = value)");
  sub->add_option("--seed", a.seed, "Root seed; overrides the config seed");
  sub->add_option("--chips", a.chips, "Number of simulated chips")->capture_default_str();
  sub->add_option("--evals", a.evals, "Evaluations per env point")->capture_default_str();
  sub->add_option("--out", a.out, "CSV output path (default stdout)");
  if (env_lists) {
    sub->add_option("--temps", a.temps, "Temperature list in C, comma separated")->delimiter(',');
    sub->add_option("--vdds", a.vdds, "Supply list in V, comma separated")->delimiter(',');
  }
  if (skew_list) sub->add_option("--skews", a.skews, "Skew list in mV, comma separated")->delimiter(',');
}

int cmd_calibrate(const CommonArgs& a, bool fit, const std::string& fit_out) {
  std::uint64_t seed = 0;
  ExperimentConfig cfg = make_config(a, seed);
  if (fit) {
    cfg.model = fit_model(cfg, seed);
    const std::string text = format_model_config(cfg.model);
    if (fit_out.empty()) {
      std::cerr << text;
    } else {
      std::ofstream(fit_out) << text;
    }
  }
  const CalibrationReport r = calibrate(cfg, seed);
  const CalibrationTargets t;
  CsvOut out(a.out);
  auto row = [&](const char* metric, double v, double lo, double hi) {
    out.os() << metric << ',' << num(v) << ',' << num(lo) << ',' << num(hi) << ',' << (v >= lo && v <= hi ? 1 : 0)
             << '\n';
  };
  out.os() << "metric,value,target_lo,target_hi,pass\n";
  row("nominal_ber", r.nominal_ber, t.nominal_ber_lo, t.nominal_ber_hi);
  row("nominal_unstable_fraction", r.nominal_unstable, t.unstable_lo, t.unstable_hi);
  row("temperature_sweep_ber", r.temp_sweep_ber, t.temp_ber_lo, t.temp_ber_hi);
  row("vdd_sweep_ber", r.vdd_sweep_ber, t.vdd_ber_lo, t.vdd_ber_hi);
  return t.met(r) ? kExitOk : kExitCalibrationMiss;
}

std::vector<Environment> envs_or(const CommonArgs& a, std::vector<double> temps, std::vector<double> vdds) {
  return env_grid(a.temps.empty() ? temps : a.temps, a.vdds.empty() ? vdds : a.vdds);
}

int cmd_sweep_skew(const CommonArgs& a) {
  std::uint64_t seed = 0;
  const ExperimentConfig cfg = make_config(a, seed);
  if (!a.mode.empty() && a.mode != "asc" && a.mode != "s-asch" && a.mode != "d-asch") {
    throw Error(Errc::kConfig, "unknown mode " + a.mode);
  }
  const auto envs = envs_or(a, {kWorstCorner.temperature_C}, {kWorstCorner.vdd_V});
  const auto skews = a.skews.empty() ? default_skews() : a.skews;
  const bool dynamic = a.mode.empty() || a.mode == "d-asch";
  const auto rows = sweep_skew(cfg, seed, skews, envs, dynamic);
  CsvOut out(a.out);
  out.os() << "skew_mV,mode,masking_ratio,errors,bit_evals,ber,pessimistic_ber\n";
  for (const auto& r : rows) {
    if (!a.mode.empty() && r.mode != a.mode) continue;
    out.os() << num(r.skew_mV) << ',' << r.mode << ',' << num(r.masking_ratio) << ',' << r.errors << ','
             << r.bit_evals << ',' << num(r.ber) << ',' << num(r.pessimistic_ber) << '\n';
  }
  return kExitOk;
}

int cmd_zero_ber(const CommonArgs& a) {
  std::uint64_t seed = 0;
  const ExperimentConfig cfg = make_config(a, seed);
  const auto envs = envs_or(a, default_temperatures(), default_vdds());
  const auto skews = a.skews.empty() ? default_skews() : a.skews;
  const ZeroBerResult z = find_zero_ber_skew(cfg, seed, skews, envs);
  CsvOut out(a.out);
  out.os() << "found,skew_mV,s_asch_masking_ratio,asc_masking_ratio,verify_errors,verify_ber,pessimistic_ber\n";
  if (!z.found) {
    out.os() << "0,,,,,,\n";
    return kExitVerification;
  }
  const StaticKeyCheck k = check_static_keys(cfg, seed, z.skew_mV, envs);
  out.os() << "1," << num(z.skew_mV) << ',' << num(z.s_asch_ratio) << ',' << num(z.asc_ratio) << ',' << k.errors
           << ',' << num(k.ber) << ',' << num(k.pessimistic_ber) << '\n';
  return k.errors == 0 ? kExitOk : kExitVerification;
}

int cmd_sweep_env(const CommonArgs& a) {
  std::uint64_t seed = 0;
  const ExperimentConfig cfg = make_config(a, seed);
  const auto temps = a.temps.empty() ? default_temperatures() : a.temps;
  const auto vdds = a.vdds.empty() ? sweep_vdds() : a.vdds;
  const auto skews = a.skews.empty() ? std::vector<double>{2.0, 4.0, 6.0, 8.0} : a.skews;
  const auto rows = sweep_env(cfg, seed, temps, vdds, skews);
  CsvOut out(a.out);
  out.os() << "sweep,temperature_C,vdd_V,mode,skew_mV,masking_ratio,errors,bit_evals,ber\n";
  for (const auto& r : rows) {
    if (!a.mode.empty() && r.mode != a.mode && r.mode != "raw") continue;
    out.os() << r.sweep << ',' << num(r.env.temperature_C) << ',' << num(r.env.vdd_V) << ',' << r.mode << ','
             << num(r.skew_mV) << ',' << num(r.masking_ratio) << ',' << r.errors << ',' << r.bit_evals << ','
             << num(r.ber) << '\n';
  }
  return kExitOk;
}

int cmd_aging(const CommonArgs& a, std::vector<double> hours, std::vector<double> enroll_hours) {
  std::uint64_t seed = 0;
  const ExperimentConfig cfg = make_config(a, seed);
  if (hours.empty()) hours = default_aging_hours();
  const auto skews = a.skews.empty() ? default_skews() : a.skews;
  const Environment eval_env{a.vdds.empty() ? kWorstCorner.vdd_V : a.vdds.front(),
                             a.temps.empty() ? kWorstCorner.temperature_C : a.temps.front()};
  const auto rows = aging_experiment(cfg, seed, hours, enroll_hours, skews, kAgingStress, eval_env);
  CsvOut out(a.out);
  out.os() << "hours,series,found,skew_mV,masking_ratio\n";
  for (const auto& r : rows) {
    out.os() << num(r.hours) << ',' << r.series << ',' << (r.found ? 1 : 0) << ',' << num(r.skew_mV) << ','
             << num(r.masking_ratio) << '\n';
  }
  return kExitOk;
}

int cmd_serve(const std::string& socket_path, const std::string& db_path, std::size_t max_sessions) {
  ServerDb db = db_path.empty() ? ServerDb() : ServerDb(db_path);
  const int listener = listen_unix(socket_path);
  std::vector<std::thread> sessions;
  for (std::size_t n = 0; max_sessions == 0 || n < max_sessions; ++n) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) break;
    sessions.emplace_back([fd, &db] {
      try {
        serve_connection(fd, db);
      } catch (const std::exception& e) {
        std::cerr << "session: " << e.what() << '\n';
      }
      ::close(fd);
    });
  }
  for (auto& t : sessions) t.join();
  ::close(listener);
  ::unlink(socket_path.c_str());
  return kExitOk;
}

struct ClientArgs {
  std::string socket_path;
  bool loopback = false;
  bool tamper = false;
  double skew_mV = kFullRangeSkew_mV;
  std::size_t key_bits = 128;
};

int cmd_client(const CommonArgs& a, const ClientArgs& c) {
  std::uint64_t seed = 0;
  const ExperimentConfig cfg = make_config(a, seed);
  const std::string mode = a.mode.empty() ? "d-asch" : a.mode;
  if (mode != "s-asch" && mode != "d-asch") throw Error(Errc::kConfig, "client --mode must be s-asch or d-asch");
  if (!c.loopback && c.socket_path.empty()) throw Error(Errc::kConfig, "client needs --socket or --loopback");
  const auto envs = envs_or(a, {-45.0, 25.0, 125.0}, {0.7, 1.2, 1.4});

  ServerDb loop_db;
  std::thread server;
  int fd = -1;
  if (c.loopback) {
    int pair[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, pair) != 0) throw Error(Errc::kIo, "socketpair failed");
    fd = pair[0];
    server = std::thread([s = pair[1], &loop_db] {
      try {
        serve_connection(s, loop_db);
      } catch (const std::exception& e) {
        std::cerr << "server: " << e.what() << '\n';
      }
      ::close(s);
    });
  } else {
    fd = connect_unix(c.socket_path);
  }

  const auto chips = sample_population(cfg);
  const NoiseStream root = experiment_stream(seed, "client");
  FrameReader reader;
  CsvOut out(a.out);
  out.os() << "chip,mode,temperature_C,vdd_V,masking_ratio,session_bytes,verdict\n";
  std::size_t sessions = 0;
  std::size_t accepts = 0;
  for (std::size_t i = 0; i < chips.size(); ++i) {
    const ChipModel& chip = chips[i];
    const NoiseStream cs = root.fork(i);
    NoiseStream enroll_rng = cs.fork(1);
    std::optional<StabilizationMap> static_map;
    VerdictStatus enrolled;
    if (mode == "s-asch") {
      auto r = run_s_asch(chip, cfg.model.nominal, c.skew_mV, cfg.asch, enroll_rng);
      static_map = r.map;
      enrolled = request(fd, reader, EnrollStaticMsg{make_static_record(chip.chip_id, r.key.bits, r.map)});
    } else {
      const GoldenPlanes g = collect_golden(chip, cfg.model.nominal, cfg.asch.golden_averages, enroll_rng);
      enrolled = request(fd, reader, EnrollDynamicMsg{make_dynamic_record(chip.chip_id, g.orig, g.healed)});
    }
    if (enrolled != VerdictStatus::kAccept) {
      throw Error(Errc::kProtocol, "enrollment of " + chip.chip_id + " failed: " + std::string(to_string(enrolled)));
    }
    for (std::size_t e = 0; e < envs.size(); ++e) {
      NoiseStream field = cs.fork(2).fork(e);
      StabilizationMap map;
      Key key;
      std::size_t bytes = 0;
      if (mode == "s-asch") {
        map = *static_map;
        key = generate_key(chip, map, envs[e], c.key_bits, field);
      } else {
        auto r = run_d_asch_powerup(chip, envs[e], c.skew_mV, cfg.asch, field, c.key_bits);
        map = r.map;
        key = r.key;
        bytes = session_overhead(map, c.key_bits);
        if (request(fd, reader, SessionMapMsg{map}) != VerdictStatus::kAccept) {
          throw Error(Errc::kProtocol, "session map rejected");
        }
      }
      if (c.tamper) key.bits[0] ^= 1u;
      const VerdictStatus v = request(fd, reader, KeyProofMsg{chip.chip_id, key.bits});
      ++sessions;
      accepts += v == VerdictStatus::kAccept ? 1 : 0;
      out.os() << chip.chip_id << ',' << mode << ',' << num(envs[e].temperature_C) << ',' << num(envs[e].vdd_V) << ','
               << num(map.masking_ratio()) << ',' << bytes << ',' << to_string(v) << '\n';
    }
  }
  ::shutdown(fd, SHUT_WR);
  if (server.joinable()) server.join();
  ::close(fd);
  std::cerr << accepts << '/' << sessions << " sessions accepted\n";
  return accepts == sessions ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ASCH-PUF behavioral simulator"};
  app.require_subcommand(1);

  CommonArgs common;
  bool fit = false;
  std::string fit_out;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Report raw BER statistics against calibration targets");
  add_common(calibrate_cmd, common, false, false);
  calibrate_cmd->add_flag("--fit", fit, "Grid-search noise and coefficient sigmas before reporting");
  calibrate_cmd->add_option("--fit-out", fit_out, "Write the fitted config here (default stderr)");

  auto* skew_cmd = app.add_subcommand("sweep-skew", "Masking ratio and BER versus skew");
  add_common(skew_cmd, common, true, true);
  skew_cmd->add_option("--mode", common.mode, "Only emit rows of this mode")
      ->check(CLI::IsMember({"asc", "s-asch", "d-asch"}));

  auto* zero_cmd = app.add_subcommand("zero-ber", "Smallest zero-error S-ASCH skew, verified with fresh noise");
  add_common(zero_cmd, common, true, true);

  auto* env_cmd = app.add_subcommand("sweep-env", "BER versus temperature and supply");
  add_common(env_cmd, common, true, true);
  env_cmd->add_option("--mode", common.mode, "Only emit raw rows and rows of this mode")
      ->check(CLI::IsMember({"s-asch", "d-asch"}));

  std::vector<double> hours;
  std::vector<double> enroll_hours{0, 24, 48};
  auto* aging_cmd = app.add_subcommand("aging", "Zero-error masking ratio versus stress hours");
  add_common(aging_cmd, common, true, true);
  aging_cmd->add_option("--hours", hours, "Time points in hours")->delimiter(',');
  aging_cmd->add_option("--enroll-hours", enroll_hours, "S-ASCH enrollment time points")->delimiter(',');

  std::string socket_path;
  std::string db_path;
  std::size_t max_sessions = 0;
  auto* serve_cmd = app.add_subcommand("serve", "Run the verification server on a Unix socket");
  serve_cmd->add_option("--socket", socket_path, "Socket path")->required();
  serve_cmd->add_option("--db", db_path, "Enrollment database file");
  serve_cmd->add_option("--max-sessions", max_sessions, "Exit after this many connections (0 = never)");

  ClientArgs client;
  auto* client_cmd = app.add_subcommand("client", "Enroll chips and verify keys against a server");
  add_common(client_cmd, common, true, false);
  client_cmd->add_option("--mode", common.mode, "Stabilization mode")->check(CLI::IsMember({"s-asch", "d-asch", "asc"}));
  client_cmd->add_option("--socket", client.socket_path, "Server socket path");
  client_cmd->add_flag("--loopback", client.loopback, "Run an in-process server over a socket pair");
  client_cmd->add_flag("--tamper", client.tamper, "Flip one bit of every key proof");
  client_cmd->add_option("--skew", client.skew_mV, "Detection skew in mV")->capture_default_str();
  client_cmd->add_option("--key-bits", client.key_bits, "Key length")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*calibrate_cmd) return cmd_calibrate(common, fit, fit_out);
    if (*skew_cmd) return cmd_sweep_skew(common);
    if (*zero_cmd) return cmd_zero_ber(common);
    if (*env_cmd) return cmd_sweep_env(common);
    if (*aging_cmd) return cmd_aging(common, hours, enroll_hours);
    if (*serve_cmd) return cmd_serve(socket_path, db_path, max_sessions);
    if (*client_cmd) return cmd_client(common, client);
  } catch (const Error& e) {
    std::cerr << "aschpuf: " << e.what() << '\n';
    return e.code() == Errc::kConfig || e.code() == Errc::kInvalidArgument ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "aschpuf: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
