// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/model_io.hpp"

#include <charconv>
#include <cstdio>
#include <limits>
#include <string>
#include <system_error>

#include "aschpuf/error.hpp"

namespace aschpuf {

namespace {

constexpr std::string_view kChipMagic = "ASCHPUF1";

struct DoubleField {
  std::string_view key;
  double ModelConfig::*member;
};

struct AgingField {
  std::string_view key;
  double AgingModel::*member;
};

constexpr DoubleField kDoubleFields[] = {
    {"sigma_process", &ModelConfig::sigma_process_mV},
    {"sigma_noise", &ModelConfig::sigma_noise_mV},
    {"sigma_tempco", &ModelConfig::sigma_tempco_uV_per_C},
    {"tempco_spread", &ModelConfig::tempco_spread},
    {"sigma_voltco", &ModelConfig::sigma_voltco_uV_per_V},
    {"heal_correlation", &ModelConfig::heal_correlation},
    {"heal_bias", &ModelConfig::heal_bias_mV},
    {"imbalance_range", &ModelConfig::imbalance_range_mV},
};

constexpr AgingField kAgingFields[] = {
    {"aging.sigma_drift", &AgingModel::sigma_drift_mV},
    {"aging.temp_accel", &AgingModel::temp_accel_per_C},
    {"aging.vdd_accel", &AgingModel::vdd_accel_per_V},
    {"aging.trap_rate", &AgingModel::trap_rate_per_h},
    {"aging.trap_amplitude", &AgingModel::trap_amplitude_mV},
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view value, std::string_view key, std::size_t line) {
  T out{};
  const char* end = value.data() + value.size();
  std::from_chars_result r;
  if constexpr (std::is_integral_v<T>) {
    int base = 10;
    std::string_view digits = value;
    if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
      base = 16;
      digits.remove_prefix(2);
    }
    r = std::from_chars(digits.data(), end, out, base);
  } else {
    r = std::from_chars(value.data(), end, out);
  }
  if (value.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw Error(Errc::kConfig, "line " + std::to_string(line) + ": bad value for " + std::string(key) + ": '" +
                                   std::string(value) + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));

    bool known = false;
    for (const auto& f : kDoubleFields) {
      if (f.key == key) {
        cfg.*f.member = parse_number<double>(value, key, line_no);
        known = true;
      }
    }
    for (const auto& f : kAgingFields) {
      if (f.key == key) {
        cfg.aging.*f.member = parse_number<double>(value, key, line_no);
        known = true;
      }
    }
    if (key == "nominal_vdd") {
      cfg.nominal.vdd_V = parse_number<double>(value, key, line_no);
      known = true;
    } else if (key == "nominal_temperature") {
      cfg.nominal.temperature_C = parse_number<double>(value, key, line_no);
      known = true;
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(value, key, line_no);
      known = true;
    }
    if (!known) throw Error(Errc::kConfig, "line " + std::to_string(line_no) + ": unknown key " + std::string(key));
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_model_config(const std::string& path) {
  const Bytes data = read_file(path);
  return parse_model_config(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

std::string format_model_config(const ModelConfig& cfg) {
  std::string out;
  for (const auto& f : kDoubleFields) out += std::string(f.key) + " = " + format_double(cfg.*f.member) + "\n";
  out += "nominal_vdd = " + format_double(cfg.nominal.vdd_V) + "\n";
  out += "nominal_temperature = " + format_double(cfg.nominal.temperature_C) + "\n";
  out += "seed = " + std::to_string(cfg.seed) + "\n";
  for (const auto& f : kAgingFields) out += std::string(f.key) + " = " + format_double(cfg.aging.*f.member) + "\n";
  return out;
}

Bytes encode_chip(const ChipModel& chip) {
  ByteWriter w;
  w.raw(kChipMagic);
  w.str16(chip.chip_id);
  w.u32(static_cast<std::uint32_t>(chip.rows));
  w.u32(static_cast<std::uint32_t>(chip.cols));
  const ModelConfig& m = chip.model;
  for (const auto& f : kDoubleFields) w.f64(m.*f.member);
  w.f64(m.nominal.vdd_V);
  w.f64(m.nominal.temperature_C);
  for (const auto& f : kAgingFields) w.f64(m.aging.*f.member);
  w.u64(m.seed);
  for (const CellModel& c : chip.cells) {
    for (double v : {c.dv_orig, c.dv_heal, c.tc_orig, c.tc_heal, c.vc_orig, c.vc_heal, c.drift_orig, c.drift_heal,
                     c.trap_orig, c.trap_heal}) {
      w.f64(v);
    }
  }
  return w.take();
}

ChipModel decode_chip(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kChipMagic, Errc::kFormat);
  ChipModel chip;
  chip.chip_id = r.str16();
  chip.rows = r.u32();
  chip.cols = r.u32();
  ModelConfig& m = chip.model;
  for (const auto& f : kDoubleFields) m.*f.member = r.f64();
  m.nominal.vdd_V = r.f64();
  m.nominal.temperature_C = r.f64();
  for (const auto& f : kAgingFields) m.aging.*f.member = r.f64();
  m.seed = r.u64();
  const std::size_t n = chip.rows * chip.cols;
  if (n == 0 || r.remaining() != n * 10 * sizeof(double)) {
    throw Error(Errc::kFormat, "chip snapshot cell block does not match dimensions");
  }
  chip.cells.resize(n);
  for (CellModel& c : chip.cells) {
    for (double* v : {&c.dv_orig, &c.dv_heal, &c.tc_orig, &c.tc_heal, &c.vc_orig, &c.vc_heal, &c.drift_orig,
                      &c.drift_heal, &c.trap_orig, &c.trap_heal}) {
      *v = r.f64();
    }
  }
  return chip;
}

}  // namespace aschpuf
