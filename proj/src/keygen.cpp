// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/keygen.hpp"

#include <string>

#include "aschpuf/error.hpp"
#include "aschpuf/parallel.hpp"

namespace aschpuf {

BitPlane golden_plane(const ChipModel& chip, CellConfig config, const Environment& env, std::uint32_t n_avg,
                      NoiseStream& rng) {
  if (n_avg == 0 || n_avg % 2 == 0) throw Error(Errc::kInvalidArgument, "n_avg must be odd");
  validate(env);
  BitPlane plane{BitGrid(chip.rows, chip.cols), config, env, n_avg};
  const NoiseStream run = rng.split();
  parallel_for(chip.size(), [&](std::size_t i) {
    NoiseStream s = run.fork(cell_tag(i, config));
    plane.bits.set(i, evaluate_session(chip.cells[i], config, env, chip.model, 0.0, n_avg, s).majority_bit);
  });
  return plane;
}

GoldenPlanes collect_golden(const ChipModel& chip, const Environment& env, std::uint32_t n_avg, NoiseStream& rng) {
  GoldenPlanes g;
  g.orig = golden_plane(chip, CellConfig::kOriginal, env, n_avg, rng);
  g.healed = golden_plane(chip, CellConfig::kHealed, env, n_avg, rng);
  return g;
}

std::vector<std::size_t> key_cell_indices(const StabilizationMap& map, std::size_t L) {
  if (L > map.usable_bits()) {
    throw Error(Errc::kKeyTooLong, "requested " + std::to_string(L) + " bits, only " +
                                       std::to_string(map.usable_bits()) + " unmasked");
  }
  std::vector<std::size_t> idx;
  idx.reserve(L);
  for (std::size_t i = 0; i < map.size() && idx.size() < L; ++i) {
    if (!map.mask[i]) idx.push_back(i);
  }
  return idx;
}

Key stabilize_readout(const BitGrid& orig_bits, const BitGrid& healed_bits, const StabilizationMap& map,
                      std::size_t L) {
  if (!orig_bits.same_shape(map.mask) || !healed_bits.same_shape(map.mask) || !map.heal.same_shape(map.mask)) {
    throw Error(Errc::kDimensionMismatch, "bit planes and map differ in shape");
  }
  Key key;
  key.bits.reserve(L);
  for (std::size_t i : key_cell_indices(map, L)) {
    key.bits.push_back(map.heal[i] ? healed_bits[i] : orig_bits[i]);
  }
  return key;
}

Key generate_key(const ChipModel& chip, const StabilizationMap& map, const Environment& env, std::size_t L,
                 NoiseStream& rng) {
  if (map.rows() != chip.rows || map.cols() != chip.cols) {
    throw Error(Errc::kDimensionMismatch, "map does not match chip");
  }
  validate(env);
  const auto idx = key_cell_indices(map, L);
  const NoiseStream run = rng.split();
  Key key;
  key.bits.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    const CellConfig cfg = map.heal[i] ? CellConfig::kHealed : CellConfig::kOriginal;
    NoiseStream s = run.fork(cell_tag(i, cfg));
    key.bits[k] = evaluate_bit(chip.cells[i], cfg, env, chip.model, 0.0, s);
  }
  return key;
}

std::string to_hex(std::span<const std::uint8_t> bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::uint8_t byte : pack_msb_first(bits)) {
    out.push_back(kDigits[byte >> 4]);
    out.push_back(kDigits[byte & 0xf]);
  }
  return out;
}

Bytes to_raw(std::span<const std::uint8_t> bits) { return pack_msb_first(bits); }

std::vector<std::uint8_t> bits_from_hex(std::string_view hex, std::size_t n_bits) {
  if (hex.size() != 2 * ((n_bits + 7) / 8)) throw Error(Errc::kFormat, "hex length does not match bit count");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::kFormat, std::string("bad hex digit '") + c + "'");
  };
  Bytes raw(hex.size() / 2);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return unpack_msb_first(raw, n_bits);
}

std::vector<std::uint8_t> bits_from_raw(std::span<const std::uint8_t> raw, std::size_t n_bits) {
  return unpack_msb_first(raw, n_bits);
}

}  // namespace aschpuf
