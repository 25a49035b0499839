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
#include "aschpuf/bytes.hpp"
#include "aschpuf/puf_cell.hpp"
#include "aschpuf/rng.hpp"
#include "aschpuf/stabilization_map.hpp"

namespace aschpuf {

inline constexpr std::uint32_t kDefaultGoldenAverages = 101;

struct BitPlane {
  BitGrid bits;
  CellConfig config = CellConfig::kOriginal;
  Environment env{};
  std::uint32_t n_avg = 1;

  bool operator==(const BitPlane&) const = default;
};

struct GoldenPlanes {
  BitPlane orig;
  BitPlane healed;
};

/// Fixed-length key, one byte per bit.
struct Key {
  std::vector<std::uint8_t> bits;
  std::string provenance;

  std::size_t size() const { return bits.size(); }
  bool same_bits(const Key& other) const { return bits == other.bits; }
};

/// Majority over n_avg skew-free evaluations per cell. n_avg must be odd.
BitPlane golden_plane(const ChipModel& chip, CellConfig config, const Environment& env, std::uint32_t n_avg,
                      NoiseStream& rng);

GoldenPlanes collect_golden(const ChipModel& chip, const Environment& env, std::uint32_t n_avg, NoiseStream& rng);

/// Row-major scan: masked cells are skipped, healed cells read from
/// healed_bits, the rest from orig_bits. Throws kKeyTooLong if fewer than L
/// cells are unmasked.
Key stabilize_readout(const BitGrid& orig_bits, const BitGrid& healed_bits, const StabilizationMap& map,
                      std::size_t L);

/// Cell index feeding each key position, for the first L positions.
std::vector<std::size_t> key_cell_indices(const StabilizationMap& map, std::size_t L);

/// One evaluation of each needed cell at env in the config the map selects.
Key generate_key(const ChipModel& chip, const StabilizationMap& map, const Environment& env, std::size_t L,
                 NoiseStream& rng);

/// MSB-first within each byte; the last byte is zero-padded.
std::string to_hex(std::span<const std::uint8_t> bits);
Bytes to_raw(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> bits_from_hex(std::string_view hex, std::size_t n_bits);
std::vector<std::uint8_t> bits_from_raw(std::span<const std::uint8_t> raw, std::size_t n_bits);

}  // namespace aschpuf
