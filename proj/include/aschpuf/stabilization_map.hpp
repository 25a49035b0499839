// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "aschpuf/bitgrid.hpp"
#include "aschpuf/bytes.hpp"
#include "aschpuf/puf_cell.hpp"

namespace aschpuf {

enum class MapSource : std::uint8_t { kStatic = 0, kDynamic = 1 };

enum class CellClass : std::uint8_t {
  kStable = 1,  // C1: original config, not masked
  kHealed = 2,  // C2: read in the healed config
  kMasked = 3,  // C3: skipped
};

/// Output of one stabilization run. heal and mask never overlap.
struct StabilizationMap {
  BitGrid heal;
  BitGrid mask;
  double skew_mV = 0.0;
  MapSource source = MapSource::kStatic;
  Environment env_at_check{};

  StabilizationMap() = default;
  StabilizationMap(std::size_t rows, std::size_t cols) : heal(rows, cols), mask(rows, cols) {}

  std::size_t rows() const { return mask.rows(); }
  std::size_t cols() const { return mask.cols(); }
  std::size_t size() const { return mask.size(); }
  std::size_t usable_bits() const { return size() - mask.count(); }
  double masking_ratio() const { return size() ? static_cast<double>(mask.count()) / size() : 0.0; }
  CellClass cell_class(std::size_t i) const {
    return mask[i] ? CellClass::kMasked : heal[i] ? CellClass::kHealed : CellClass::kStable;
  }

  bool operator==(const StabilizationMap&) const = default;
};

inline constexpr std::size_t kMapHeaderBytes = 29;

/// ASCHMAP1 encoding: header then heal and mask bitmaps, LSB-first, row-major.
/// skew and env are stored as integer microvolts / milli-degrees.
Bytes encode_map(const StabilizationMap& map);

/// Strict decoder; any deviation from the canonical form throws kMalformedMap.
StabilizationMap decode_map(std::span<const std::uint8_t> bytes);

std::size_t encoded_map_size(std::size_t cells);

}  // namespace aschpuf
