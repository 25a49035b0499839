// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/stabilization_map.hpp"

#include <cmath>
#include <limits>

#include "aschpuf/error.hpp"

namespace aschpuf {

namespace {

constexpr std::string_view kMapMagic = "ASCHMAP1";

std::int32_t to_fixed(double v, double scale, const char* what) {
  const double scaled = std::round(v * scale);
  if (!(std::fabs(scaled) <= std::numeric_limits<std::int32_t>::max())) {
    throw Error(Errc::kInvalidArgument, std::string(what) + " not representable in the map header");
  }
  return static_cast<std::int32_t>(scaled);
}

}  // namespace

std::size_t encoded_map_size(std::size_t cells) { return kMapHeaderBytes + 2 * ((cells + 7) / 8); }

Bytes encode_map(const StabilizationMap& map) {
  if (!map.heal.same_shape(map.mask) || map.size() == 0) {
    throw Error(Errc::kDimensionMismatch, "heal and mask bitmaps must share non-empty dimensions");
  }
  if (map.heal.intersection_count(map.mask) != 0) {
    throw Error(Errc::kInvalidArgument, "heal and mask bitmaps overlap");
  }
  ByteWriter w;
  w.raw(kMapMagic);
  w.u32(static_cast<std::uint32_t>(map.rows()));
  w.u32(static_cast<std::uint32_t>(map.cols()));
  w.i32(to_fixed(map.skew_mV, 1000.0, "skew"));
  w.u8(static_cast<std::uint8_t>(map.source));
  w.i32(to_fixed(map.env_at_check.vdd_V, 1e6, "vdd"));
  w.i32(to_fixed(map.env_at_check.temperature_C, 1000.0, "temperature"));
  w.raw(pack_lsb_first(map.heal.data()));
  w.raw(pack_lsb_first(map.mask.data()));
  return w.take();
}

StabilizationMap decode_map(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    r.expect_magic(kMapMagic, Errc::kMalformedMap);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) throw Error(Errc::kMalformedMap, "zero map dimension");
    const std::uint64_t cells = static_cast<std::uint64_t>(rows) * cols;
    StabilizationMap map;
    map.skew_mV = r.i32() / 1000.0;
    const std::uint8_t source = r.u8();
    if (source > 1) throw Error(Errc::kMalformedMap, "unknown map source " + std::to_string(source));
    map.source = static_cast<MapSource>(source);
    map.env_at_check.vdd_V = r.i32() / 1e6;
    map.env_at_check.temperature_C = r.i32() / 1000.0;
    const std::uint64_t plane_bytes = (cells + 7) / 8;
    if (r.remaining() != 2 * plane_bytes) throw Error(Errc::kMalformedMap, "bitmap length does not match dimensions");
    map.heal = BitGrid(rows, cols);
    map.mask = BitGrid(rows, cols);
    const auto heal = unpack_lsb_first(r.raw(plane_bytes), cells);
    const auto mask = unpack_lsb_first(r.raw(plane_bytes), cells);
    for (std::size_t i = 0; i < cells; ++i) {
      if (heal[i] && mask[i]) throw Error(Errc::kMalformedMap, "cell " + std::to_string(i) + " both healed and masked");
      map.heal.set(i, heal[i] != 0);
      map.mask.set(i, mask[i] != 0);
    }
    return map;
  } catch (const Error& e) {
    if (e.code() == Errc::kMalformedMap) throw;
    throw Error(Errc::kMalformedMap, e.what());
  }
}

}  // namespace aschpuf
