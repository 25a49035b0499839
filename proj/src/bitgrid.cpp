// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/bitgrid.hpp"

#include <numeric>

namespace aschpuf {

std::size_t BitGrid::count() const {
  return std::accumulate(bits_.begin(), bits_.end(), std::size_t{0});
}

bool BitGrid::is_subset_of(const BitGrid& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

std::size_t BitGrid::intersection_count(const BitGrid& other) const {
  if (!same_shape(other)) throw Error(Errc::kDimensionMismatch, "bit grid shapes differ");
  std::size_t n = 0;
  for (std::size_t i = 0; i < bits_.size(); ++i) n += (bits_[i] & other.bits_[i]);
  return n;
}

Bytes pack_lsb_first(std::span<const std::uint8_t> bits) {
  Bytes out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_lsb_first(std::span<const std::uint8_t> packed, std::size_t n_bits) {
  if (packed.size() != (n_bits + 7) / 8) throw Error(Errc::kFormat, "packed bitmap has wrong length");
  std::vector<std::uint8_t> bits(n_bits);
  for (std::size_t i = 0; i < n_bits; ++i) bits[i] = (packed[i / 8] >> (i % 8)) & 1u;
  if (n_bits % 8 != 0 && (packed.back() >> (n_bits % 8)) != 0) {
    throw Error(Errc::kFormat, "nonzero padding bits");
  }
  return bits;
}

Bytes pack_msb_first(std::span<const std::uint8_t> bits) {
  Bytes out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_msb_first(std::span<const std::uint8_t> packed, std::size_t n_bits) {
  if (packed.size() != (n_bits + 7) / 8) throw Error(Errc::kFormat, "packed key has wrong length");
  std::vector<std::uint8_t> bits(n_bits);
  for (std::size_t i = 0; i < n_bits; ++i) bits[i] = (packed[i / 8] >> (7 - i % 8)) & 1u;
  if (n_bits % 8 != 0) {
    const std::uint8_t pad_mask = static_cast<std::uint8_t>(0xffu >> (n_bits % 8));
    if (packed.back() & pad_mask) throw Error(Errc::kFormat, "nonzero padding bits");
  }
  return bits;
}

}  // namespace aschpuf
