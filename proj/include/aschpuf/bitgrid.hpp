// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aschpuf/bytes.hpp"

namespace aschpuf {

/// Row-major binary grid over the cell array. One byte per cell; packing to
/// bits only happens at serialization boundaries.
class BitGrid {
 public:
  BitGrid() = default;
  BitGrid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return bits_.size(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool at(std::size_t row, std::size_t col) const { return bits_[row * cols_ + col] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t count() const;
  bool same_shape(const BitGrid& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  bool is_subset_of(const BitGrid& other) const;
  std::size_t intersection_count(const BitGrid& other) const;

  std::span<const std::uint8_t> data() const { return bits_; }

  bool operator==(const BitGrid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Row-major, least-significant bit first within each byte.
Bytes pack_lsb_first(std::span<const std::uint8_t> bits);
/// Inverse of pack_lsb_first; padding bits in the last byte must be zero.
std::vector<std::uint8_t> unpack_lsb_first(std::span<const std::uint8_t> packed, std::size_t n_bits);

/// Most-significant bit first within each byte (key export order).
Bytes pack_msb_first(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> unpack_msb_first(std::span<const std::uint8_t> packed, std::size_t n_bits);

}  // namespace aschpuf
