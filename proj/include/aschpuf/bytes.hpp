// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aschpuf/error.hpp"

namespace aschpuf {

using Bytes = std::vector<std::uint8_t>;

// Little-endian appender used by every binary format in the project.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : out_(&out) {}

  void u8(std::uint8_t v) { buf().push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v), 4); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> data) { buf().insert(buf().end(), data.begin(), data.end()); }
  void raw(std::string_view s) { buf().insert(buf().end(), s.begin(), s.end()); }
  // u16 length prefix, then the bytes.
  void str16(std::string_view s);

  Bytes& bytes() { return buf(); }
  Bytes take() { return std::move(buf()); }

 private:
  Bytes& buf() { return out_ ? *out_ : own_; }
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf().push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes own_;
  Bytes* out_ = nullptr;
};

// Bounds-checked little-endian reader; running past the end throws kTruncated.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> raw(std::size_t n);
  std::string str16();
  void expect_magic(std::string_view magic, Errc on_mismatch);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::uint64_t get_le(int n);

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);

}  // namespace aschpuf
