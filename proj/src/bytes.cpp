// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/bytes.hpp"

#include <fstream>
#include <iterator>
#include <limits>

namespace aschpuf {

void ByteWriter::str16(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(Errc::kInvalidArgument, "string longer than 65535 bytes");
  }
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

std::uint64_t ByteReader::get_le(int n) {
  if (remaining() < static_cast<std::size_t>(n)) {
    throw Error(Errc::kTruncated, "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
  }
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += n;
  return v;
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  if (remaining() < n) {
    throw Error(Errc::kTruncated, "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str16() {
  auto len = u16();
  auto s = raw(len);
  return std::string(s.begin(), s.end());
}

void ByteReader::expect_magic(std::string_view magic, Errc on_mismatch) {
  auto got = raw(magic.size());
  if (!std::equal(got.begin(), got.end(), magic.begin())) {
    throw Error(on_mismatch, "bad magic, expected " + std::string(magic));
  }
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot open " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::kIo, "write failed: " + path);
}

}  // namespace aschpuf
