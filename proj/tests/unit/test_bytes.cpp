// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/bitgrid.hpp"
#include "aschpuf/bytes.hpp"
#include "aschpuf/error.hpp"
#include "aschpuf/rng.hpp"
#include "doctest.h"

using namespace aschpuf;

TEST_CASE("little-endian writer and bounds-checked reader") {
  ByteWriter w;
  w.u8(0xab);
  w.u16(0x1234);
  w.u32(0xdeadbeef);
  w.i32(-5);
  w.f64(-1.25);
  w.str16("chip");
  const Bytes b = w.take();
  CHECK(b.size() == 1 + 2 + 4 + 4 + 8 + 2 + 4);
  CHECK(b[1] == 0x34);
  CHECK(b[2] == 0x12);
  ByteReader r(b);
  CHECK(r.u8() == 0xab);
  CHECK(r.u16() == 0x1234);
  CHECK(r.u32() == 0xdeadbeef);
  CHECK(r.i32() == -5);
  CHECK(r.f64() == -1.25);
  CHECK(r.str16() == "chip");
  CHECK(r.done());
  try {
    r.u8();
    FAIL("read past end");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kTruncated);
  }
}

TEST_CASE("bit packing orders and padding") {
  const std::vector<std::uint8_t> bits{1, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  const Bytes lsb = pack_lsb_first(bits);
  const Bytes msb = pack_msb_first(bits);
  REQUIRE(lsb.size() == 2);
  CHECK(lsb[0] == 0x01);
  CHECK(lsb[1] == 0x03);
  CHECK(msb[0] == 0x80);
  CHECK(msb[1] == 0xc0);
  CHECK(unpack_lsb_first(lsb, 10) == bits);
  CHECK(unpack_msb_first(msb, 10) == bits);

  Bytes bad = lsb;
  bad[1] |= 0x80;
  CHECK_THROWS_AS(unpack_lsb_first(bad, 10), Error);
  CHECK_THROWS_AS(unpack_lsb_first(lsb, 17), Error);

  NoiseStream s(5);
  for (std::size_t n = 1; n < 70; ++n) {
    std::vector<std::uint8_t> v(n);
    for (auto& x : v) x = s.next_u64() & 1u;
    CHECK(unpack_lsb_first(pack_lsb_first(v), n) == v);
    CHECK(unpack_msb_first(pack_msb_first(v), n) == v);
  }
}

TEST_CASE("bitgrid set algebra") {
  BitGrid a(2, 3), b(2, 3);
  a.set(0, true);
  a.set(4, true);
  b.set(0, true);
  b.set(4, true);
  b.set(5, true);
  CHECK(a.count() == 2);
  CHECK(a.is_subset_of(b));
  CHECK_FALSE(b.is_subset_of(a));
  CHECK(a.intersection_count(b) == 2);
  CHECK(a.at(1, 1));
  CHECK_FALSE(a.same_shape(BitGrid(3, 2)));
}
