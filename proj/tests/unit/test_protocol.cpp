// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <optional>
#include <thread>

#include "../support/message_gen.hpp"
#include "aschpuf/asch.hpp"
#include "aschpuf/error.hpp"
#include "aschpuf/protocol.hpp"
#include "doctest.h"

using namespace aschpuf;
using namespace aschpuf::testing;

namespace {

std::optional<Errc> code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::filesystem::path temp_path(const char* name) {
  auto p = std::filesystem::temp_directory_path() / (std::string("aschpuf-test-") + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("frame layout") {
  const Bytes b = encode_frame(Frame{MessageType::kVerdict, Bytes{3}});
  CHECK(b == Bytes{2, 0, 0, 0, 5, 3});
  CHECK(decode_frame(b) == Frame{MessageType::kVerdict, Bytes{3}});
  CHECK(std::get<VerdictMsg>(decode_message(b)).status == VerdictStatus::kMalformedMap);
}

TEST_CASE("message round trip over random messages") {
  NoiseStream s(1);
  for (int i = 0; i < 3000; ++i) {
    const Message m = random_message(s);
    CHECK(decode_message(encode_message(m)) == m);
  }
}

TEST_CASE("truncated frames are rejected at every cut") {
  NoiseStream s(2);
  for (int i = 0; i < 60; ++i) {
    const Bytes b = encode_message(random_message(s));
    for (std::size_t cut = 0; cut < b.size(); ++cut) {
      CHECK(code_of([&] { decode_frame(std::span(b.data(), cut)); }) == Errc::kTruncated);
      if (cut == 0) continue;
      FrameReader r;
      r.feed(std::span(b.data(), cut));
      CHECK_FALSE(r.next().has_value());
      CHECK(code_of([&] { r.finish(); }) == Errc::kTruncated);
    }
    FrameReader whole;
    whole.feed(b);
    CHECK(whole.next().has_value());
    CHECK_NOTHROW(whole.finish());
  }
}

TEST_CASE("malformed frames") {
  CHECK(code_of([] { decode_frame(Bytes{0, 0, 0, 0, 5}); }) == Errc::kProtocol);
  CHECK(code_of([] { decode_frame(Bytes{1, 0, 0, 0, 9}); }) == Errc::kProtocol);
  CHECK(code_of([] { decode_frame(Bytes{1, 0, 0, 2, 5}); }) == Errc::kProtocol);
  CHECK(code_of([] { decode_frame(Bytes{2, 0, 0, 0, 5, 0, 0}); }) == Errc::kProtocol);
  CHECK(code_of([] { decode_message(Bytes{2, 0, 0, 0, 5, 9}); }) == Errc::kProtocol);
  CHECK(code_of([] { decode_message(Bytes{5, 0, 0, 0, 4, 0, 0, 1, 0}); }) == Errc::kProtocol);

  // A map with a cell both healed and masked.
  StabilizationMap m(1, 8);
  Bytes enc = encode_map(m);
  enc[kMapHeaderBytes] = 1;
  enc[kMapHeaderBytes + 1] = 1;
  CHECK(code_of([&] { decode_map(enc); }) == Errc::kMalformedMap);
  enc = encode_map(m);
  enc[0] = 'X';
  CHECK(code_of([&] { decode_map(enc); }) == Errc::kMalformedMap);
}

TEST_CASE("map codec sizes and session overhead") {
  CHECK(encoded_map_size(4096) == 29 + 1024);
  CHECK(session_overhead(StabilizationMap(32, 128), 128) == 1058);
  CHECK(session_overhead(StabilizationMap(1, 5), 3) == 5 + 29 + 2);
  NoiseStream s(3);
  for (int i = 0; i < 200; ++i) {
    const auto m = random_map(s, pick(s, 1, 9), pick(s, 1, 70));
    const Bytes b = encode_map(m);
    CHECK(b.size() == encoded_map_size(m.size()));
    CHECK(decode_map(b) == m);
  }
}

TEST_CASE("session map bytes do not depend on key material") {
  NoiseStream s(4);
  const StabilizationMap map = random_map(s, 8, 16);
  const Bytes reference = encode_message(SessionMapMsg{map});
  for (int i = 0; i < 20; ++i) {
    const auto rec = make_dynamic_record("chip", random_plane(s, 8, 16, CellConfig::kOriginal),
                                         random_plane(s, 8, 16, CellConfig::kHealed));
    const Key k = server_expected_key(rec, map, 10);
    CHECK(k.size() == 10);
    CHECK(encode_message(SessionMapMsg{map}) == reference);
    CHECK(session_overhead(map, 10) == reference.size());
  }
}

TEST_CASE("server expected key") {
  BitPlane orig, healed;
  orig.bits = BitGrid(1, 5);
  healed.bits = BitGrid(1, 5);
  healed.config = CellConfig::kHealed;
  for (std::size_t i : {0u, 3u, 4u}) orig.bits.set(i, true);
  for (std::size_t i : {1u, 2u}) healed.bits.set(i, true);
  const auto rec = make_dynamic_record("toy", orig, healed);

  CHECK(server_expected_key(rec, StabilizationMap(1, 5), 5).bits == std::vector<std::uint8_t>{1, 0, 0, 1, 1});
  StabilizationMap fig(1, 5);
  fig.mask.set(1, true);
  fig.heal.set(2, true);
  CHECK(server_expected_key(rec, fig, 3).bits == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(code_of([&] { server_expected_key(rec, fig, 5); }) == Errc::kKeyTooLong);
  CHECK(code_of([&] { server_expected_key(rec, StabilizationMap(5, 1), 2); }) == Errc::kDimensionMismatch);
}

TEST_CASE("mirror property in the noiseless model") {
  ModelConfig m;
  m.sigma_noise_mV = 0.0;
  NoiseStream s(5);
  for (int chip_i = 0; chip_i < 5; ++chip_i) {
    const ChipModel chip = sample_chip(m, "mirror-" + std::to_string(chip_i), 8, 64);
    NoiseStream g(chip_i);
    const GoldenPlanes golden = collect_golden(chip, m.nominal, 1, g);
    const auto rec = make_dynamic_record(chip.chip_id, golden.orig, golden.healed);
    for (int t = 0; t < 10; ++t) {
      const StabilizationMap map = random_map(s, 8, 64);
      const std::size_t L = pick(s, 1, map.usable_bits());
      NoiseStream k(t);
      CHECK(server_expected_key(rec, map, L).same_bits(generate_key(chip, map, m.nominal, L, k)));
    }
  }
}

TEST_CASE("database enroll, lookup, duplicates and persistence") {
  const auto path = temp_path("db");
  NoiseStream s(6);
  const auto dyn = make_dynamic_record("dyn", random_plane(s, 32, 128, CellConfig::kOriginal),
                                       random_plane(s, 32, 128, CellConfig::kHealed));
  const auto sta = make_static_record("sta", random_bits(s, 256), random_map(s, 32, 128));
  {
    ServerDb db(path.string());
    CHECK(db.enroll(dyn));
    CHECK(db.enroll(sta));
    CHECK_FALSE(db.enroll(dyn));
    auto conflicting = sta;
    conflicting.static_key[0] ^= 1;
    CHECK(code_of([&] { db.enroll(conflicting); }) == Errc::kDuplicateChip);
    CHECK(db.lookup("dyn") == dyn);
    CHECK_FALSE(db.lookup("nobody").has_value());
  }
  ServerDb reopened(path.string());
  CHECK(reopened.size() == 2);
  CHECK(reopened.lookup("dyn") == dyn);
  CHECK(reopened.lookup("sta") == sta);
  std::filesystem::remove(path);

  const auto bad = temp_path("bad");
  { ServerDb db(bad.string()); db.enroll(sta); }
  std::filesystem::resize_file(bad, std::filesystem::file_size(bad) - 3);
  CHECK(code_of([&] { ServerDb again(bad.string()); }).has_value());
  std::filesystem::remove(bad);
}

TEST_CASE("verify") {
  NoiseStream s(7);
  ServerDb db;
  const auto key = random_bits(s, 200);
  db.enroll(make_static_record("sta", key, random_map(s, 4, 64)));
  const auto orig = random_plane(s, 4, 64, CellConfig::kOriginal);
  const auto healed = random_plane(s, 4, 64, CellConfig::kHealed);
  const auto dyn = make_dynamic_record("dyn", orig, healed);
  db.enroll(dyn);

  CHECK(verify(db, "sta", nullptr, key) == VerdictStatus::kAccept);
  CHECK(verify(db, "sta", nullptr, std::span(key.data(), 128)) == VerdictStatus::kAccept);
  auto flipped = key;
  flipped[77] ^= 1;
  CHECK(verify(db, "sta", nullptr, flipped) == VerdictStatus::kReject);
  CHECK(code_of([&] { verify(db, "ghost", nullptr, key); }) == Errc::kUnknownChip);

  const StabilizationMap map = random_map(s, 4, 64);
  auto expected = server_expected_key(dyn, map, 100).bits;
  CHECK(verify(db, "dyn", &map, expected) == VerdictStatus::kAccept);
  expected[0] ^= 1;
  CHECK(verify(db, "dyn", &map, expected) == VerdictStatus::kReject);
  CHECK(code_of([&] { verify(db, "dyn", nullptr, expected); }) == Errc::kMalformedMap);
  const StabilizationMap wrong(8, 32);
  CHECK(code_of([&] { verify(db, "dyn", &wrong, expected); }) == Errc::kMalformedMap);
}

TEST_CASE("server session replies to every request") {
  NoiseStream s(8);
  ServerDb db;
  ServerSession session(db);
  auto status = [&](const Message& m) { return std::get<VerdictMsg>(from_frame(session.handle(to_frame(m)))).status; };
  const auto orig = random_plane(s, 2, 16, CellConfig::kOriginal);
  const auto healed = random_plane(s, 2, 16, CellConfig::kHealed);
  const auto rec = make_dynamic_record("d", orig, healed);
  CHECK(status(EnrollDynamicMsg{rec}) == VerdictStatus::kAccept);
  CHECK(status(EnrollDynamicMsg{rec}) == VerdictStatus::kAccept);
  const auto map = random_map(s, 2, 16);
  const auto key = server_expected_key(rec, map, map.usable_bits()).bits;
  CHECK(status(SessionMapMsg{map}) == VerdictStatus::kAccept);
  CHECK(status(KeyProofMsg{"d", key}) == VerdictStatus::kAccept);
  // The pending map is consumed by the proof.
  CHECK(status(KeyProofMsg{"d", key}) == VerdictStatus::kMalformedMap);
  CHECK(status(KeyProofMsg{"x", key}) == VerdictStatus::kUnknownChip);
  CHECK(status(VerdictMsg{}) == VerdictStatus::kProtocolError);
  CHECK(std::get<VerdictMsg>(from_frame(session.handle(Frame{MessageType::kSessionMap, Bytes{1, 2}}))).status ==
        VerdictStatus::kMalformedMap);
}

TEST_CASE("request and serve over a socket pair") {
  int fds[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
  ServerDb db;
  std::thread server([&] { serve_connection(fds[1], db); });

  ModelConfig m;
  const ChipModel chip = sample_chip(m, "sock");
  NoiseStream g(9), d(10);
  const GoldenPlanes golden = collect_golden(chip, m.nominal, 101, g);
  FrameReader reader;
  CHECK(request(fds[0], reader, EnrollDynamicMsg{make_dynamic_record(chip.chip_id, golden.orig, golden.healed)}) ==
        VerdictStatus::kAccept);
  const auto session = run_d_asch_powerup(chip, Environment{1.4, -45.0}, 10.0, AschOptions{}, d, 128);
  CHECK(request(fds[0], reader, SessionMapMsg{session.map}) == VerdictStatus::kAccept);
  CHECK(request(fds[0], reader, KeyProofMsg{chip.chip_id, session.key.bits}) == VerdictStatus::kAccept);
  ::shutdown(fds[0], SHUT_WR);
  server.join();
  ::close(fds[0]);
  ::close(fds[1]);
  CHECK(db.size() == 1);
}
