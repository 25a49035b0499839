// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/protocol.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>

#include "aschpuf/error.hpp"

namespace aschpuf {

namespace {

constexpr std::string_view kDbMagic = "ASCHDB01";

void write_plane(ByteWriter& w, const BitPlane& p) {
  w.u32(static_cast<std::uint32_t>(p.bits.rows()));
  w.u32(static_cast<std::uint32_t>(p.bits.cols()));
  w.u8(static_cast<std::uint8_t>(p.config));
  w.i32(static_cast<std::int32_t>(std::lround(p.env.vdd_V * 1e6)));
  w.i32(static_cast<std::int32_t>(std::lround(p.env.temperature_C * 1000.0)));
  w.u32(p.n_avg);
  w.raw(pack_lsb_first(p.bits.data()));
}

BitPlane read_plane(ByteReader& r) {
  BitPlane p;
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (rows == 0 || cols == 0) throw Error(Errc::kFormat, "zero plane dimension");
  const std::uint8_t config = r.u8();
  if (config > 1) throw Error(Errc::kFormat, "unknown cell config " + std::to_string(config));
  p.config = static_cast<CellConfig>(config);
  p.env.vdd_V = r.i32() / 1e6;
  p.env.temperature_C = r.i32() / 1000.0;
  p.n_avg = r.u32();
  const std::uint64_t cells = static_cast<std::uint64_t>(rows) * cols;
  if ((cells + 7) / 8 > r.remaining()) throw Error(Errc::kTruncated, "plane bitmap truncated");
  const auto bits = unpack_lsb_first(r.raw((cells + 7) / 8), cells);
  p.bits = BitGrid(rows, cols);
  for (std::size_t i = 0; i < cells; ++i) p.bits.set(i, bits[i] != 0);
  return p;
}

void write_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kIo, std::string("send: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

sockaddr_un unix_address(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw Error(Errc::kInvalidArgument, "socket path too long: " + path);
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

}  // namespace

EnrollmentRecord make_static_record(std::string chip_id, std::vector<std::uint8_t> key, StabilizationMap map) {
  EnrollmentRecord r;
  r.chip_id = std::move(chip_id);
  r.mode = EnrollMode::kStatic;
  r.static_key = std::move(key);
  r.enrolled_map = std::move(map);
  return r;
}

EnrollmentRecord make_dynamic_record(std::string chip_id, BitPlane orig, BitPlane healed) {
  EnrollmentRecord r;
  r.chip_id = std::move(chip_id);
  r.mode = EnrollMode::kDynamic;
  r.orig_plane = std::move(orig);
  r.healed_plane = std::move(healed);
  return r;
}

void check_record(const EnrollmentRecord& r) {
  if (r.chip_id.empty() || r.chip_id.size() > 0xffff) throw Error(Errc::kInvalidArgument, "bad chip_id length");
  if (r.mode == EnrollMode::kStatic) {
    if (!r.enrolled_map || r.orig_plane || r.healed_plane || r.static_key.empty()) {
      throw Error(Errc::kInvalidArgument, "static record needs exactly a key and a map");
    }
  } else {
    if (r.enrolled_map || !r.static_key.empty() || !r.orig_plane || !r.healed_plane) {
      throw Error(Errc::kInvalidArgument, "dynamic record needs exactly two planes");
    }
    if (!r.orig_plane->bits.same_shape(r.healed_plane->bits)) {
      throw Error(Errc::kDimensionMismatch, "dynamic planes differ in shape");
    }
  }
}

Bytes encode_record_body(const EnrollmentRecord& record) {
  check_record(record);
  ByteWriter w;
  w.str16(record.chip_id);
  if (record.mode == EnrollMode::kStatic) {
    w.u32(static_cast<std::uint32_t>(record.static_key.size()));
    w.raw(pack_msb_first(record.static_key));
    const Bytes map = encode_map(*record.enrolled_map);
    w.u32(static_cast<std::uint32_t>(map.size()));
    w.raw(map);
  } else {
    write_plane(w, *record.orig_plane);
    write_plane(w, *record.healed_plane);
  }
  return w.take();
}

EnrollmentRecord decode_record_body(EnrollMode mode, std::span<const std::uint8_t> body) {
  ByteReader r(body);
  EnrollmentRecord rec;
  rec.mode = mode;
  rec.chip_id = r.str16();
  if (mode == EnrollMode::kStatic) {
    const std::uint32_t bits = r.u32();
    if ((static_cast<std::uint64_t>(bits) + 7) / 8 > r.remaining()) throw Error(Errc::kTruncated, "key truncated");
    rec.static_key = unpack_msb_first(r.raw((static_cast<std::size_t>(bits) + 7) / 8), bits);
    const std::uint32_t map_len = r.u32();
    rec.enrolled_map = decode_map(r.raw(map_len));
  } else {
    rec.orig_plane = read_plane(r);
    rec.healed_plane = read_plane(r);
  }
  if (!r.done()) throw Error(Errc::kFormat, "trailing bytes after record");
  check_record(rec);
  return rec;
}

std::string_view to_string(VerdictStatus status) {
  switch (status) {
    case VerdictStatus::kAccept: return "accept";
    case VerdictStatus::kReject: return "reject";
    case VerdictStatus::kUnknownChip: return "unknown-chip";
    case VerdictStatus::kMalformedMap: return "malformed-map";
    case VerdictStatus::kDuplicate: return "duplicate";
    case VerdictStatus::kProtocolError: return "protocol-error";
  }
  return "invalid";
}

Bytes encode_frame(const Frame& frame) {
  if (frame.payload.size() + 1 > kMaxFrameLength) throw Error(Errc::kProtocol, "frame too large");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(frame.payload.size() + 1));
  w.u8(static_cast<std::uint8_t>(frame.type));
  w.raw(frame.payload);
  return w.take();
}

namespace {

// Validates a header; returns the length field.
std::uint32_t check_header(std::span<const std::uint8_t> header) {
  const std::uint32_t len = static_cast<std::uint32_t>(header[0]) | static_cast<std::uint32_t>(header[1]) << 8 |
                            static_cast<std::uint32_t>(header[2]) << 16 | static_cast<std::uint32_t>(header[3]) << 24;
  if (len < 1 || len > kMaxFrameLength) throw Error(Errc::kProtocol, "bad frame length " + std::to_string(len));
  const std::uint8_t tag = header[4];
  if (tag < static_cast<std::uint8_t>(MessageType::kEnrollStatic) || tag > static_cast<std::uint8_t>(MessageType::kVerdict)) {
    throw Error(Errc::kProtocol, "unknown message tag " + std::to_string(tag));
  }
  return len;
}

}  // namespace

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(Errc::kTruncated, "frame header truncated");
  if (bytes.size() < kFrameHeaderBytes) {
    // The length alone can already be invalid; report that before truncation.
    const std::uint8_t padded[5] = {bytes[0], bytes[1], bytes[2], bytes[3], 1};
    check_header(padded);
    throw Error(Errc::kTruncated, "frame header truncated");
  }
  const std::uint32_t len = check_header(bytes.first(kFrameHeaderBytes));
  const std::size_t total = 4 + static_cast<std::size_t>(len);
  if (bytes.size() < total) throw Error(Errc::kTruncated, "frame payload truncated");
  if (bytes.size() > total) throw Error(Errc::kProtocol, "trailing bytes after frame");
  Frame f;
  f.type = static_cast<MessageType>(bytes[4]);
  f.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.end());
  return f;
}

void FrameReader::feed(std::span<const std::uint8_t> data) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.insert(buf_.end(), data.begin(), data.end());
}

std::optional<Frame> FrameReader::next() {
  const std::span<const std::uint8_t> avail(buf_.data() + pos_, buf_.size() - pos_);
  if (avail.size() < kFrameHeaderBytes) return std::nullopt;
  const std::uint32_t len = check_header(avail.first(kFrameHeaderBytes));
  const std::size_t total = 4 + static_cast<std::size_t>(len);
  if (avail.size() < total) return std::nullopt;
  Frame f = decode_frame(avail.first(total));
  pos_ += total;
  if (pos_ > (1u << 20) && pos_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  return f;
}

void FrameReader::finish() const {
  if (buffered() != 0) throw Error(Errc::kTruncated, "stream ended inside a frame");
}

Frame to_frame(const Message& msg) {
  Frame f;
  ByteWriter w;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, EnrollStaticMsg>) {
          if (m.record.mode != EnrollMode::kStatic) throw Error(Errc::kInvalidArgument, "record is not static");
          f.type = MessageType::kEnrollStatic;
          w.raw(encode_record_body(m.record));
        } else if constexpr (std::is_same_v<T, EnrollDynamicMsg>) {
          if (m.record.mode != EnrollMode::kDynamic) throw Error(Errc::kInvalidArgument, "record is not dynamic");
          f.type = MessageType::kEnrollDynamic;
          w.raw(encode_record_body(m.record));
        } else if constexpr (std::is_same_v<T, SessionMapMsg>) {
          f.type = MessageType::kSessionMap;
          w.raw(encode_map(m.map));
        } else if constexpr (std::is_same_v<T, KeyProofMsg>) {
          f.type = MessageType::kKeyProof;
          w.str16(m.chip_id);
          w.u32(static_cast<std::uint32_t>(m.key.size()));
          w.raw(pack_msb_first(m.key));
        } else {
          f.type = MessageType::kVerdict;
          w.u8(static_cast<std::uint8_t>(m.status));
        }
      },
      msg);
  f.payload = w.take();
  return f;
}

Message from_frame(const Frame& frame) {
  try {
    switch (frame.type) {
      case MessageType::kEnrollStatic:
        return EnrollStaticMsg{decode_record_body(EnrollMode::kStatic, frame.payload)};
      case MessageType::kEnrollDynamic:
        return EnrollDynamicMsg{decode_record_body(EnrollMode::kDynamic, frame.payload)};
      case MessageType::kSessionMap:
        return SessionMapMsg{decode_map(frame.payload)};
      case MessageType::kKeyProof: {
        ByteReader r(frame.payload);
        KeyProofMsg m;
        m.chip_id = r.str16();
        const std::uint32_t bits = r.u32();
        if (r.remaining() != (static_cast<std::uint64_t>(bits) + 7) / 8) {
          throw Error(Errc::kProtocol, "key proof length mismatch");
        }
        m.key = unpack_msb_first(r.raw(r.remaining()), bits);
        return m;
      }
      case MessageType::kVerdict: {
        if (frame.payload.size() != 1 || frame.payload[0] > static_cast<std::uint8_t>(VerdictStatus::kProtocolError)) {
          throw Error(Errc::kProtocol, "bad verdict payload");
        }
        return VerdictMsg{static_cast<VerdictStatus>(frame.payload[0])};
      }
    }
  } catch (const Error& e) {
    if (e.code() == Errc::kMalformedMap || e.code() == Errc::kProtocol) throw;
    throw Error(Errc::kProtocol, e.what());
  }
  throw Error(Errc::kProtocol, "unknown message tag");
}

ServerDb::ServerDb(std::string path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) {
    write_file(path_, std::span(reinterpret_cast<const std::uint8_t*>(kDbMagic.data()), kDbMagic.size()));
    return;
  }
  const Bytes data = read_file(path_);
  ByteReader r(data);
  r.expect_magic(kDbMagic, Errc::kFormat);
  while (!r.done()) {
    const std::uint32_t len = r.u32();
    ByteReader rec(r.raw(len));
    const std::uint8_t mode = rec.u8();
    if (mode > 1) throw Error(Errc::kFormat, "unknown enrollment mode in database");
    auto record = decode_record_body(static_cast<EnrollMode>(mode), rec.raw(rec.remaining()));
    records_.insert_or_assign(record.chip_id, std::move(record));
  }
}

bool ServerDb::enroll(const EnrollmentRecord& record) {
  check_record(record);
  std::unique_lock lock(mutex_);
  if (auto it = records_.find(record.chip_id); it != records_.end()) {
    if (it->second == record) return false;
    throw Error(Errc::kDuplicateChip, "chip " + record.chip_id + " already enrolled with a different record");
  }
  if (!path_.empty()) {
    const Bytes body = encode_record_body(record);
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(body.size() + 1));
    w.u8(static_cast<std::uint8_t>(record.mode));
    w.raw(body);
    const Bytes entry = w.take();
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out.write(reinterpret_cast<const char*>(entry.data()), static_cast<std::streamsize>(entry.size()));
    out.flush();
    if (!out) throw Error(Errc::kIo, "cannot append to " + path_);
  }
  records_.emplace(record.chip_id, record);
  return true;
}

std::optional<EnrollmentRecord> ServerDb::lookup(const std::string& chip_id) const {
  std::shared_lock lock(mutex_);
  if (auto it = records_.find(chip_id); it != records_.end()) return it->second;
  return std::nullopt;
}

std::size_t ServerDb::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

Key server_expected_key(const EnrollmentRecord& record, const StabilizationMap& session_map, std::size_t L) {
  if (record.mode != EnrollMode::kDynamic) throw Error(Errc::kInvalidArgument, "record is not dynamic");
  if (!record.orig_plane->bits.same_shape(session_map.mask)) {
    throw Error(Errc::kDimensionMismatch, "session map does not match enrolled planes");
  }
  Key key = stabilize_readout(record.orig_plane->bits, record.healed_plane->bits, session_map, L);
  key.provenance = record.chip_id + ":server";
  return key;
}

VerdictStatus verify(const ServerDb& db, const std::string& chip_id, const StabilizationMap* session_map,
                     std::span<const std::uint8_t> key_proof) {
  const auto record = db.lookup(chip_id);
  if (!record) throw Error(Errc::kUnknownChip, "chip " + chip_id + " is not enrolled");
  if (key_proof.empty()) return VerdictStatus::kReject;
  if (record->mode == EnrollMode::kStatic) {
    if (key_proof.size() > record->static_key.size()) return VerdictStatus::kReject;
    const std::span<const std::uint8_t> expected(record->static_key.data(), key_proof.size());
    return std::equal(expected.begin(), expected.end(), key_proof.begin()) ? VerdictStatus::kAccept
                                                                           : VerdictStatus::kReject;
  }
  if (!session_map) throw Error(Errc::kMalformedMap, "dynamic verification needs a session map");
  if (!record->orig_plane->bits.same_shape(session_map->mask)) {
    throw Error(Errc::kMalformedMap, "session map does not match enrolled planes");
  }
  if (key_proof.size() > session_map->usable_bits()) return VerdictStatus::kReject;
  const Key expected = server_expected_key(*record, *session_map, key_proof.size());
  return std::equal(expected.bits.begin(), expected.bits.end(), key_proof.begin()) ? VerdictStatus::kAccept
                                                                                   : VerdictStatus::kReject;
}

std::size_t session_overhead(const StabilizationMap& map, std::size_t /*L*/) {
  return kFrameHeaderBytes + encoded_map_size(map.size());
}

Frame ServerSession::handle(const Frame& request) {
  auto reply = [](VerdictStatus s) { return to_frame(VerdictMsg{s}); };
  Message msg;
  try {
    msg = from_frame(request);
  } catch (const Error& e) {
    return reply(e.code() == Errc::kMalformedMap ? VerdictStatus::kMalformedMap : VerdictStatus::kProtocolError);
  }
  try {
    if (auto* m = std::get_if<EnrollStaticMsg>(&msg)) {
      db_.enroll(m->record);
      return reply(VerdictStatus::kAccept);
    }
    if (auto* m = std::get_if<EnrollDynamicMsg>(&msg)) {
      db_.enroll(m->record);
      return reply(VerdictStatus::kAccept);
    }
    if (auto* m = std::get_if<SessionMapMsg>(&msg)) {
      pending_map_ = std::move(m->map);
      return reply(VerdictStatus::kAccept);
    }
    if (auto* m = std::get_if<KeyProofMsg>(&msg)) {
      std::optional<StabilizationMap> map = std::move(pending_map_);
      pending_map_.reset();
      return reply(verify(db_, m->chip_id, map ? &*map : nullptr, m->key));
    }
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::kDuplicateChip: return reply(VerdictStatus::kDuplicate);
      case Errc::kUnknownChip: return reply(VerdictStatus::kUnknownChip);
      case Errc::kMalformedMap: return reply(VerdictStatus::kMalformedMap);
      default: return reply(VerdictStatus::kProtocolError);
    }
  }
  return reply(VerdictStatus::kProtocolError);
}

void write_frame(int fd, const Frame& frame) { write_all(fd, encode_frame(frame)); }

std::optional<Frame> read_frame(int fd, FrameReader& reader) {
  std::uint8_t buf[4096];
  for (;;) {
    if (auto f = reader.next()) return f;
    const ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n == 0) {
      reader.finish();
      return std::nullopt;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kIo, std::string("read: ") + std::strerror(errno));
    }
    reader.feed(std::span(buf, static_cast<std::size_t>(n)));
  }
}

void serve_connection(int fd, ServerDb& db) {
  ServerSession session(db);
  FrameReader reader;
  for (;;) {
    std::optional<Frame> frame;
    try {
      frame = read_frame(fd, reader);
    } catch (const Error& e) {
      if (e.code() == Errc::kProtocol) write_frame(fd, to_frame(VerdictMsg{VerdictStatus::kProtocolError}));
      return;
    }
    if (!frame) return;
    write_frame(fd, session.handle(*frame));
  }
}

VerdictStatus request(int fd, FrameReader& reader, const Message& msg) {
  write_frame(fd, to_frame(msg));
  const auto reply = read_frame(fd, reader);
  if (!reply) throw Error(Errc::kProtocol, "server closed the connection");
  const Message m = from_frame(*reply);
  const auto* v = std::get_if<VerdictMsg>(&m);
  if (!v) throw Error(Errc::kProtocol, "expected a verdict");
  return v->status;
}

int listen_unix(const std::string& path) {
  const sockaddr_un addr = unix_address(path);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw Error(Errc::kIo, std::string("socket: ") + std::strerror(errno));
  ::unlink(path.c_str());
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, 16) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(Errc::kIo, "cannot listen on " + path + ": " + std::strerror(err));
  }
  return fd;
}

int connect_unix(const std::string& path) {
  const sockaddr_un addr = unix_address(path);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw Error(Errc::kIo, std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(Errc::kIo, "cannot connect to " + path + ": " + std::strerror(err));
  }
  return fd;
}

}  // namespace aschpuf
