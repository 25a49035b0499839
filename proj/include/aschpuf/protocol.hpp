// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aschpuf/bytes.hpp"
#include "aschpuf/keygen.hpp"
#include "aschpuf/stabilization_map.hpp"

namespace aschpuf {

enum class EnrollMode : std::uint8_t { kStatic = 0, kDynamic = 1 };

struct EnrollmentRecord {
  std::string chip_id;
  EnrollMode mode = EnrollMode::kStatic;
  std::vector<std::uint8_t> static_key;         // static only
  std::optional<StabilizationMap> enrolled_map;  // static only
  std::optional<BitPlane> orig_plane;            // dynamic only
  std::optional<BitPlane> healed_plane;          // dynamic only

  bool operator==(const EnrollmentRecord&) const = default;
};

EnrollmentRecord make_static_record(std::string chip_id, std::vector<std::uint8_t> key, StabilizationMap map);
EnrollmentRecord make_dynamic_record(std::string chip_id, BitPlane orig, BitPlane healed);

/// Throws kInvalidArgument unless exactly the fields of record.mode are set.
void check_record(const EnrollmentRecord& record);

/// Record body without the mode byte; used both on the wire and in the DB.
Bytes encode_record_body(const EnrollmentRecord& record);
EnrollmentRecord decode_record_body(EnrollMode mode, std::span<const std::uint8_t> body);

enum class MessageType : std::uint8_t {
  kEnrollStatic = 1,
  kEnrollDynamic = 2,
  kSessionMap = 3,
  kKeyProof = 4,
  kVerdict = 5,
};

enum class VerdictStatus : std::uint8_t {
  kAccept = 0,
  kReject = 1,
  kUnknownChip = 2,
  kMalformedMap = 3,
  kDuplicate = 4,
  kProtocolError = 5,
};

std::string_view to_string(VerdictStatus status);

struct Frame {
  MessageType type = MessageType::kVerdict;
  Bytes payload;

  bool operator==(const Frame&) const = default;
};

inline constexpr std::size_t kFrameHeaderBytes = 5;
inline constexpr std::uint32_t kMaxFrameLength = 16u << 20;

/// u32 LE length of (tag + payload), u8 tag, payload.
Bytes encode_frame(const Frame& frame);

/// Decodes exactly one frame that spans all of `bytes`. Missing bytes throw
/// kTruncated; a bad length, unknown tag or trailing data throw kProtocol.
Frame decode_frame(std::span<const std::uint8_t> bytes);

/// Incremental decoder for a byte stream.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> data);
  /// Next complete frame, if buffered. Throws kProtocol on a bad header.
  std::optional<Frame> next();
  std::size_t buffered() const { return buf_.size() - pos_; }
  /// Call at end of stream; throws kTruncated if a partial frame is pending.
  void finish() const;

 private:
  Bytes buf_;
  std::size_t pos_ = 0;
};

struct EnrollStaticMsg {
  EnrollmentRecord record;
  bool operator==(const EnrollStaticMsg&) const = default;
};
struct EnrollDynamicMsg {
  EnrollmentRecord record;
  bool operator==(const EnrollDynamicMsg&) const = default;
};
struct SessionMapMsg {
  StabilizationMap map;
  bool operator==(const SessionMapMsg&) const = default;
};
struct KeyProofMsg {
  std::string chip_id;
  std::vector<std::uint8_t> key;
  bool operator==(const KeyProofMsg&) const = default;
};
struct VerdictMsg {
  VerdictStatus status = VerdictStatus::kAccept;
  bool operator==(const VerdictMsg&) const = default;
};

using Message = std::variant<EnrollStaticMsg, EnrollDynamicMsg, SessionMapMsg, KeyProofMsg, VerdictMsg>;

Frame to_frame(const Message& msg);
/// Strict payload decoding; malformed maps throw kMalformedMap, anything else kProtocol.
Message from_frame(const Frame& frame);

inline Bytes encode_message(const Message& msg) { return encode_frame(to_frame(msg)); }
inline Message decode_message(std::span<const std::uint8_t> bytes) { return from_frame(decode_frame(bytes)); }

/// Enrollment store. Many readers or one writer at a time. With a path the
/// store is backed by an append-only ASCHDB01 file.
class ServerDb {
 public:
  ServerDb() = default;
  explicit ServerDb(std::string path);

  /// Returns true for a new record, false for an identical re-enroll.
  /// A conflicting record for a known chip throws kDuplicateChip.
  bool enroll(const EnrollmentRecord& record);
  std::optional<EnrollmentRecord> lookup(const std::string& chip_id) const;
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, EnrollmentRecord> records_;
  std::string path_;
};

/// Mirror of the device readout over the enrolled golden planes.
Key server_expected_key(const EnrollmentRecord& record, const StabilizationMap& session_map, std::size_t L);

/// Accepts iff key_proof equals the expected key of the same length. Static
/// records ignore session_map. Throws kUnknownChip, or kMalformedMap when a
/// dynamic record gets no map or a map of the wrong shape.
VerdictStatus verify(const ServerDb& db, const std::string& chip_id, const StabilizationMap* session_map,
                     std::span<const std::uint8_t> key_proof);

/// Bytes on the wire for one SESSION_MAP frame. Independent of key values and L.
std::size_t session_overhead(const StabilizationMap& map, std::size_t L);

/// Per-connection server state machine. Every request gets a VERDICT reply;
/// a SESSION_MAP is remembered for the next KEY_PROOF.
class ServerSession {
 public:
  explicit ServerSession(ServerDb& db) : db_(db) {}
  Frame handle(const Frame& request);

 private:
  ServerDb& db_;
  std::optional<StabilizationMap> pending_map_;
};

/// Blocking frame I/O on a stream socket or pipe. read returns nullopt on a
/// clean EOF between frames and throws kTruncated on EOF inside one.
void write_frame(int fd, const Frame& frame);
std::optional<Frame> read_frame(int fd, FrameReader& reader);

/// Serves one connection until the peer closes it.
void serve_connection(int fd, ServerDb& db);

/// Sends one request frame and waits for the VERDICT reply.
VerdictStatus request(int fd, FrameReader& reader, const Message& msg);

/// Unix-domain socket helpers.
int listen_unix(const std::string& path);
int connect_unix(const std::string& path);

}  // namespace aschpuf
