// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace aschpuf {

/// splitmix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Key for an independent child stream identified by `tag`.
constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t tag) {
  return mix64(key ^ mix64(tag + 0x6a09e667f3bcc909ULL));
}

/// FNV-1a, used to turn opaque chip identifiers into stream keys.
std::uint64_t hash_string(std::string_view s);

/// Inverse standard-normal CDF (Wichura AS241, ~1e-16 relative accuracy).
double normal_quantile(double p);

/// Largest |z| a NoiseStream can produce is normal_quantile(2^-53) ~ 8.21.
inline constexpr double kNormalDrawBound = 8.5;

/// Counter-based random stream.
///
/// A stream is a (key, counter) pair; draw i is mix64(key + i * gamma). Streams
/// are cheap values: copying one duplicates the sequence, which is how the
/// experiments get common random numbers across skew settings and time points.
/// Child streams come either from fork(tag), which does not advance the
/// parent, or split(), which consumes one draw.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t key = 0) : key_(key) {}

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ + counter_);
  }
  /// Uniform on the open interval (0, 1) with 52-bit resolution.
  double uniform() { return uniform_from_bits(next_u64()); }
  double normal() { return normal_quantile(uniform()); }
  double exponential(double mean);
  std::uint64_t poisson(double mean);
  /// Advance as if n draws had been made.
  void skip(std::uint64_t n) { counter_ += n * 0x9e3779b97f4a7c15ULL; }

  NoiseStream fork(std::uint64_t tag) const { return NoiseStream(derive_key(key_, tag)); }
  NoiseStream split() { return NoiseStream(next_u64()); }

  std::uint64_t key() const { return key_; }

  static double uniform_from_bits(std::uint64_t bits) {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace aschpuf
