// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aschpuf {

enum class Errc {
  kInvalidArgument,
  kConfig,
  kTargetOutOfRange,
  kKeyTooLong,
  kEmptyPopulation,
  kNoDarkBits,
  kInsufficientPopulation,
  kDuplicateChip,
  kDimensionMismatch,
  kUnknownChip,
  kMalformedMap,
  kProtocol,
  kTruncated,
  kFormat,
  kIo,
};

std::string_view to_string(Errc code);

// Every failure in the library surfaces as this type; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace aschpuf
