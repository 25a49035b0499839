// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/error.hpp"

namespace aschpuf {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kConfig: return "ConfigError";
    case Errc::kTargetOutOfRange: return "TargetOutOfRange";
    case Errc::kKeyTooLong: return "KeyTooLong";
    case Errc::kEmptyPopulation: return "EmptyPopulation";
    case Errc::kNoDarkBits: return "NoDarkBits";
    case Errc::kInsufficientPopulation: return "InsufficientPopulation";
    case Errc::kDuplicateChip: return "DuplicateChip";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kUnknownChip: return "UnknownChip";
    case Errc::kMalformedMap: return "MalformedMap";
    case Errc::kProtocol: return "ProtocolError";
    case Errc::kTruncated: return "Truncated";
    case Errc::kFormat: return "FormatError";
    case Errc::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace aschpuf
