// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "aschpuf/bytes.hpp"
#include "aschpuf/puf_cell.hpp"

namespace aschpuf {

/// Parses `key = value` lines; `#` starts a comment. Keys not present keep
/// their defaults. Unknown keys and malformed values throw kConfig.
ModelConfig parse_model_config(std::string_view text);
ModelConfig load_model_config(const std::string& path);

/// Emits every key, in the order the parser documents, so that
/// parse_model_config(format_model_config(c)) == c.
std::string format_model_config(const ModelConfig& cfg);

/// ASCHPUF1 chip snapshot.
Bytes encode_chip(const ChipModel& chip);
ChipModel decode_chip(std::span<const std::uint8_t> bytes);

}  // namespace aschpuf
