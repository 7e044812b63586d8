// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "ovqa/params.hpp"

namespace ovqa::diff {

/// Checkpoint file: a plain-text manifest of (name, shape, element offset)
/// followed by the raw little-endian 64-bit floats concatenated in manifest
/// order. Parameters and Adam moments are stored as separate manifest
/// entries (param/<name>, adam_m/<name>, adam_v/<name>), so save -> load ->
/// save round-trips byte-exactly.
void save_checkpoint(const std::string& path, const ParamStore& store, std::int64_t epoch);

struct Checkpoint {
  ParamStore store;
  std::int64_t epoch = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ovqa::diff
