// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>

#include "ctta/engine.hpp"
#include "ctta/model.hpp"
#include "ctta/rng.hpp"

namespace ctta {

/// A model together with the state needed to continue from it.
struct Checkpoint {
  ModelAssembly model;
  RngState rng;
  std::string config_hash;
  InitMode init_mode = InitMode::sda;
};

inline constexpr int kCheckpointVersion = 1;

/// Canonical JSON: sorted keys, shortest round-trip numbers, trailing newline.
/// Writing a loaded checkpoint reproduces the input byte for byte.
void write_checkpoint(std::ostream& out, const ModelAssembly& model, const RngState& rng, const std::string& config_hash,
                      InitMode init_mode);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const ModelAssembly& model, const RngState& rng,
                     const std::string& config_hash, InitMode init_mode);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ctta
