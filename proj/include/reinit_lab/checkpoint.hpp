// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_CHECKPOINT_HPP
#define REINIT_LAB_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include <nlohmann/json.hpp>

#include "reinit_lab/network.hpp"

namespace reinit_lab {

void to_json(nlohmann::json& j, const NetworkSpec& spec);
void from_json(const nlohmann::json& j, NetworkSpec& spec);
void to_json(nlohmann::json& j, const LayerLayout& layout);
void to_json(nlohmann::json& j, const FrozenNormLayer<float>& norm);
void from_json(const nlohmann::json& j, FrozenNormLayer<float>& norm);

struct CheckpointInfo {
  NetworkSpec spec;
  std::uint64_t seed = 0;
  int stage = 0;
  int epoch = 0;
  std::optional<FrozenNormLayer<float>> norm;
};

struct Checkpoint {
  CheckpointInfo info;
  ParamVector<float> params;
};

/// One JSON header line (spec, layout, seed, stage, epoch, optional frozen
/// norm statistics) followed by the parameters as little-endian float32.
void save_checkpoint(const std::filesystem::path& path, const ParamVector<float>& params,
                     const CheckpointInfo& info);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Little-endian float32 block I/O shared by checkpoints and teacher caches.
void write_f32_le(std::ostream& out, const float* data, std::size_t count);
void read_f32_le(std::istream& in, float* data, std::size_t count, const std::filesystem::path& path);

}  // namespace reinit_lab

#endif  // REINIT_LAB_CHECKPOINT_HPP
