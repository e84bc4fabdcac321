// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "reinit_lab/reinit.hpp"

namespace reinit_lab {

StagePlan make_stage_plan(int total_epochs, int num_stages) {
  if (num_stages < 1) throw ConfigError("number of stages must be >= 1");
  if (num_stages > total_epochs)
    throw ConfigError("cannot split " + std::to_string(total_epochs) + " epochs into " +
                      std::to_string(num_stages) + " stages");
  return {total_epochs, num_stages, total_epochs / num_stages};
}

std::string to_string(ReinitKind kind) {
  switch (kind) {
    case ReinitKind::none: return "none";
    case ReinitKind::shrink_perturb: return "shrink_perturb";
    case ReinitKind::layer_wise: return "layer_wise";
    case ReinitKind::full: return "full";
  }
  return "none";
}

ReinitKind parse_reinit_kind(const std::string& name) {
  if (name == "none") return ReinitKind::none;
  if (name == "sp" || name == "shrink_perturb") return ReinitKind::shrink_perturb;
  if (name == "layerwise" || name == "layer_wise") return ReinitKind::layer_wise;
  if (name == "full" || name == "ban") return ReinitKind::full;
  throw ConfigError("unknown re-initialization kind '" + name + "'");
}

std::string to_string(RescaleMode mode) {
  return mode == RescaleMode::per_block ? "per_block" : "aggregate";
}

RescaleMode parse_rescale_mode(const std::string& name) {
  if (name == "per_block") return RescaleMode::per_block;
  if (name == "aggregate") return RescaleMode::aggregate;
  throw ConfigError("unknown rescale mode '" + name + "'");
}

void ReinitSpec::validate(const StagePlan& plan, const LayerLayout& layout) const {
  if (kind == ReinitKind::shrink_perturb &&
      (!(lambda >= 0.0 && lambda <= 1.0) || !(gamma >= 0.0 && gamma <= 1.0)))
    throw ConfigError("shrink & perturb needs lambda, gamma in [0, 1]");
  if (kind == ReinitKind::layer_wise) {
    if (blocks != layout.num_blocks())
      throw ConfigError("layer-wise K=" + std::to_string(blocks) + " but the network has " +
                        std::to_string(layout.num_blocks()) + " blocks");
    if (repeats < 1) throw ConfigError("layer-wise M must be >= 1");
    if (plan.num_stages != blocks * repeats)
      throw ConfigError("layer-wise needs T == K*M (T=" + std::to_string(plan.num_stages) +
                        ", K=" + std::to_string(blocks) + ", M=" + std::to_string(repeats) + ")");
  }
}

BlockMask block_mask(const LayerLayout& layout, int stage, int repeats) {
  if (repeats < 1) throw ConfigError("block_mask: M must be >= 1");
  if (stage < 1 || stage > layout.num_blocks() * repeats)
    throw ConfigError("block_mask: stage " + std::to_string(stage) + " outside [1, K*M]");
  BlockMask mask = BlockMask::Constant(layout.total_len(), false);
  const Index end = layout.block_range(kept_blocks(stage, repeats)).second;
  mask.head(end).setConstant(true);
  return mask;
}

}  // namespace reinit_lab
