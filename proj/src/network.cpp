// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "reinit_lab/network.hpp"

#include <algorithm>

namespace reinit_lab {

void NetworkSpec::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
  int prev = 0;
  for (int b : block_boundaries) {
    if (b <= prev || b >= num_layers())
      throw ConfigError("block_boundaries must be strictly increasing within (0, " +
                        std::to_string(num_layers()) + ")");
    prev = b;
  }
}

int NetworkSpec::block_of(int layer) const {
  return 1 + static_cast<int>(std::upper_bound(block_boundaries.begin(), block_boundaries.end(),
                                               layer) -
                              block_boundaries.begin());
}

int NetworkSpec::last_layer_of_block(int block) const {
  if (block < 1 || block > num_blocks()) throw ConfigError("block index out of range");
  return block == num_blocks() ? num_layers() - 1 : block_boundaries[block - 1] - 1;
}

LayerLayout::LayerLayout(std::vector<Segment> segments, std::vector<int> block_assignment)
    : segments_(std::move(segments)), block_assignment_(std::move(block_assignment)) {
  for (const auto& s : segments_) total_len_ += s.length;
  num_blocks_ = block_assignment_.empty()
                    ? 0
                    : *std::max_element(block_assignment_.begin(), block_assignment_.end());
  validate();
}

LayerLayout LayerLayout::from_spec(const NetworkSpec& spec) {
  spec.validate();
  std::vector<Segment> segs;
  std::vector<int> blocks;
  Index offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.layer_in(l);
    const int out = spec.layer_out(l);
    segs.push_back({l, SegmentRole::weight, offset, Index(in) * out, in, out});
    offset += Index(in) * out;
    segs.push_back({l, SegmentRole::bias, offset, out, in, out});
    offset += out;
    blocks.push_back(spec.block_of(l));
  }
  return LayerLayout(std::move(segs), std::move(blocks));
}

void LayerLayout::validate() const {
  if (segments_.size() != 2 * block_assignment_.size())
    throw ShapeError("layout needs one weight and one bias segment per layer");
  Index expected = 0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    const int layer = static_cast<int>(i / 2);
    const auto role = i % 2 == 0 ? SegmentRole::weight : SegmentRole::bias;
    if (s.layer_id != layer || s.role != role)
      throw ShapeError("layout segments out of depth order at segment " + std::to_string(i));
    if (s.offset != expected) throw ShapeError("layout segments are not contiguous");
    const Index want = role == SegmentRole::weight ? Index(s.fan_in) * s.fan_out : s.fan_out;
    if (s.length != want || s.length < 1) throw ShapeError("segment length inconsistent with fans");
    expected += s.length;
  }
  if (expected != total_len_) throw ShapeError("layout does not cover the parameter vector");
  int prev = 1;
  for (std::size_t l = 0; l < block_assignment_.size(); ++l) {
    const int b = block_assignment_[l];
    if (l == 0 ? b != 1 : (b != prev && b != prev + 1))
      throw ShapeError("blocks must be contiguous and numbered 1..K in depth order");
    prev = b;
  }
}

std::pair<Index, Index> LayerLayout::block_range(int block) const {
  if (block < 1 || block > num_blocks_) throw ConfigError("block index out of range");
  Index first = -1;
  Index last = -1;
  for (int l = 0; l < num_layers(); ++l) {
    if (block_assignment_[l] != block) continue;
    if (first < 0) first = weight_segment(l).offset;
    last = bias_segment(l).offset + bias_segment(l).length;
  }
  return {first, last};
}

}  // namespace reinit_lab
