// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "reinit_lab/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <string>
#include <vector>

namespace reinit_lab {

void to_json(nlohmann::json& j, const NetworkSpec& spec) {
  j = {{"input_dim", spec.input_dim},
       {"hidden_dims", spec.hidden_dims},
       {"num_classes", spec.num_classes},
       {"block_boundaries", spec.block_boundaries}};
}

void from_json(const nlohmann::json& j, NetworkSpec& spec) {
  spec.input_dim = j.value("input_dim", spec.input_dim);
  spec.hidden_dims = j.value("hidden_dims", spec.hidden_dims);
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.block_boundaries = j.value("block_boundaries", spec.block_boundaries);
}

void to_json(nlohmann::json& j, const LayerLayout& layout) {
  j["total_len"] = layout.total_len();
  j["block_assignment"] = layout.block_assignment();
  auto& segs = j["segments"] = nlohmann::json::array();
  for (const auto& s : layout.segments())
    segs.push_back({{"layer_id", s.layer_id},
                    {"role", s.role == SegmentRole::weight ? "weight" : "bias"},
                    {"offset", s.offset},
                    {"length", s.length},
                    {"fan_in", s.fan_in},
                    {"fan_out", s.fan_out}});
}

void to_json(nlohmann::json& j, const FrozenNormLayer<float>& norm) {
  j = {{"block", norm.block},
       {"after_layer", norm.after_layer},
       {"mean", std::vector<float>(norm.mean.begin(), norm.mean.end())},
       {"std", std::vector<float>(norm.std.begin(), norm.std.end())}};
}

void from_json(const nlohmann::json& j, FrozenNormLayer<float>& norm) {
  norm.block = j.at("block").get<int>();
  norm.after_layer = j.at("after_layer").get<int>();
  auto mean = j.at("mean").get<std::vector<float>>();
  auto sd = j.at("std").get<std::vector<float>>();
  norm.mean = Eigen::Map<const Vector<float>>(mean.data(), Index(mean.size()));
  norm.std = Eigen::Map<const Vector<float>>(sd.data(), Index(sd.size()));
}

void write_f32_le(std::ostream& out, const float* data, std::size_t count) {
  std::vector<unsigned char> bytes(count * 4);
  for (std::size_t i = 0; i < count; ++i) {
    const auto u = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void read_f32_le(std::istream& in, float* data, std::size_t count, const std::filesystem::path& path) {
  const auto start = static_cast<std::uint64_t>(in.tellg());
  std::vector<unsigned char> bytes(count * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    throw FormatError(path.string() + ": truncated float32 payload",
                      start + static_cast<std::uint64_t>(in.gcount()));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= std::uint32_t(bytes[4 * i + b]) << (8 * b);
    data[i] = std::bit_cast<float>(u);
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamVector<float>& params,
                     const CheckpointInfo& info) {
  const auto layout = LayerLayout::from_spec(info.spec);
  if (!params.layout || *params.layout != layout)
    throw ShapeError("checkpoint parameters do not match the network spec");
  nlohmann::json header = {{"format", "reinit-lab-checkpoint"},
                           {"version", 1},
                           {"spec", info.spec},
                           {"layout", layout},
                           {"seed", info.seed},
                           {"stage", info.stage},
                           {"epoch", info.epoch},
                           {"num_params", params.size()}};
  if (info.norm) header["frozen_norm"] = *info.norm;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  write_f32_le(out, params.values.data(), static_cast<std::size_t>(params.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header line", 0);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what(), 0);
  }
  Checkpoint ck;
  try {
    ck.info.spec = header.at("spec").get<NetworkSpec>();
    ck.info.seed = header.at("seed").get<std::uint64_t>();
    ck.info.stage = header.at("stage").get<int>();
    ck.info.epoch = header.at("epoch").get<int>();
    if (header.contains("frozen_norm"))
      ck.info.norm = header["frozen_norm"].get<FrozenNormLayer<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": incomplete checkpoint header: " + e.what(), 0);
  }
  auto layout = std::make_shared<const LayerLayout>(LayerLayout::from_spec(ck.info.spec));
  nlohmann::json stored_layout = header.value("layout", nlohmann::json{});
  if (stored_layout != nlohmann::json(*layout))
    throw FormatError(path.string() + ": stored layout disagrees with stored spec", 0);
  if (header.value("num_params", Index(-1)) != layout->total_len())
    throw FormatError(path.string() + ": num_params disagrees with layout", 0);
  ck.params = ParamVector<float>(layout);
  read_f32_le(in, ck.params.values.data(), static_cast<std::size_t>(layout->total_len()), path);
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(path.string() + ": trailing bytes after parameters",
                      static_cast<std::uint64_t>(in.tellg()));
  return ck;
}

}  // namespace reinit_lab
