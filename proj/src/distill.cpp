// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "reinit_lab/distill.hpp"

#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "reinit_lab/checkpoint.hpp"

namespace reinit_lab {

void save_teacher_cache(const std::filesystem::path& path, const TeacherCache<float>& cache) {
  nlohmann::json header = {{"format", "reinit-lab-teacher"},
                           {"rows", cache.probs.rows()},
                           {"cols", cache.probs.cols()},
                           {"source_stage", cache.source_stage},
                           {"beta", cache.beta}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = cache.probs;
  write_f32_le(out, row_major.data(), static_cast<std::size_t>(row_major.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

TeacherCache<float> load_teacher_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header line", 0);
  TeacherCache<float> cache;
  Index rows = 0;
  Index cols = 0;
  try {
    const auto header = nlohmann::json::parse(line);
    rows = header.at("rows").get<Index>();
    cols = header.at("cols").get<Index>();
    cache.source_stage = header.at("source_stage").get<int>();
    cache.beta = header.at("beta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad teacher cache header: " + e.what(), 0);
  }
  if (rows < 0 || cols < 1) throw FormatError(path.string() + ": invalid table shape", 0);
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> table(rows, cols);
  read_f32_le(in, table.data(), static_cast<std::size_t>(table.size()), path);
  cache.probs = table;
  return cache;
}

}  // namespace reinit_lab
