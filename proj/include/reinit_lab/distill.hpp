// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_DISTILL_HPP
#define REINIT_LAB_DISTILL_HPP

#include <filesystem>
#include <span>
#include <string>
#include <type_traits>

#include "reinit_lab/network.hpp"

namespace reinit_lab {

/// Class probabilities of the previous stage's final model on every training
/// example. Immutable once built.
template <typename Scalar>
struct TeacherCache {
  Matrix<Scalar> probs;  // num_examples x num_classes
  int source_stage = 0;
  double beta = 1.0;

  Index num_examples() const { return probs.rows(); }
};

/// probs[i] = softmax(forward(params, inputs[i])), evaluated in chunks.
template <typename Scalar>
TeacherCache<Scalar> snapshot_teacher(const NetworkSpec& spec, const ParamVector<Scalar>& params,
                                      const std::type_identity_t<Matrix<Scalar>>& train_inputs,
                                      int source_stage, double beta,
                                      const std::type_identity_t<FrozenNormLayer<Scalar>>* norm = nullptr,
                                      Index chunk = 1024) {
  if (!params.values.allFinite()) throw NumericalError("teacher parameters are not finite");
  TeacherCache<Scalar> cache;
  cache.source_stage = source_stage;
  cache.beta = beta;
  cache.probs.resize(train_inputs.rows(), spec.num_classes);
  for (Index start = 0; start < train_inputs.rows(); start += chunk) {
    const Index n = std::min(chunk, train_inputs.rows() - start);
    cache.probs.middleRows(start, n) =
        softmax_rows(forward(spec, params, Matrix<Scalar>(train_inputs.middleRows(start, n)), norm));
  }
  return cache;
}

/// Teacher rows for a batch. Distillation is only defined from stage 2 on,
/// so a lookup while training stage 1 is a logic error.
template <typename Scalar>
Matrix<Scalar> distill_rows(const TeacherCache<Scalar>& cache, std::span<const Index> batch_indices,
                            int current_stage) {
  if (current_stage <= 1)
    throw LogicError("teacher cache consulted during stage " + std::to_string(current_stage));
  Matrix<Scalar> rows(static_cast<Index>(batch_indices.size()), cache.probs.cols());
  for (std::size_t i = 0; i < batch_indices.size(); ++i) {
    const Index idx = batch_indices[i];
    if (idx < 0 || idx >= cache.num_examples())
      throw ShapeError("teacher index " + std::to_string(idx) + " out of range");
    rows.row(static_cast<Index>(i)) = cache.probs.row(idx);
  }
  return rows;
}

/// Header line {rows, cols, source_stage, beta} then float32 little-endian,
/// row-major.
void save_teacher_cache(const std::filesystem::path& path, const TeacherCache<float>& cache);
TeacherCache<float> load_teacher_cache(const std::filesystem::path& path);

inline std::string teacher_cache_filename(int stage) {
  return "teacher_stage" + std::to_string(stage) + ".bin";
}

}  // namespace reinit_lab

#endif  // REINIT_LAB_DISTILL_HPP
