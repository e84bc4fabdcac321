// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_REINIT_HPP
#define REINIT_LAB_REINIT_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reinit_lab/network.hpp"

namespace reinit_lab {

/// N epochs split into T stages of floor(N/T) epochs each.
struct StagePlan {
  int total_epochs = 1;
  int num_stages = 1;
  int epochs_per_stage = 1;

  int trained_epochs() const { return num_stages * epochs_per_stage; }
};

StagePlan make_stage_plan(int total_epochs, int num_stages);

enum class ReinitKind { none, shrink_perturb, layer_wise, full };
enum class RescaleMode { per_block, aggregate };

std::string to_string(ReinitKind kind);
/// Accepts the long names and the CLI spellings none|sp|layerwise|full.
ReinitKind parse_reinit_kind(const std::string& name);
std::string to_string(RescaleMode mode);
RescaleMode parse_rescale_mode(const std::string& name);

struct ReinitSpec {
  ReinitKind kind = ReinitKind::none;
  double lambda = 0.4;  // shrink
  double gamma = 0.1;   // perturb
  int blocks = 1;       // K, layer-wise only
  int repeats = 1;      // M, layer-wise only
  RescaleMode rescale_mode = RescaleMode::per_block;

  /// Throws ConfigError when the spec cannot drive `plan` on `layout`.
  void validate(const StagePlan& plan, const LayerLayout& layout) const;
};

/// Seed of the fresh draw used when leaving stage `stage`.
inline std::uint64_t fresh_draw_seed(std::uint64_t base_seed, int stage) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(stage));
}

/// lambda * theta + gamma * theta_init.
template <typename Scalar>
ParamVector<Scalar> shrink_perturb(const ParamVector<Scalar>& theta,
                                   const ParamVector<Scalar>& theta_init, double lambda,
                                   double gamma) {
  if (!theta.same_layout(theta_init)) throw ShapeError("shrink_perturb: layout mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0) || !(gamma >= 0.0 && gamma <= 1.0))
    throw ConfigError("shrink_perturb: lambda and gamma must lie in [0, 1]");
  return ParamVector<Scalar>(theta.layout, static_cast<Scalar>(lambda) * theta.values +
                                               static_cast<Scalar>(gamma) * theta_init.values);
}

using BlockMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Number of leading blocks kept after stage t: ceil(t / M).
inline int kept_blocks(int stage, int repeats) { return (stage + repeats - 1) / repeats; }

/// m_i = 1 iff parameter i lies in the first ceil(t/M) blocks; 1 <= t <= K*M.
BlockMask block_mask(const LayerLayout& layout, int stage, int repeats);

template <typename Scalar>
struct LayerwiseResult {
  ParamVector<Scalar> params;
  FrozenNormLayer<Scalar> norm;
};

inline constexpr double kFrozenNormStdFloor = 1e-5;

/// Keeps the first ceil(t/M) blocks of `theta`, restores each kept block's
/// norm to its initialization value (or all kept blocks jointly in aggregate
/// mode), takes the rest from `theta_init`, and builds the frozen
/// normalization layer for the last kept block from `stats_batch`.
template <typename Scalar>
LayerwiseResult<Scalar> layerwise_reinit(const ParamVector<Scalar>& theta,
                                         const ParamVector<Scalar>& theta_init, int stage,
                                         int repeats, const std::vector<double>& init_block_norms,
                                         const Matrix<Scalar>& stats_batch,
                                         const NetworkSpec& spec,
                                         RescaleMode mode = RescaleMode::per_block) {
  if (!theta.same_layout(theta_init)) throw ShapeError("layerwise_reinit: layout mismatch");
  const auto& layout = *theta.layout;
  if (static_cast<int>(init_block_norms.size()) != layout.num_blocks())
    throw ShapeError("layerwise_reinit: need one initial norm per block");
  if (stats_batch.rows() == 0) throw ConfigError("layerwise_reinit: empty statistics batch");

  const BlockMask mask = block_mask(layout, stage, repeats);
  const int kept = kept_blocks(stage, repeats);
  ParamVector<Scalar> out(theta.layout, mask.select(theta.values, theta_init.values));

  if (mode == RescaleMode::per_block) {
    for (int b = 1; b <= kept; ++b) {
      const double current = weight_norm(out.block(b));
      if (!(current > 0.0) || !std::isfinite(current))
        throw NumericalError("layerwise_reinit: block " + std::to_string(b) + " has norm " +
                             std::to_string(current));
      out.block(b) *= static_cast<Scalar>(init_block_norms[b - 1] / current);
    }
  } else {
    double current_sq = 0.0;
    double target_sq = 0.0;
    for (int b = 1; b <= kept; ++b) {
      current_sq += out.block(b).template cast<double>().squaredNorm();
      target_sq += init_block_norms[b - 1] * init_block_norms[b - 1];
    }
    if (!(current_sq > 0.0) || !std::isfinite(current_sq))
      throw NumericalError("layerwise_reinit: kept prefix has zero norm");
    const auto scale = static_cast<Scalar>(std::sqrt(target_sq / current_sq));
    const Index end = layout.block_range(kept).second;
    out.values.head(end) *= scale;
  }

  FrozenNormLayer<Scalar> norm;
  norm.block = kept;
  norm.after_layer = spec.last_layer_of_block(kept);
  const Matrix<double> acts =
      forward_prefix(spec, out, stats_batch, norm.after_layer).template cast<double>();
  const Vector<double> mean = acts.colwise().mean().transpose();
  const Vector<double> var =
      (acts.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  norm.mean = mean.template cast<Scalar>();
  // smallest Scalar >= the floor
  Scalar floor = static_cast<Scalar>(kFrozenNormStdFloor);
  if (static_cast<double>(floor) < kFrozenNormStdFloor) floor = std::nextafter(floor, Scalar(1));
  norm.std = var.array().sqrt().template cast<Scalar>().max(floor).matrix();
  return {std::move(out), std::move(norm)};
}

template <typename Scalar>
struct ReinitContext {
  std::vector<double> init_block_norms;           // layer-wise only
  const Matrix<Scalar>* stats_batch = nullptr;    // layer-wise only
};

template <typename Scalar>
struct ReinitOutcome {
  ParamVector<Scalar> params;
  /// Set only by layer-wise re-init; replaces any existing frozen layer.
  std::optional<FrozenNormLayer<Scalar>> norm;
  /// The fresh draw from p_init (empty for kind none).
  std::optional<ParamVector<Scalar>> fresh;
  std::uint64_t fresh_seed = 0;
};

/// Parameters for stage t+1 given the end-of-stage-t parameters.
template <typename Scalar>
ReinitOutcome<Scalar> apply_reinit(const ReinitSpec& rspec, const NetworkSpec& spec,
                                   const ParamVector<Scalar>& theta_end,
                                   const InitDistribution& dist, int stage,
                                   const ReinitContext<Scalar>& ctx = {}) {
  if (stage < 1) throw ConfigError("apply_reinit: stage index must be >= 1");
  ReinitOutcome<Scalar> r;
  if (rspec.kind == ReinitKind::none) {
    r.params = theta_end;
    return r;
  }
  r.fresh_seed = fresh_draw_seed(dist.seed, stage);
  r.fresh = init_params<Scalar>(spec, InitDistribution{r.fresh_seed});
  if (!r.fresh->same_layout(theta_end)) throw ShapeError("apply_reinit: layout mismatch");
  switch (rspec.kind) {
    case ReinitKind::full:
      r.params = *r.fresh;
      break;
    case ReinitKind::shrink_perturb:
      r.params = shrink_perturb(theta_end, *r.fresh, rspec.lambda, rspec.gamma);
      break;
    case ReinitKind::layer_wise: {
      if (!ctx.stats_batch) throw ConfigError("apply_reinit: layer-wise needs a statistics batch");
      auto lw = layerwise_reinit(theta_end, *r.fresh, stage, rspec.repeats, ctx.init_block_norms,
                                 *ctx.stats_batch, spec, rspec.rescale_mode);
      r.params = std::move(lw.params);
      r.norm = std::move(lw.norm);
      break;
    }
    case ReinitKind::none:
      break;
  }
  if (!r.params.values.allFinite()) throw NumericalError("re-initialized parameters are not finite");
  return r;
}

}  // namespace reinit_lab

#endif  // REINIT_LAB_REINIT_HPP
