// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_OPTIM_HPP
#define REINIT_LAB_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "reinit_lab/error.hpp"
#include "reinit_lab/types.hpp"

namespace reinit_lab {

/// Heavy-ball SGD state with coupled L2 weight decay.
template <typename Scalar>
struct OptimState {
  Vector<Scalar> momentum_buffer;
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = 0;

  OptimState() = default;
  OptimState(Index num_params, Scalar momentum_, Scalar weight_decay_)
      : momentum_buffer(Vector<Scalar>::Zero(num_params)),
        momentum(momentum_),
        weight_decay(weight_decay_) {
    if (!(momentum >= Scalar(0) && momentum < Scalar(1)))
      throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= Scalar(0))) throw ConfigError("weight decay must be >= 0");
  }

  void reset() { momentum_buffer.setZero(); }
};

/// g = grads + wd * params; buffer = momentum * buffer + g; params -= lr * buffer.
/// `step_index` only labels the NumericalError raised on non-finite gradients.
template <typename Scalar>
void sgd_step(Eigen::Ref<Vector<Scalar>> params, const Eigen::Ref<const Vector<Scalar>>& grads,
              OptimState<Scalar>& state, Scalar lr, std::int64_t step_index = 0) {
  if (params.size() != grads.size() || params.size() != state.momentum_buffer.size())
    throw ShapeError("sgd_step: parameter, gradient and buffer lengths differ");
  if (!std::isfinite(lr) || lr < Scalar(0)) throw ConfigError("learning rate must be finite and >= 0");
  if (!grads.allFinite()) throw NumericalError("non-finite gradient", step_index);
  state.momentum_buffer = state.momentum * state.momentum_buffer + grads + state.weight_decay * params;
  params -= lr * state.momentum_buffer;
}

enum class ScheduleKind { constant, cosine_per_stage };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double eta_max = 0.1;
  double eta_min = 0.0;
  std::int64_t steps_per_stage = 1;
};

/// Learning rate at step `step_in_stage` of a stage, 0 <= s <= S. Cosine
/// restarts at eta_max on every stage start.
inline double lr_at(const LrSchedule& schedule, std::int64_t step_in_stage) {
  if (!(schedule.eta_max > 0.0) || schedule.eta_min < 0.0 || schedule.eta_min > schedule.eta_max)
    throw ConfigError("schedule needs 0 <= eta_min <= eta_max and eta_max > 0");
  if (schedule.steps_per_stage < 1) throw ConfigError("steps_per_stage must be >= 1");
  if (step_in_stage < 0 || step_in_stage > schedule.steps_per_stage)
    throw ConfigError("step " + std::to_string(step_in_stage) + " outside [0, " +
                      std::to_string(schedule.steps_per_stage) + "]");
  if (schedule.kind == ScheduleKind::constant) return schedule.eta_max;
  const double progress =
      static_cast<double>(step_in_stage) / static_cast<double>(schedule.steps_per_stage);
  return schedule.eta_min +
         0.5 * (schedule.eta_max - schedule.eta_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace reinit_lab

#endif  // REINIT_LAB_OPTIM_HPP
