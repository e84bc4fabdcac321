// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_NETWORK_HPP
#define REINIT_LAB_NETWORK_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "reinit_lab/error.hpp"
#include "reinit_lab/types.hpp"

namespace reinit_lab {

/// Fully connected ReLU network. Layer l maps layer_in(l) -> layer_out(l);
/// the last layer produces logits and has no activation.
///
/// `block_boundaries` holds the first layer index of every block after the
/// first, so {} is a single block and {2} on a 3-layer net gives
/// blocks {L0, L1 | L2}.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int num_classes = 0;
  std::vector<int> block_boundaries;

  int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
  int num_blocks() const { return static_cast<int>(block_boundaries.size()) + 1; }
  int layer_in(int layer) const { return layer == 0 ? input_dim : hidden_dims[layer - 1]; }
  int layer_out(int layer) const {
    return layer == num_layers() - 1 ? num_classes : hidden_dims[layer];
  }
  /// 1-based block index of a layer.
  int block_of(int layer) const;
  /// Index of the deepest layer in a 1-based block.
  int last_layer_of_block(int block) const;

  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

enum class SegmentRole { weight, bias };

struct Segment {
  int layer_id = 0;
  SegmentRole role = SegmentRole::weight;
  Index offset = 0;
  Index length = 0;
  int fan_in = 0;
  int fan_out = 0;

  bool operator==(const Segment&) const = default;
};

/// Placement of every layer's weight (fan_out x fan_in, column-major) and
/// bias inside the flat parameter vector. Segments are ordered by depth,
/// so every block occupies one contiguous range.
class LayerLayout {
 public:
  LayerLayout() = default;
  LayerLayout(std::vector<Segment> segments, std::vector<int> block_assignment);

  static LayerLayout from_spec(const NetworkSpec& spec);

  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<int>& block_assignment() const { return block_assignment_; }
  Index total_len() const { return total_len_; }
  int num_layers() const { return static_cast<int>(block_assignment_.size()); }
  int num_blocks() const { return num_blocks_; }

  const Segment& weight_segment(int layer) const { return segments_[2 * layer]; }
  const Segment& bias_segment(int layer) const { return segments_[2 * layer + 1]; }

  /// Half-open parameter range [first, second) of a 1-based block.
  std::pair<Index, Index> block_range(int block) const;

  /// Checks contiguity, coverage and block ordering; throws ShapeError.
  void validate() const;

  bool operator==(const LayerLayout&) const = default;

 private:
  std::vector<Segment> segments_;
  std::vector<int> block_assignment_;
  Index total_len_ = 0;
  int num_blocks_ = 0;
};

/// Flat parameter store together with its layout.
template <typename Scalar>
struct ParamVector {
  std::shared_ptr<const LayerLayout> layout;
  Vector<Scalar> values;

  ParamVector() = default;
  ParamVector(std::shared_ptr<const LayerLayout> l, Vector<Scalar> v)
      : layout(std::move(l)), values(std::move(v)) {
    if (!layout || values.size() != layout->total_len())
      throw ShapeError("parameter vector length does not match its layout");
  }
  explicit ParamVector(std::shared_ptr<const LayerLayout> l)
      : ParamVector(l, Vector<Scalar>::Zero(l ? l->total_len() : 0)) {}

  Index size() const { return values.size(); }

  Eigen::Map<const Matrix<Scalar>> weight(int layer) const {
    const auto& s = layout->weight_segment(layer);
    return {values.data() + s.offset, s.fan_out, s.fan_in};
  }
  Eigen::Map<Matrix<Scalar>> weight(int layer) {
    const auto& s = layout->weight_segment(layer);
    return {values.data() + s.offset, s.fan_out, s.fan_in};
  }
  Eigen::Map<const Vector<Scalar>> bias(int layer) const {
    const auto& s = layout->bias_segment(layer);
    return {values.data() + s.offset, s.length};
  }

  auto block(int b) const {
    auto [first, last] = layout->block_range(b);
    return values.segment(first, last - first);
  }
  auto block(int b) {
    auto [first, last] = layout->block_range(b);
    return values.segment(first, last - first);
  }

  template <typename To>
  ParamVector<To> cast() const {
    return ParamVector<To>(layout, values.template cast<To>());
  }

  bool same_layout(const ParamVector& other) const {
    return layout && other.layout && (layout == other.layout || *layout == *other.layout);
  }
};

/// Standardizes the output of one layer with fixed statistics:
/// y = (x - mean) / std. Holds no trainable parameters.
template <typename Scalar>
struct FrozenNormLayer {
  int block = 0;        // 1-based block whose output is normalized
  int after_layer = 0;  // deepest layer of that block
  Vector<Scalar> mean;
  Vector<Scalar> std;

  static constexpr Index trainable_parameter_count = 0;

  template <typename To>
  FrozenNormLayer<To> cast() const {
    return {block, after_layer, mean.template cast<To>(), std.template cast<To>()};
  }
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
struct InitDistribution {
  std::uint64_t seed = 0;
};

template <typename Scalar>
ParamVector<Scalar> init_params(const NetworkSpec& spec, const InitDistribution& dist) {
  spec.validate();
  auto layout = std::make_shared<const LayerLayout>(LayerLayout::from_spec(spec));
  ParamVector<Scalar> params(layout);
  std::mt19937_64 rng(dist.seed);
  for (const auto& seg : layout->segments()) {
    if (seg.role != SegmentRole::weight) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(seg.fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < seg.length; ++i)
      params.values[seg.offset + i] = static_cast<Scalar>(u(rng));
  }
  return params;
}

namespace detail {

template <typename Scalar>
void check_params(const NetworkSpec& spec, const ParamVector<Scalar>& params) {
  if (!params.layout || *params.layout != LayerLayout::from_spec(spec))
    throw ShapeError("parameter layout does not match network spec");
}

template <typename Scalar>
void check_norm(const NetworkSpec& spec, const FrozenNormLayer<Scalar>* norm) {
  if (!norm) return;
  if (norm->after_layer < 0 || norm->after_layer >= spec.num_layers())
    throw ShapeError("frozen normalization layer placed outside the network");
  const Index width = spec.layer_out(norm->after_layer);
  if (norm->mean.size() != width || norm->std.size() != width)
    throw ShapeError("frozen normalization statistics have the wrong width");
}

template <typename Scalar>
Matrix<Scalar> affine(const ParamVector<Scalar>& params, int layer, const Matrix<Scalar>& input) {
  Matrix<Scalar> z = input * params.weight(layer).transpose();
  z.rowwise() += params.bias(layer).transpose();
  return z;
}

template <typename Scalar>
void standardize(Matrix<Scalar>& x, const FrozenNormLayer<Scalar>& norm) {
  x.rowwise() -= norm.mean.transpose();
  x.array().rowwise() /= norm.std.transpose().array();
}

/// Pre-activations z_l and outputs a_l of every layer (a_{-1} is the input).
template <typename Scalar>
struct Trace {
  std::vector<Matrix<Scalar>> pre;
  std::vector<Matrix<Scalar>> out;
};

template <typename Scalar>
Trace<Scalar> run_forward(const NetworkSpec& spec, const ParamVector<Scalar>& params,
                          const Matrix<Scalar>& inputs, const FrozenNormLayer<Scalar>* norm,
                          int last_layer) {
  Trace<Scalar> t;
  t.pre.reserve(last_layer + 1);
  t.out.reserve(last_layer + 1);
  const Matrix<Scalar>* a = &inputs;
  for (int l = 0; l <= last_layer; ++l) {
    t.pre.push_back(affine(params, l, *a));
    Matrix<Scalar> out =
        l == spec.num_layers() - 1 ? t.pre.back() : Matrix<Scalar>(t.pre.back().cwiseMax(Scalar(0)));
    if (norm && norm->after_layer == l) standardize(out, *norm);
    t.out.push_back(std::move(out));
    a = &t.out.back();
  }
  return t;
}

}  // namespace detail

/// Logits (batch x num_classes). `norm`, when given, is applied to the
/// output of `norm->after_layer`.
template <typename Scalar>
Matrix<Scalar> forward(const NetworkSpec& spec, const ParamVector<Scalar>& params,
                       const std::type_identity_t<Matrix<Scalar>>& inputs,
                       const std::type_identity_t<FrozenNormLayer<Scalar>>* norm = nullptr) {
  detail::check_params(spec, params);
  detail::check_norm(spec, norm);
  if (inputs.cols() != spec.input_dim)
    throw ShapeError("input width " + std::to_string(inputs.cols()) + " != input_dim " +
                     std::to_string(spec.input_dim));
  auto t = detail::run_forward(spec, params, inputs, norm, spec.num_layers() - 1);
  return std::move(t.out.back());
}

/// Output of `layer` (post-activation) with no frozen normalization anywhere.
template <typename Scalar>
Matrix<Scalar> forward_prefix(const NetworkSpec& spec, const ParamVector<Scalar>& params,
                              const std::type_identity_t<Matrix<Scalar>>& inputs, int layer) {
  detail::check_params(spec, params);
  if (inputs.cols() != spec.input_dim) throw ShapeError("input width does not match input_dim");
  if (layer < 0 || layer >= spec.num_layers()) throw ShapeError("layer index out of range");
  auto t = detail::run_forward<Scalar>(spec, params, inputs, nullptr, layer);
  return std::move(t.out.back());
}

/// Row-wise log-softmax with log-sum-exp stabilization.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> row_max = logits.rowwise().maxCoeff();
  Matrix<Scalar> shifted = logits.colwise() - row_max;
  Vector<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  shifted.colwise() -= lse;
  return shifted;
}

template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> row_max = logits.rowwise().maxCoeff();
  Matrix<Scalar> e = (logits.colwise() - row_max).array().exp().matrix();
  Vector<Scalar> sums = e.rowwise().sum();
  e.array().colwise() /= sums.array();
  return e;
}

namespace detail {

template <typename Scalar>
void check_labels(std::span<const int> labels, Index rows, Index classes) {
  if (static_cast<Index>(labels.size()) != rows)
    throw ShapeError("label count does not match batch size");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= classes)
      throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
}

template <typename Scalar>
void check_teacher(const Matrix<Scalar>& teacher, Index rows, Index classes) {
  if (teacher.rows() != rows || teacher.cols() != classes)
    throw ShapeError("teacher rows do not align with the batch");
  for (Index i = 0; i < teacher.rows(); ++i) {
    if ((teacher.row(i).array() < Scalar(0)).any())
      throw DataError("teacher row " + std::to_string(i) + " has negative entries");
    const double s = static_cast<double>(teacher.row(i).sum());
    if (!(std::abs(s - 1.0) <= 1e-6))
      throw DataError("teacher row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

template <typename Scalar>
Scalar cross_entropy_unchecked(const Matrix<Scalar>& log_probs, std::span<const int> labels) {
  Scalar total = 0;
  for (Index i = 0; i < log_probs.rows(); ++i) total -= log_probs(i, labels[i]);
  return total / static_cast<Scalar>(log_probs.rows());
}

template <typename Scalar>
Scalar kl_unchecked(const Matrix<Scalar>& teacher, const Matrix<Scalar>& log_probs) {
  Scalar total = 0;
  for (Index i = 0; i < teacher.rows(); ++i)
    for (Index c = 0; c < teacher.cols(); ++c) {
      const Scalar p = teacher(i, c);
      if (p > Scalar(0)) total += p * (std::log(p) - log_probs(i, c));
    }
  return total / static_cast<Scalar>(teacher.rows());
}

}  // namespace detail

/// Mean of -log softmax(logits)[label] over the batch.
template <typename Scalar>
Scalar softmax_cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels) {
  detail::check_labels<Scalar>(labels, logits.rows(), logits.cols());
  return detail::cross_entropy_unchecked<Scalar>(log_softmax_rows(logits), labels);
}

/// Mean over rows of KL(teacher || softmax(student_logits)). Zero-probability
/// teacher entries contribute nothing.
template <typename Scalar>
Scalar kl_divergence(const Matrix<Scalar>& teacher_probs,
                     const std::type_identity_t<Matrix<Scalar>>& student_logits) {
  detail::check_teacher(teacher_probs, student_logits.rows(), student_logits.cols());
  return detail::kl_unchecked<Scalar>(teacher_probs, log_softmax_rows(student_logits));
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  Scalar cross_entropy = 0;
  Scalar kl = 0;
  Vector<Scalar> grad;
  Matrix<Scalar> logits;
};

/// Cross-entropy plus beta * KL(teacher || student) and its exact gradient.
/// The teacher is a constant; with no teacher (or beta == 0) this is plain CE.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const NetworkSpec& spec, const ParamVector<Scalar>& params,
                                  const std::type_identity_t<Matrix<Scalar>>& batch,
                                  std::span<const int> labels,
                                  const std::type_identity_t<Matrix<Scalar>>* teacher = nullptr,
                                  std::type_identity_t<Scalar> beta = 0,
                                  const std::type_identity_t<FrozenNormLayer<Scalar>>* norm = nullptr) {
  detail::check_params(spec, params);
  detail::check_norm(spec, norm);
  if (batch.cols() != spec.input_dim) throw ShapeError("input width does not match input_dim");
  if (batch.rows() == 0) throw ShapeError("empty batch");
  if (beta < Scalar(0)) throw ConfigError("distillation strength must be >= 0");
  detail::check_labels<Scalar>(labels, batch.rows(), spec.num_classes);
  if (teacher) detail::check_teacher(*teacher, batch.rows(), spec.num_classes);

  const int L = spec.num_layers();
  auto trace = detail::run_forward(spec, params, batch, norm, L - 1);
  const Matrix<Scalar>& logits = trace.out.back();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(batch.rows());

  LossAndGrad<Scalar> r;
  Matrix<Scalar> log_probs = log_softmax_rows(logits);
  r.cross_entropy = detail::cross_entropy_unchecked<Scalar>(log_probs, labels);
  Matrix<Scalar> probs = log_probs.array().exp().matrix();

  // d(loss)/d(logits): (q - onehot)/n + beta * (q - teacher)/n
  Matrix<Scalar> delta = probs;
  for (Index i = 0; i < delta.rows(); ++i) delta(i, labels[i]) -= Scalar(1);
  if (teacher) {
    r.kl = detail::kl_unchecked<Scalar>(*teacher, log_probs);
    if (beta != Scalar(0)) delta += beta * (probs - *teacher);
  }
  delta *= inv_n;
  r.loss = r.cross_entropy + beta * r.kl;

  r.grad = Vector<Scalar>::Zero(params.size());
  const auto& layout = *params.layout;
  for (int l = L - 1; l >= 0; --l) {
    if (norm && norm->after_layer == l) delta.array().rowwise() /= norm->std.transpose().array();
    if (l != L - 1) delta = (trace.pre[l].array() > Scalar(0)).select(delta, Scalar(0));
    const Matrix<Scalar>& input = l == 0 ? batch : trace.out[l - 1];
    const auto& ws = layout.weight_segment(l);
    const auto& bs = layout.bias_segment(l);
    Eigen::Map<Matrix<Scalar>>(r.grad.data() + ws.offset, ws.fan_out, ws.fan_in).noalias() =
        delta.transpose() * input;
    r.grad.segment(bs.offset, bs.length) = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * params.weight(l);
  }
  r.logits = logits;
  return r;
}

/// Euclidean norm of the whole parameter vector, accumulated in double.
template <typename Scalar>
double weight_norm(const ParamVector<Scalar>& params) {
  return params.values.template cast<double>().norm();
}

template <typename Derived>
double weight_norm(const Eigen::MatrixBase<Derived>& values) {
  return values.template cast<double>().norm();
}

/// Per-block Euclidean norms (index 0 is block 1).
template <typename Scalar>
std::vector<double> block_norms(const ParamVector<Scalar>& params) {
  std::vector<double> out;
  for (int b = 1; b <= params.layout->num_blocks(); ++b) out.push_back(weight_norm(params.block(b)));
  return out;
}

/// Fraction of rows whose argmax matches the label.
template <typename Scalar>
double accuracy(const Matrix<Scalar>& logits, std::span<const int> labels) {
  if (logits.rows() == 0) return 0.0;
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace reinit_lab

#endif  // REINIT_LAB_NETWORK_HPP
