// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_DATA_HPP
#define REINIT_LAB_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "reinit_lab/types.hpp"

namespace reinit_lab {

/// Images are flattened height-major, channels last: ((y * width) + x) * channels + c.
struct ImageGeometry {
  int height = 0;
  int width = 0;
  int channels = 1;

  Index size() const { return Index(height) * width * channels; }
  bool operator==(const ImageGeometry&) const = default;
};

/// Per-channel affine standardization (x - mean) / std. Empty means identity.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;

  bool is_identity() const { return mean.empty(); }
};

/// Mean/std used for the RGB image benchmarks the defaults were tuned on.
Normalization imagenet_normalization();

struct Dataset {
  Matrix<float> inputs;  // n x d, one example per row
  std::vector<int> labels;
  int num_classes = 0;
  std::optional<ImageGeometry> geometry;
  Normalization normalization;

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }
  /// Image channels, or one channel per feature for flat data.
  int num_channels() const { return geometry ? geometry->channels : static_cast<int>(dim()); }

  /// Throws DataError on broken invariants.
  void validate() const;
};

Dataset subset(const Dataset& ds, std::span<const Index> indices);

/// Per-channel mean and population std of `ds`; zero-variance channels get std 1.
Normalization fit_normalization(const Dataset& ds);
Dataset normalize(Dataset ds, const Normalization& norm);

/// MNIST-style IDX pair (magic 0x00000803 images, 0x00000801 labels,
/// big-endian dims). Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Header `label,f0,f1,...`, one example per row.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const std::filesystem::path& path, const Dataset& ds);

/// Gaussian mixture: class c ~ N(mu_c, noise_std^2 I) with |mu_c| = separation.
/// With image_side > 0 the data are image_side x image_side single-channel
/// images whose class means are smooth and left-right symmetric, so flips
/// and small crops preserve the label.
struct SyntheticSpec {
  int num_classes = 10;
  int dim = 64;
  int per_class = 100;
  double separation = 3.0;
  double noise_std = 1.0;
  int image_side = 0;
  std::uint64_t seed = 0;
};

Dataset make_synthetic(const SyntheticSpec& spec);
Dataset make_synthetic(int num_classes, int dim, int per_class, double separation,
                       std::uint64_t seed);

struct NoisyDataset {
  Dataset base;
  std::vector<int> noisy_labels;
  std::vector<std::uint8_t> noise_mask;
  double q = 0.0;
  std::uint64_t noise_seed = 0;

  std::vector<Index> noisy_indices() const;
  /// `base` with its labels replaced by `noisy_labels`.
  Dataset training_view() const;
};

/// floor(q * n), robust to q*n landing a hair below an integer.
Index noisy_count(double q, Index n);

/// Re-draws the labels of exactly floor(q*n) distinct examples uniformly over
/// all classes (the true class included).
NoisyDataset inject_label_noise(const Dataset& ds, double q, std::uint64_t seed);

struct AugmentSpec {
  double horizontal_flip_prob = 0.5;
  int pad_pixels = 4;
};

Vector<float> flip_horizontal(const Vector<float>& image, const ImageGeometry& g);
/// Zero-pad by `pad` on every side, then crop the original size at (dy, dx)
/// in padded coordinates; (pad, pad) is the identity.
Vector<float> pad_and_crop(const Vector<float>& image, const ImageGeometry& g, int pad, int dy,
                           int dx);
/// Random flip then random size-preserving crop, independently per row.
Matrix<float> augment(const Matrix<float>& batch, const std::optional<ImageGeometry>& geometry,
                      const AugmentSpec& spec, std::mt19937_64& rng);

struct SplitResult {
  Dataset train;
  Dataset val;
  std::vector<Index> train_indices;
  std::vector<Index> val_indices;
};

/// Seeded split with round(val_fraction * n) validation examples. Every class
/// with at least two examples appears on both sides when the sizes allow it.
SplitResult split(const Dataset& ds, double val_fraction, std::uint64_t seed);

struct ChunkStream {
  std::vector<std::vector<Index>> chunks;

  int num_chunks() const { return static_cast<int>(chunks.size()); }
  /// Sorted indices of chunks 1..k.
  std::vector<Index> cumulative_union(int k) const;
};

ChunkStream make_chunks(const Dataset& ds, int num_chunks, std::uint64_t seed);

}  // namespace reinit_lab

#endif  // REINIT_LAB_DATA_HPP
