// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "reinit_lab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>

#include "reinit_lab/error.hpp"

namespace reinit_lab {

Normalization imagenet_normalization() {
  return {{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}};
}

void Dataset::validate() const {
  if (size() < 1) throw DataError("dataset is empty");
  if (static_cast<Index>(labels.size()) != size())
    throw DataError("dataset has " + std::to_string(size()) + " inputs but " +
                    std::to_string(labels.size()) + " labels");
  if (num_classes < 1) throw DataError("dataset needs at least one class");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DataError("label " + std::to_string(labels[i]) + " at example " + std::to_string(i) +
                      " outside [0, " + std::to_string(num_classes) + ")");
  if (geometry && geometry->size() != dim()) throw DataError("image geometry does not match width");
  for (double s : normalization.std)
    if (!(s > 0.0)) throw DataError("normalization std entries must be positive");
}

Dataset subset(const Dataset& ds, std::span<const Index> indices) {
  Dataset out;
  out.inputs.resize(static_cast<Index>(indices.size()), ds.dim());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index idx = indices[i];
    if (idx < 0 || idx >= ds.size()) throw ShapeError("subset index out of range");
    out.inputs.row(static_cast<Index>(i)) = ds.inputs.row(idx);
    out.labels.push_back(ds.labels[idx]);
  }
  out.num_classes = ds.num_classes;
  out.geometry = ds.geometry;
  out.normalization = ds.normalization;
  return out;
}

Normalization fit_normalization(const Dataset& ds) {
  const int channels = ds.num_channels();
  std::vector<double> sum(channels, 0.0);
  std::vector<double> count(channels, 0.0);
  for (Index j = 0; j < ds.dim(); ++j) {
    const int c = static_cast<int>(j % channels);
    sum[c] += ds.inputs.col(j).cast<double>().sum();
    count[c] += static_cast<double>(ds.size());
  }
  Normalization norm;
  for (int c = 0; c < channels; ++c) norm.mean.push_back(sum[c] / count[c]);
  std::vector<double> sq(channels, 0.0);
  for (Index j = 0; j < ds.dim(); ++j) {
    const int c = static_cast<int>(j % channels);
    sq[c] += (ds.inputs.col(j).cast<double>().array() - norm.mean[c]).square().sum();
  }
  for (int c = 0; c < channels; ++c) {
    const double sd = std::sqrt(sq[c] / count[c]);
    norm.std.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return norm;
}

Dataset normalize(Dataset ds, const Normalization& norm) {
  if (norm.is_identity()) return ds;
  const int channels = ds.num_channels();
  if (static_cast<int>(norm.mean.size()) != channels || norm.std.size() != norm.mean.size())
    throw ConfigError("normalization has " + std::to_string(norm.mean.size()) +
                      " channels, data has " + std::to_string(channels));
  for (Index j = 0; j < ds.dim(); ++j) {
    const int c = static_cast<int>(j % channels);
    ds.inputs.col(j) =
        ((ds.inputs.col(j).cast<double>().array() - norm.mean[c]) / norm.std[c]).cast<float>().matrix();
  }
  ds.normalization = norm;
  return ds;
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                        const std::filesystem::path& path) {
  if (b.size() < off + 4) throw FormatError(path.string() + ": truncated IDX header", b.size());
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);

  if (const auto magic = read_be32(img, 0, images_path); magic != 0x00000803u)
    throw FormatError(images_path.string() + ": bad image magic number", 0);
  const std::uint64_t n = read_be32(img, 4, images_path);
  const std::uint64_t rows = read_be32(img, 8, images_path);
  const std::uint64_t cols = read_be32(img, 12, images_path);
  if (rows == 0 || cols == 0) throw FormatError(images_path.string() + ": zero image dimension", 8);
  const std::uint64_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels)
    throw FormatError(images_path.string() + ": truncated pixel data", img.size());

  if (const auto magic = read_be32(lab, 0, labels_path); magic != 0x00000801u)
    throw FormatError(labels_path.string() + ": bad label magic number", 0);
  const std::uint64_t n_labels = read_be32(lab, 4, labels_path);
  if (n_labels != n)
    throw FormatError(labels_path.string() + ": " + std::to_string(n_labels) + " labels for " +
                          std::to_string(n) + " images",
                      4);
  if (lab.size() < 8 + n) throw FormatError(labels_path.string() + ": truncated labels", lab.size());
  if (n == 0) throw FormatError(images_path.string() + ": no images", 4);

  Dataset ds;
  ds.inputs.resize(static_cast<Index>(n), static_cast<Index>(pixels));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t p = 0; p < pixels; ++p)
      ds.inputs(static_cast<Index>(i), static_cast<Index>(p)) =
          static_cast<float>(img[16 + i * pixels + p]) / 255.0f;
  int max_label = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    ds.labels.push_back(lab[8 + i]);
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.num_classes = max_label + 1;
  ds.geometry = ImageGeometry{static_cast<int>(rows), static_cast<int>(cols), 1};
  return ds;
}

namespace {

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file (missing header)");
  const auto header = split_cells(line);
  if (header.empty() || trim(header[0]) != "label")
    throw FormatError(path.string() + ": missing header 'label,f0,...' on row 1");
  const std::size_t width = header.size() - 1;
  if (width == 0) throw FormatError(path.string() + ": header declares no features");

  std::vector<float> values;
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    if (cells.size() != header.size())
      throw FormatError(path.string() + ": row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    for (std::size_t col = 0; col < cells.size(); ++col) {
      const auto cell = trim(cells[col]);
      const char* end = cell.data() + cell.size();
      if (col == 0) {
        int label = 0;
        auto [p, ec] = std::from_chars(cell.data(), end, label);
        if (ec != std::errc() || p != end || label < 0)
          throw FormatError(path.string() + ": bad label at row " + std::to_string(row) +
                            ", col 1");
        labels.push_back(label);
      } else {
        float v = 0;
        auto [p, ec] = std::from_chars(cell.data(), end, v);
        if (ec != std::errc() || p != end || cell.empty())
          throw FormatError(path.string() + ": non-numeric cell at row " + std::to_string(row) +
                            ", col " + std::to_string(col + 1));
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw FormatError(path.string() + ": no data rows");

  Dataset ds;
  ds.inputs = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Index>(labels.size()), static_cast<Index>(width));
  ds.labels = std::move(labels);
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

void save_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "label";
  for (Index j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << '\n';
  char buf[64];
  for (Index i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (Index j = 0; j < ds.dim(); ++j) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), ds.inputs(i, j));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

/// Smooth, left-right symmetric random pattern of unit norm.
Vector<double> symmetric_pattern(int side, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix<double> field(side, side);
  for (Index i = 0; i < field.size(); ++i) field.data()[i] = normal(rng);
  for (int pass = 0; pass < 2; ++pass) {
    Matrix<double> blurred = Matrix<double>::Zero(side, side);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double s = 0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy;
            const int xx = x + dx;
            if (yy < 0 || yy >= side || xx < 0 || xx >= side) continue;
            s += field(yy, xx);
            ++cnt;
          }
        blurred(y, x) = s / cnt;
      }
    field = blurred;
  }
  Vector<double> flat(Index(side) * side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      flat[Index(y) * side + x] = 0.5 * (field(y, x) + field(y, side - 1 - x));
  return flat / flat.norm();
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (spec.per_class < 1) throw ConfigError("synthetic data needs per_class >= 1");
  const bool image = spec.image_side > 0;
  const Index dim = image ? Index(spec.image_side) * spec.image_side : spec.dim;
  if (dim < 1) throw ConfigError("synthetic data needs dim >= 1");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::vector<Vector<double>> means;
  for (int c = 0; c < spec.num_classes; ++c) {
    Vector<double> dir;
    if (image) {
      dir = symmetric_pattern(spec.image_side, rng);
    } else {
      dir.resize(dim);
      do {
        for (Index j = 0; j < dim; ++j) dir[j] = normal(rng);
      } while (dir.norm() == 0.0);
      dir /= dir.norm();
    }
    means.push_back(spec.separation * dir);
  }

  const Index n = Index(spec.num_classes) * spec.per_class;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::shuffle(order.begin(), order.end(), rng);

  Dataset ds;
  ds.inputs.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.num_classes = spec.num_classes;
  Index k = 0;
  for (int c = 0; c < spec.num_classes; ++c)
    for (int i = 0; i < spec.per_class; ++i, ++k) {
      const Index row = order[static_cast<std::size_t>(k)];
      for (Index j = 0; j < dim; ++j)
        ds.inputs(row, j) = static_cast<float>(means[c][j] + spec.noise_std * normal(rng));
      ds.labels[static_cast<std::size_t>(row)] = c;
    }
  if (image) ds.geometry = ImageGeometry{spec.image_side, spec.image_side, 1};
  return ds;
}

Dataset make_synthetic(int num_classes, int dim, int per_class, double separation,
                       std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = num_classes;
  spec.dim = dim;
  spec.per_class = per_class;
  spec.separation = separation;
  spec.seed = seed;
  return make_synthetic(spec);
}

std::vector<Index> NoisyDataset::noisy_indices() const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < noise_mask.size(); ++i)
    if (noise_mask[i]) out.push_back(static_cast<Index>(i));
  return out;
}

Dataset NoisyDataset::training_view() const {
  Dataset ds = base;
  ds.labels = noisy_labels;
  return ds;
}

Index noisy_count(double q, Index n) {
  return static_cast<Index>(std::floor(q * static_cast<double>(n) + 1e-9));
}

NoisyDataset inject_label_noise(const Dataset& ds, double q, std::uint64_t seed) {
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("label noise fraction must lie in [0, 1]");
  NoisyDataset out;
  out.base = ds;
  out.noisy_labels = ds.labels;
  out.noise_mask.assign(static_cast<std::size_t>(ds.size()), 0);
  out.q = q;
  out.noise_seed = seed;
  const Index k = noisy_count(q, ds.size());
  if (k == 0) return out;

  std::mt19937_64 rng(seed);
  std::vector<Index> idx(static_cast<std::size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), Index(0));
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, ds.size() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  std::uniform_int_distribution<int> label(0, ds.num_classes - 1);
  for (Index i = 0; i < k; ++i) {
    const auto chosen = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
    out.noise_mask[chosen] = 1;
    out.noisy_labels[chosen] = label(rng);
  }
  return out;
}

Vector<float> flip_horizontal(const Vector<float>& image, const ImageGeometry& g) {
  if (image.size() != g.size()) throw ShapeError("image size does not match geometry");
  Vector<float> out(image.size());
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      for (int c = 0; c < g.channels; ++c)
        out[(Index(y) * g.width + x) * g.channels + c] =
            image[(Index(y) * g.width + (g.width - 1 - x)) * g.channels + c];
  return out;
}

Vector<float> pad_and_crop(const Vector<float>& image, const ImageGeometry& g, int pad, int dy,
                           int dx) {
  if (image.size() != g.size()) throw ShapeError("image size does not match geometry");
  if (pad < 0 || dy < 0 || dx < 0 || dy > 2 * pad || dx > 2 * pad)
    throw ConfigError("crop offset outside the padded image");
  Vector<float> out = Vector<float>::Zero(image.size());
  for (int y = 0; y < g.height; ++y) {
    const int sy = y + dy - pad;
    if (sy < 0 || sy >= g.height) continue;
    for (int x = 0; x < g.width; ++x) {
      const int sx = x + dx - pad;
      if (sx < 0 || sx >= g.width) continue;
      for (int c = 0; c < g.channels; ++c)
        out[(Index(y) * g.width + x) * g.channels + c] =
            image[(Index(sy) * g.width + sx) * g.channels + c];
    }
  }
  return out;
}

Matrix<float> augment(const Matrix<float>& batch, const std::optional<ImageGeometry>& geometry,
                      const AugmentSpec& spec, std::mt19937_64& rng) {
  if (!geometry) throw ConfigError("augmentation requested on data without image geometry");
  if (batch.cols() != geometry->size()) throw ShapeError("batch width does not match geometry");
  std::bernoulli_distribution flip(spec.horizontal_flip_prob);
  std::uniform_int_distribution<int> offset(0, 2 * spec.pad_pixels);
  Matrix<float> out(batch.rows(), batch.cols());
  for (Index i = 0; i < batch.rows(); ++i) {
    Vector<float> img = batch.row(i).transpose();
    if (flip(rng)) img = flip_horizontal(img, *geometry);
    const int dy = offset(rng);
    const int dx = offset(rng);
    out.row(i) = pad_and_crop(img, *geometry, spec.pad_pixels, dy, dx).transpose();
  }
  return out;
}

SplitResult split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("validation fraction must lie in (0, 1)");
  const Index n = ds.size();
  const auto n_val = static_cast<Index>(std::llround(val_fraction * static_cast<double>(n)));
  if (n_val < 1 || n_val >= n)
    throw ConfigError("split of " + std::to_string(n) + " examples at fraction " +
                      std::to_string(val_fraction) + " leaves an empty side");

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<Index> remaining(static_cast<std::size_t>(ds.num_classes), 0);
  for (int y : ds.labels) ++remaining[static_cast<std::size_t>(y)];
  std::vector<std::uint8_t> in_val(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> class_in_val(static_cast<std::size_t>(ds.num_classes), 0);
  Index taken = 0;
  auto take = [&](Index i) {
    in_val[static_cast<std::size_t>(i)] = 1;
    --remaining[static_cast<std::size_t>(ds.labels[i])];
    class_in_val[static_cast<std::size_t>(ds.labels[i])] = 1;
    ++taken;
  };
  // One representative per class first, then fill in shuffled order while
  // keeping at least one example of every class on the training side.
  for (Index i : perm) {
    if (taken == n_val) break;
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    if (!class_in_val[y] && remaining[y] >= 2) take(i);
  }
  for (Index i : perm) {
    if (taken == n_val) break;
    if (!in_val[static_cast<std::size_t>(i)] && remaining[static_cast<std::size_t>(ds.labels[i])] >= 2)
      take(i);
  }
  for (Index i : perm) {
    if (taken == n_val) break;
    if (!in_val[static_cast<std::size_t>(i)]) take(i);
  }

  SplitResult r;
  for (Index i = 0; i < n; ++i)
    (in_val[static_cast<std::size_t>(i)] ? r.val_indices : r.train_indices).push_back(i);
  r.train = subset(ds, r.train_indices);
  r.val = subset(ds, r.val_indices);
  return r;
}

std::vector<Index> ChunkStream::cumulative_union(int k) const {
  if (k < 0 || k > num_chunks()) throw ConfigError("chunk count out of range");
  std::vector<Index> out;
  for (int c = 0; c < k; ++c) out.insert(out.end(), chunks[c].begin(), chunks[c].end());
  std::sort(out.begin(), out.end());
  return out;
}

ChunkStream make_chunks(const Dataset& ds, int num_chunks, std::uint64_t seed) {
  const Index n = ds.size();
  if (num_chunks < 1 || num_chunks > n) throw ConfigError("need 1 <= num_chunks <= n");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  ChunkStream stream;
  for (int c = 0; c < num_chunks; ++c) {
    const auto first = static_cast<std::size_t>(n * c / num_chunks);
    const auto last = static_cast<std::size_t>(n * (c + 1) / num_chunks);
    std::vector<Index> chunk(perm.begin() + static_cast<std::ptrdiff_t>(first),
                             perm.begin() + static_cast<std::ptrdiff_t>(last));
    std::sort(chunk.begin(), chunk.end());
    stream.chunks.push_back(std::move(chunk));
  }
  return stream;
}

}  // namespace reinit_lab
