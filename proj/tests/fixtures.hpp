// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_TESTS_FIXTURES_HPP
#define REINIT_LAB_TESTS_FIXTURES_HPP

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "reinit_lab/network.hpp"

namespace fixtures {

using namespace reinit_lab;

inline oracle::Net to_oracle(const NetworkSpec& spec, const ParamVector<double>& p) {
  oracle::Net net;
  net.widths.push_back(spec.input_dim);
  for (int h : spec.hidden_dims) net.widths.push_back(h);
  net.widths.push_back(spec.num_classes);
  net.theta.assign(p.values.data(), p.values.data() + p.values.size());
  return net;
}

inline oracle::Rows to_rows(const Matrix<double>& m) {
  oracle::Rows r(m.rows(), std::vector<double>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

inline Matrix<double> random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline std::vector<int> random_labels(Index n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> l(n);
  for (auto& v : l) v = u(rng);
  return l;
}

// Random probability rows with strictly positive entries.
inline Matrix<double> random_probs(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    double s = 0.0;
    for (Index j = 0; j < cols; ++j) s += (m(i, j) = u(rng));
    m.row(i) /= s;
  }
  return m;
}

// Small random MLP with at most ~200 parameters.
inline NetworkSpec random_small_spec(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> width(2, 6), depth(0, 2);
  NetworkSpec spec;
  spec.input_dim = width(rng);
  const int h = depth(rng);
  for (int i = 0; i < h; ++i) spec.hidden_dims.push_back(width(rng));
  spec.num_classes = width(rng);
  return spec;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("reinit_lab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures

#endif  // REINIT_LAB_TESTS_FIXTURES_HPP
