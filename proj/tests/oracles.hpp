// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations used by the tests. Plain loops over std::vector,
// no Eigen, so they share no code with the library.

#ifndef REINIT_LAB_TESTS_ORACLES_HPP
#define REINIT_LAB_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

// Layer l holds W (out x in, column-major) followed by b (out).
struct Net {
  std::vector<int> widths;  // input, hidden..., classes
  std::vector<double> theta;

  std::size_t weight_offset(int l) const {
    std::size_t off = 0;
    for (int k = 0; k < l; ++k) off += std::size_t(widths[k]) * widths[k + 1] + widths[k + 1];
    return off;
  }
  double w(int l, int o, int i) const { return theta[weight_offset(l) + std::size_t(i) * widths[l + 1] + o]; }
  double b(int l, int o) const {
    return theta[weight_offset(l) + std::size_t(widths[l]) * widths[l + 1] + o];
  }
  std::size_t size() const { return weight_offset(int(widths.size()) - 1); }
};

// Optional standardization after layer `norm_layer` (post-ReLU when hidden).
struct Norm {
  int layer = -1;
  std::vector<double> mean, std;
};

inline std::vector<double> forward(const Net& net, const std::vector<double>& x, const Norm& norm = {}) {
  std::vector<double> a = x;
  const int L = int(net.widths.size()) - 1;
  for (int l = 0; l < L; ++l) {
    std::vector<double> z(net.widths[l + 1]);
    for (int o = 0; o < net.widths[l + 1]; ++o) {
      double s = net.b(l, o);
      for (int i = 0; i < net.widths[l]; ++i) s += net.w(l, o, i) * a[i];
      z[o] = (l + 1 < L && s < 0.0) ? 0.0 : s;
    }
    if (norm.layer == l)
      for (std::size_t o = 0; o < z.size(); ++o) z[o] = (z[o] - norm.mean[o]) / norm.std[o];
    a = std::move(z);
  }
  return a;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (double& v : p) v /= s;
  return p;
}

// Mean over rows of sum_c p ln(p / q).
inline double kl(const Rows& p, const Rows& q) {
  double total = 0.0;
  for (std::size_t r = 0; r < p.size(); ++r)
    for (std::size_t c = 0; c < p[r].size(); ++c)
      if (p[r][c] > 0.0) total += p[r][c] * std::log(p[r][c] / q[r][c]);
  return total / double(p.size());
}

// Mean cross-entropy plus beta * KL(teacher || softmax(logits)).
inline double loss(const Net& net, const Rows& xs, const std::vector<int>& labels,
                   const Rows* teacher, double beta, const Norm& norm = {}) {
  double ce = 0.0;
  Rows q;
  for (std::size_t r = 0; r < xs.size(); ++r) {
    auto p = softmax(forward(net, xs[r], norm));
    ce -= std::log(p[labels[r]]);
    q.push_back(std::move(p));
  }
  ce /= double(xs.size());
  return teacher ? ce + beta * kl(*teacher, q) : ce;
}

inline double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Chi-square survival function for integer dof via the regularized upper
// incomplete gamma series (adequate for dof <= 30).
inline double chi2_sf(double x, int dof) {
  const double a = dof / 2.0, y = x / 2.0;
  // lower series P(a, y)
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= y / (a + n);
    sum += term;
    if (term < sum * 1e-15) break;
  }
  const double lower = sum * std::exp(-y + a * std::log(y) - std::lgamma(a));
  return 1.0 - lower;
}

}  // namespace oracle

#endif  // REINIT_LAB_TESTS_ORACLES_HPP
