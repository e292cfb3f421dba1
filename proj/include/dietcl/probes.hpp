// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "dietcl/errors.hpp"
#include "dietcl/matrix.hpp"
#include "dietcl/rng.hpp"

namespace dietcl {

// Named view of a model's parameter tensors at one point in time. Every
// learner names its final classifying layer "classifier".
struct ParamSnapshot {
  std::vector<std::string> names;  // one per tensor pair
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

// L2 norm of the parameter difference restricted to the selected layer
// (weights and bias). Shapes must match exactly.
inline double weight_delta(const ParamSnapshot& before,
                           const ParamSnapshot& after,
                           std::string_view layer = "classifier") {
  const int ib = before.find(layer);
  const int ia = after.find(layer);
  if (ib < 0 || ia < 0) {
    throw InputError("weight_delta: no layer named '" + std::string(layer) +
                     "'");
  }
  const Matrix& wb = before.weights[ib];
  const Matrix& wa = after.weights[ia];
  require_shape(wb.same_shape(wa) &&
                    before.biases[ib].size() == after.biases[ia].size(),
                "weight_delta: snapshot shapes differ");
  double acc = 0.0;
  for (std::size_t k = 0; k < wb.data.size(); ++k) {
    const double d = wa.data[k] - wb.data[k];
    acc += d * d;
  }
  for (std::size_t k = 0; k < before.biases[ib].size(); ++k) {
    const double d = after.biases[ia][k] - before.biases[ib][k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Same norm, but over the overlapping top-left block only. Used between
// tasks, where head expansion grows the classifier.
inline double weight_delta_overlap(const ParamSnapshot& before,
                                   const ParamSnapshot& after,
                                   std::string_view layer = "classifier") {
  const int ib = before.find(layer);
  const int ia = after.find(layer);
  if (ib < 0 || ia < 0) {
    throw InputError("weight_delta: no layer named '" + std::string(layer) +
                     "'");
  }
  const Matrix& wb = before.weights[ib];
  const Matrix& wa = after.weights[ia];
  const int rows = std::min(wb.rows, wa.rows);
  const int cols = std::min(wb.cols, wa.cols);
  double acc = 0.0;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double d = wa(i, j) - wb(i, j);
      acc += d * d;
    }
  }
  const std::size_t nb =
      std::min(before.biases[ib].size(), after.biases[ia].size());
  for (std::size_t k = 0; k < nb; ++k) {
    const double d = after.biases[ia][k] - before.biases[ib][k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// PCA projection (stand-in for the usual nonlinear embedding plots)
// ---------------------------------------------------------------------------

struct PcaResult {
  Matrix coords;                                // n x components
  std::vector<double> explained_variance_ratio;  // per component
  int components = 0;
  bool rank_deficient = false;
};

// Centers the data and projects onto the top-k principal directions found by
// power iteration with deflation (tolerance 1e-9, max 10000 iterations).
// Component signs are fixed so the largest-magnitude loading is positive.
// Returns fewer components (flagged) when the data rank is below k.
inline PcaResult pca_projection(const Matrix& data, int k = 2) {
  if (data.rows < k) {
    throw InputError("pca_projection: need at least k rows");
  }
  const int n = data.rows;
  const int d = data.cols;
  Matrix centered = data;
  const std::vector<double> mean = column_means(data);
  for (int i = 0; i < n; ++i) {
    double* r = centered.row(i);
    for (int j = 0; j < d; ++j) r[j] -= mean[j];
  }
  // sample covariance
  Matrix cov = multiply_at(centered, centered);
  const double denom = n > 1 ? n - 1.0 : 1.0;
  for (double& v : cov.data) v /= denom;
  double total_variance = 0.0;
  for (int j = 0; j < d; ++j) total_variance += cov(j, j);

  PcaResult out;
  std::vector<std::vector<double>> components;
  Rng rng(0x9e3779b97f4a7c15ull);  // fixed seed: result is a pure function
  for (int comp = 0; comp < k; ++comp) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    double eigenvalue = 0.0;
    for (int iter = 0; iter < 10000; ++iter) {
      std::vector<double> w(d, 0.0);
      for (int i = 0; i < d; ++i) {
        const double* row = cov.row(i);
        for (int j = 0; j < d; ++j) w[i] += row[j] * v[j];
      }
      double wn = 0.0;
      for (double x : w) wn += x * x;
      wn = std::sqrt(wn);
      if (wn <= 1e-15) {
        eigenvalue = 0.0;
        break;
      }
      double diff = 0.0;
      for (int i = 0; i < d; ++i) {
        w[i] /= wn;
        // sign-insensitive convergence check
        diff = std::max(diff, std::min(std::fabs(w[i] - v[i]),
                                       std::fabs(w[i] + v[i])));
      }
      v = w;
      eigenvalue = wn;
      if (diff < 1e-9) break;
    }
    if (eigenvalue <= 1e-12 * std::max(total_variance, 1.0)) {
      out.rank_deficient = true;
      break;
    }
    // fix sign: largest-magnitude loading positive
    int arg = 0;
    for (int i = 1; i < d; ++i) {
      if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
    }
    if (v[arg] < 0.0) {
      for (double& x : v) x = -x;
    }
    components.push_back(v);
    out.explained_variance_ratio.push_back(
        total_variance > 0.0 ? eigenvalue / total_variance : 0.0);
    // deflate
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        cov(i, j) -= eigenvalue * v[i] * v[j];
      }
    }
  }
  out.components = static_cast<int>(components.size());
  out.coords = Matrix(n, out.components);
  for (int i = 0; i < n; ++i) {
    const double* r = centered.row(i);
    for (int c = 0; c < out.components; ++c) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += r[j] * components[c][j];
      out.coords(i, c) = acc;
    }
  }
  return out;
}

}  // namespace dietcl
