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

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dietcl/errors.hpp"

namespace dietcl {

// Dense row-major matrix of doubles. The only numeric container in the
// library: feature batches, weights, logits, embeddings all live here.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // length rows * cols

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const {
    return data.data() + static_cast<std::size_t>(r) * cols;
  }

  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool empty() const { return rows == 0 || cols == 0; }
};

inline bool all_finite(const Matrix& m) {
  for (double v : m.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void ensure_finite(const Matrix& m, const std::string& what) {
  if (!all_finite(m)) {
    throw TrainingError("non-finite values in " + what);
  }
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// a (m x k) * b (k x n) -> (m x n)
inline Matrix multiply(const Matrix& a, const Matrix& b) {
  require_shape(a.cols == b.rows, "multiply: inner dimensions " +
                                      std::to_string(a.cols) + " vs " +
                                      std::to_string(b.rows));
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* outr = out.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      if (aik == 0.0) continue;
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) outr[j] += aik * br[j];
    }
  }
  return out;
}

// a (m x k) * b^T where b is (n x k) -> (m x n)
inline Matrix multiply_bt(const Matrix& a, const Matrix& b) {
  require_shape(a.cols == b.cols, "multiply_bt: inner dimensions " +
                                      std::to_string(a.cols) + " vs " +
                                      std::to_string(b.cols));
  Matrix out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

// a^T * b where a is (k x m), b is (k x n) -> (m x n)
inline Matrix multiply_at(const Matrix& a, const Matrix& b) {
  require_shape(a.rows == b.rows, "multiply_at: inner dimensions " +
                                      std::to_string(a.rows) + " vs " +
                                      std::to_string(b.rows));
  Matrix out(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      double* outr = out.row(i);
      for (int j = 0; j < b.cols; ++j) outr[j] += aki * br[j];
    }
  }
  return out;
}

inline Matrix slice_cols(const Matrix& m, int c0, int c1) {
  require_shape(0 <= c0 && c0 <= c1 && c1 <= m.cols, "slice_cols: bad range");
  Matrix out(m.rows, c1 - c0);
  for (int i = 0; i < m.rows; ++i) {
    const double* src = m.row(i);
    double* dst = out.row(i);
    for (int j = c0; j < c1; ++j) dst[j - c0] = src[j];
  }
  return out;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<int>(idx.size()), m.cols);
  for (int i = 0; i < out.rows; ++i) {
    const double* src = m.row(idx[i]);
    double* dst = out.row(i);
    for (int j = 0; j < m.cols; ++j) dst[j] = src[j];
  }
  return out;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require_shape(a.cols == b.cols, "vstack: column mismatch");
  Matrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

inline Matrix hstack(const Matrix& a, const Matrix& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require_shape(a.rows == b.rows, "hstack: row mismatch");
  Matrix out(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ra = a.row(i);
    const double* rb = b.row(i);
    double* ro = out.row(i);
    std::copy(ra, ra + a.cols, ro);
    std::copy(rb, rb + b.cols, ro + a.cols);
  }
  return out;
}

inline std::vector<double> column_means(const Matrix& m) {
  std::vector<double> mean(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    for (int j = 0; j < m.cols; ++j) mean[j] += r[j];
  }
  if (m.rows > 0) {
    for (double& v : mean) v /= m.rows;
  }
  return mean;
}

inline double squared_distance(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace dietcl
