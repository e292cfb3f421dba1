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

#include <vector>

#include "dietcl/errors.hpp"

namespace dietcl {

// Lower-triangular accuracy table: rows[t][i] is the accuracy on task i+1's
// test set after finishing task t+1 (0-based storage, i <= t).
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;

  int tasks() const { return static_cast<int>(rows.size()); }

  void check_complete() const {
    if (rows.empty()) throw ContractError("accuracy matrix is empty");
    for (int t = 0; t < tasks(); ++t) {
      if (static_cast<int>(rows[t].size()) != t + 1) {
        throw ContractError("accuracy matrix row " + std::to_string(t + 1) +
                            " is incomplete");
      }
    }
  }
};

// Final accuracy averaged over all tasks: (1/T) sum_i A[T][i].
inline double acc(const AccuracyMatrix& m) {
  m.check_complete();
  const auto& final_row = m.rows.back();
  double sum = 0.0;
  for (double v : final_row) sum += v;
  return sum / final_row.size();
}

// Backward transfer: (1/(T-1)) sum_{i<T} (A[T][i] - A[i][i]).
// Negative values quantify forgetting.
inline double bwt(const AccuracyMatrix& m) {
  m.check_complete();
  const int T = m.tasks();
  if (T < 2) throw ContractError("bwt needs at least two tasks");
  double sum = 0.0;
  for (int i = 0; i + 1 < T; ++i) {
    sum += m.rows[T - 1][i] - m.rows[i][i];
  }
  return sum / (T - 1);
}

}  // namespace dietcl
