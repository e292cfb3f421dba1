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

// Test-only oracles: scalar-loop forward passes, central finite differences,
// and random instance generators. Kept independent of the library's own
// forward/backward code paths.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dietcl/matrix.hpp"
#include "dietcl/nn.hpp"
#include "dietcl/rng.hpp"

namespace oracle {

using dietcl::Matrix;
using dietcl::MlpNetwork;
using dietcl::Rng;

// Plain scalar-loop forward pass (no shared code with dietcl::forward).
inline Matrix loop_forward(const MlpNetwork& net, const Matrix& batch,
                           bool stop_at_last_hidden = false) {
  const int layers = stop_at_last_hidden ? net.depth() - 1 : net.depth();
  Matrix act = batch;
  for (int l = 0; l < layers; ++l) {
    const int out_dim = net.layer_dims[l + 1];
    Matrix next(act.rows, out_dim);
    for (int i = 0; i < act.rows; ++i) {
      for (int j = 0; j < out_dim; ++j) {
        double z = net.biases[l][j];
        for (int k = 0; k < net.layer_dims[l]; ++k) {
          z += act(i, k) * net.weights[l](j, k);
        }
        const bool is_output = !stop_at_last_hidden && l == net.depth() - 1;
        next(i, j) = is_output ? z : (z > 0.0 ? z : 0.0);
      }
    }
    act = next;
  }
  return act;
}

inline MlpNetwork random_net(Rng& rng, const std::vector<int>& dims) {
  MlpNetwork net = dietcl::make_mlp(dims, rng);
  for (auto& b : net.biases) {
    for (double& v : b) v = rng.uniform(-0.5, 0.5);
  }
  return net;
}

inline Matrix random_batch(Rng& rng, int rows, int cols, double scale = 2.0) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-scale, scale);
  return m;
}

// True when some hidden pre-activation sits within `margin` of the rectifier
// kink; finite differences straddle the kink there, so such pairs are
// rejected by the gradient-soundness checks.
inline bool near_relu_kink(const MlpNetwork& net, const Matrix& batch,
                           double margin = 1e-3) {
  Matrix act = batch;
  for (int l = 0; l + 1 < net.depth(); ++l) {
    const int out_dim = net.layer_dims[l + 1];
    Matrix next(act.rows, out_dim);
    for (int i = 0; i < act.rows; ++i) {
      for (int j = 0; j < out_dim; ++j) {
        double z = net.biases[l][j];
        for (int k = 0; k < net.layer_dims[l]; ++k) {
          z += act(i, k) * net.weights[l](j, k);
        }
        if (std::fabs(z) < margin) return true;
        next(i, j) = z > 0.0 ? z : 0.0;
      }
    }
    act = next;
  }
  return false;
}

inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

// Central finite differences of `loss(net)` w.r.t. every parameter, compared
// against the supplied analytic gradients. Returns the max relative error.
inline double fd_param_error(MlpNetwork net,
                             const std::function<double(const MlpNetwork&)>& loss,
                             const dietcl::Gradients& analytic,
                             double step = 1e-5) {
  double worst = 0.0;
  for (int l = 0; l < net.depth(); ++l) {
    for (std::size_t k = 0; k < net.weights[l].data.size(); ++k) {
      double& p = net.weights[l].data[k];
      const double saved = p;
      p = saved + step;
      const double up = loss(net);
      p = saved - step;
      const double down = loss(net);
      p = saved;
      worst = std::max(worst, rel_err(analytic.weights[l].data[k],
                                      (up - down) / (2.0 * step)));
    }
    for (std::size_t k = 0; k < net.biases[l].size(); ++k) {
      double& p = net.biases[l][k];
      const double saved = p;
      p = saved + step;
      const double up = loss(net);
      p = saved - step;
      const double down = loss(net);
      p = saved;
      worst = std::max(worst, rel_err(analytic.biases[l][k],
                                      (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace oracle
