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
#include <string>
#include <utility>
#include <vector>

#include "dietcl/errors.hpp"
#include "dietcl/matrix.hpp"
#include "dietcl/rng.hpp"

namespace dietcl {

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

// Compact MLP: ReLU hidden layers, linear logits. weights[l] has shape
// (layer_dims[l+1] x layer_dims[l]); a forward step is y = x * W^T + b.
struct MlpNetwork {
  std::vector<int> layer_dims;  // input, hidden..., output
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int depth() const { return static_cast<int>(weights.size()); }
  int last_hidden_dim() const { return layer_dims[layer_dims.size() - 2]; }
};

// Uniform init in +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
inline Matrix init_weight(int fan_out, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix w(fan_out, fan_in);
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

inline MlpNetwork make_mlp(const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw InputError("make_mlp: need at least two dims");
  for (int d : dims) {
    if (d < 1) throw InputError("make_mlp: all layer dims must be >= 1");
  }
  MlpNetwork net;
  net.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    net.weights.push_back(init_weight(dims[l + 1], dims[l], rng));
    net.biases.emplace_back(dims[l + 1], 0.0);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct ForwardCache {
  std::vector<int> layer_dims;  // dims at forward time, for staleness checks
  Matrix input;
  std::vector<Matrix> pre;   // linear outputs per layer
  std::vector<Matrix> post;  // activations per layer (last entry = logits)
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

inline Matrix relu(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data) {
    if (v < 0.0) v = 0.0;
  }
  return out;
}

inline std::pair<Matrix, ForwardCache> forward(const MlpNetwork& net,
                                               const Matrix& batch) {
  require_shape(batch.cols == net.input_dim(),
                "forward: batch has " + std::to_string(batch.cols) +
                    " features, network expects " +
                    std::to_string(net.input_dim()));
  ForwardCache cache;
  cache.layer_dims = net.layer_dims;
  cache.input = batch;
  const Matrix* act = &cache.input;
  for (int l = 0; l < net.depth(); ++l) {
    Matrix z = multiply_bt(*act, net.weights[l]);
    for (int i = 0; i < z.rows; ++i) {
      double* r = z.row(i);
      for (int j = 0; j < z.cols; ++j) r[j] += net.biases[l][j];
    }
    cache.pre.push_back(z);
    cache.post.push_back(l + 1 < net.depth() ? relu(z) : z);
    act = &cache.post.back();
  }
  ensure_finite(cache.post.back(), "forward logits");
  return {cache.post.back(), cache};
}

inline void check_cache(const MlpNetwork& net, const ForwardCache& cache) {
  if (cache.layer_dims != net.layer_dims ||
      cache.pre.size() != static_cast<std::size_t>(net.depth())) {
    throw ContractError("backward: cache does not match this network");
  }
}

// Returns parameter gradients given d(loss)/d(logits).
inline Gradients backward(const MlpNetwork& net, const ForwardCache& cache,
                          const Matrix& grad_logits) {
  check_cache(net, cache);
  require_shape(grad_logits.rows == cache.input.rows &&
                    grad_logits.cols == net.output_dim(),
                "backward: grad_logits shape mismatch");
  Gradients g;
  g.weights.resize(net.depth());
  g.biases.resize(net.depth());
  Matrix delta = grad_logits;  // d(loss)/d(pre[l])
  for (int l = net.depth() - 1; l >= 0; --l) {
    const Matrix& below = l == 0 ? cache.input : cache.post[l - 1];
    g.weights[l] = multiply_at(delta, below);
    g.biases[l].assign(net.layer_dims[l + 1], 0.0);
    for (int i = 0; i < delta.rows; ++i) {
      const double* r = delta.row(i);
      for (int j = 0; j < delta.cols; ++j) g.biases[l][j] += r[j];
    }
    if (l > 0) {
      Matrix next = multiply(delta, net.weights[l]);
      const Matrix& pre = cache.pre[l - 1];
      for (std::size_t k = 0; k < next.data.size(); ++k) {
        if (pre.data[k] <= 0.0) next.data[k] = 0.0;
      }
      delta = std::move(next);
    }
  }
  return g;
}

// Gradient of the loss w.r.t. the input batch; used by saliency probes.
inline Matrix input_gradient(const MlpNetwork& net, const ForwardCache& cache,
                             const Matrix& grad_logits) {
  check_cache(net, cache);
  Matrix delta = grad_logits;
  for (int l = net.depth() - 1; l > 0; --l) {
    Matrix next = multiply(delta, net.weights[l]);
    const Matrix& pre = cache.pre[l - 1];
    for (std::size_t k = 0; k < next.data.size(); ++k) {
      if (pre.data[k] <= 0.0) next.data[k] = 0.0;
    }
    delta = std::move(next);
  }
  return multiply(delta, net.weights[0]);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 128;

  void validate() const {
    if (learning_rate <= 0.0) throw InputError("sgd: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw InputError("sgd: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw InputError("sgd: weight_decay must be >= 0");
    if (batch_size < 1) throw InputError("sgd: batch_size must be >= 1");
  }
};

struct OptimizerState {
  std::vector<Matrix> velocity_w;
  std::vector<std::vector<double>> velocity_b;
};

inline OptimizerState make_optimizer_state(const MlpNetwork& net) {
  OptimizerState s;
  for (int l = 0; l < net.depth(); ++l) {
    s.velocity_w.emplace_back(net.weights[l].rows, net.weights[l].cols);
    s.velocity_b.emplace_back(net.biases[l].size(), 0.0);
  }
  return s;
}

// v <- momentum * v + (g + weight_decay * theta);  theta <- theta - lr * v
inline void sgd_step(MlpNetwork& net, const Gradients& g, const SgdConfig& cfg,
                     OptimizerState& state) {
  if (g.weights.size() != static_cast<std::size_t>(net.depth()) ||
      state.velocity_w.size() != static_cast<std::size_t>(net.depth())) {
    throw ShapeError("sgd_step: gradient/state layer count mismatch");
  }
  for (int l = 0; l < net.depth(); ++l) {
    require_shape(g.weights[l].same_shape(net.weights[l]) &&
                      state.velocity_w[l].same_shape(net.weights[l]),
                  "sgd_step: tensor shape mismatch at layer " +
                      std::to_string(l));
    Matrix& w = net.weights[l];
    Matrix& vw = state.velocity_w[l];
    const Matrix& gw = g.weights[l];
    for (std::size_t k = 0; k < w.data.size(); ++k) {
      vw.data[k] = cfg.momentum * vw.data[k] +
                   (gw.data[k] + cfg.weight_decay * w.data[k]);
      w.data[k] -= cfg.learning_rate * vw.data[k];
    }
    auto& b = net.biases[l];
    auto& vb = state.velocity_b[l];
    const auto& gb = g.biases[l];
    for (std::size_t k = 0; k < b.size(); ++k) {
      vb[k] = cfg.momentum * vb[k] + (gb[k] + cfg.weight_decay * b[k]);
      b[k] -= cfg.learning_rate * vb[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Embeddings, head expansion, saliency
// ---------------------------------------------------------------------------

// Post-activation of the last hidden layer.
inline Matrix embed(const MlpNetwork& net, const Matrix& batch) {
  if (net.depth() < 2) {
    throw ContractError("embed: network has no hidden layer");
  }
  require_shape(batch.cols == net.input_dim(), "embed: feature dim mismatch");
  Matrix act = batch;
  for (int l = 0; l + 1 < net.depth(); ++l) {
    Matrix z = multiply_bt(act, net.weights[l]);
    for (int i = 0; i < z.rows; ++i) {
      double* r = z.row(i);
      for (int j = 0; j < z.cols; ++j) r[j] += net.biases[l][j];
    }
    act = relu(z);
  }
  return act;
}

// Widens the output layer by new_class_count rows. Existing rows stay
// bit-identical; new rows come from the standard initializer evaluated at the
// layer's new shape, new biases start at zero.
inline void expand_head(MlpNetwork& net, int new_class_count, Rng& rng) {
  if (new_class_count < 1) {
    throw InputError("expand_head: new_class_count must be >= 1");
  }
  const int in = net.last_hidden_dim();
  const int old_out = net.output_dim();
  const int new_out = old_out + new_class_count;
  const double bound = std::sqrt(6.0 / (in + new_out));
  Matrix& w = net.weights.back();
  w.data.resize(static_cast<std::size_t>(new_out) * in);
  for (std::size_t k = static_cast<std::size_t>(old_out) * in;
       k < w.data.size(); ++k) {
    w.data[k] = rng.uniform(-bound, bound);
  }
  w.rows = new_out;
  net.biases.back().resize(new_out, 0.0);
  net.layer_dims.back() = new_out;
}

// |d logit[target] / d input| per feature.
inline std::vector<double> input_saliency(const MlpNetwork& net,
                                          const std::vector<double>& sample,
                                          int target_class) {
  if (target_class < 0 || target_class >= net.output_dim()) {
    throw InputError("input_saliency: target class out of range");
  }
  Matrix x(1, static_cast<int>(sample.size()));
  x.data = sample;
  auto [logits, cache] = forward(net, x);
  Matrix grad(1, net.output_dim());
  grad(0, target_class) = 1.0;
  Matrix gx = input_gradient(net, cache, grad);
  std::vector<double> out(gx.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(gx.data[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    const double* in = logits.row(i);
    double* o = out.row(i);
    double mx = in[0];
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (int j = 0; j < logits.cols; ++j) o[j] /= sum;
  }
  return out;
}

inline Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    const double* in = logits.row(i);
    double* o = out.row(i);
    double mx = in[0];
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(in[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < logits.cols; ++j) o[j] = in[j] - lse;
  }
  return out;
}

struct LossGrad {
  double loss = 0.0;
  Matrix grad;  // w.r.t. the logits argument
};

// Mean over the batch of -log softmax(logits)[label];
// grad = (softmax - onehot) / batch_size.
inline LossGrad cross_entropy(const Matrix& logits,
                              const std::vector<int>& labels) {
  require_shape(static_cast<int>(labels.size()) == logits.rows,
                "cross_entropy: label count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= logits.cols) {
      throw InputError("cross_entropy: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(logits.cols) + ")");
    }
  }
  const Matrix logp = log_softmax(logits);
  LossGrad out;
  out.grad = Matrix(logits.rows, logits.cols);
  const double inv_n = 1.0 / logits.rows;
  for (int i = 0; i < logits.rows; ++i) {
    out.loss -= logp(i, labels[i]);
    const double* lp = logp.row(i);
    double* g = out.grad.row(i);
    for (int j = 0; j < logits.cols; ++j) g[j] = std::exp(lp[j]) * inv_n;
    g[labels[i]] -= inv_n;
  }
  out.loss *= inv_n;
  if (!std::isfinite(out.loss)) throw TrainingError("cross_entropy: non-finite loss");
  return out;
}

// T^2 * mean KL( softmax(teacher/T) || softmax(student/T) );
// gradient is taken w.r.t. the student logits.
inline LossGrad kd_loss(const Matrix& student, const Matrix& teacher,
                        double temperature) {
  require_shape(student.same_shape(teacher), "kd_loss: logit shape mismatch");
  if (temperature <= 0.0) throw InputError("kd_loss: temperature must be > 0");
  Matrix s_scaled = student;
  Matrix t_scaled = teacher;
  for (double& v : s_scaled.data) v /= temperature;
  for (double& v : t_scaled.data) v /= temperature;
  const Matrix logq = log_softmax(s_scaled);
  const Matrix logp = log_softmax(t_scaled);
  LossGrad out;
  out.grad = Matrix(student.rows, student.cols);
  const double t2_over_n = temperature * temperature / student.rows;
  const double t_over_n = temperature / student.rows;
  for (int i = 0; i < student.rows; ++i) {
    const double* lq = logq.row(i);
    const double* lp = logp.row(i);
    double* g = out.grad.row(i);
    double kl = 0.0;
    for (int j = 0; j < student.cols; ++j) {
      const double p = std::exp(lp[j]);
      kl += p * (lp[j] - lq[j]);
      g[j] = t_over_n * (std::exp(lq[j]) - p);
    }
    out.loss += kl;
  }
  out.loss *= t2_over_n;
  if (out.loss < 0.0 && out.loss > -1e-15) out.loss = 0.0;  // fp wobble on KL>=0
  if (!std::isfinite(out.loss)) throw TrainingError("kd_loss: non-finite loss");
  return out;
}

// Per-row Shannon entropy, -sum p ln p with 0 ln 0 := 0.
inline std::vector<double> entropy(const Matrix& probs) {
  std::vector<double> out(probs.rows, 0.0);
  for (int i = 0; i < probs.rows; ++i) {
    const double* p = probs.row(i);
    double sum = 0.0;
    for (int j = 0; j < probs.cols; ++j) sum += p[j];
    if (std::fabs(sum - 1.0) > 1e-6) {
      throw InputError("entropy: row " + std::to_string(i) +
                       " does not sum to 1 (sum=" + std::to_string(sum) + ")");
    }
    double h = 0.0;
    for (int j = 0; j < probs.cols; ++j) {
      if (p[j] > 1e-12) h -= p[j] * std::log(p[j]);
    }
    out[i] = h;
  }
  return out;
}

}  // namespace dietcl
