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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dietcl/errors.hpp"
#include "dietcl/matrix.hpp"
#include "dietcl/nn.hpp"
#include "dietcl/rng.hpp"

namespace dietcl {

// ---------------------------------------------------------------------------
// Warm-up statistics and specs
// ---------------------------------------------------------------------------

// Everything the selectors need, collected during the warm-up phase.
// Row i of every field refers to sample i of the task's training set.
struct WarmupStats {
  std::vector<std::vector<std::uint8_t>> correct;  // [sample][warmup epoch]
  Matrix final_probs;   // n x C_t, softmax over the current task's classes
  Matrix embeddings;    // n x h, last-hidden activations
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  int warmup_epochs() const {
    return correct.empty() ? 0 : static_cast<int>(correct[0].size());
  }
};

enum class SelectMethod { Random, Herding, Uncertainty, Forgetting, GraphCut };

inline std::string to_string(SelectMethod m) {
  switch (m) {
    case SelectMethod::Random: return "random";
    case SelectMethod::Herding: return "herding";
    case SelectMethod::Uncertainty: return "uncertainty";
    case SelectMethod::Forgetting: return "forgetting";
    case SelectMethod::GraphCut: return "graphcut";
  }
  return "?";
}

inline SelectMethod select_method_from_string(const std::string& s) {
  if (s == "random") return SelectMethod::Random;
  if (s == "herding") return SelectMethod::Herding;
  if (s == "uncertainty") return SelectMethod::Uncertainty;
  if (s == "forgetting") return SelectMethod::Forgetting;
  if (s == "graphcut") return SelectMethod::GraphCut;
  throw InputError("unknown selection method '" + s +
                   "' (accepted: random, herding, uncertainty, forgetting, "
                   "graphcut)");
}

struct CoresetSpec {
  SelectMethod method = SelectMethod::Random;
  double fraction = 0.1;          // s in (0,1)
  bool class_balanced = true;
  double graphcut_lambda = 1.0;
  bool invert = false;            // flips uncertainty/forgetting ranking
  bool full_data = false;         // sentinel: skip selection entirely

  void validate() const {
    if (!full_data && (fraction <= 0.0 || fraction >= 1.0)) {
      throw InputError("coreset.fraction must be in (0,1)");
    }
    if (graphcut_lambda <= 0.0) {
      throw InputError("coreset.graphcut_lambda must be > 0");
    }
  }
};

struct Coreset {
  std::vector<int> indices;        // sorted, unique, into the task train set
  SelectMethod method = SelectMethod::Random;
  double fraction = 0.0;
  std::map<int, int> quotas;       // class id -> quota (key -1 when unbalanced)
};

// ---------------------------------------------------------------------------
// Quotas
// ---------------------------------------------------------------------------

struct QuotaTable {
  int total = 0;
  bool balanced = true;
  std::map<int, int> per_class;  // class id -> quota; key -1 when unbalanced
};

// Total coreset size is round(s*n), ties away from zero. Class-balanced
// quotas use largest-remainder apportionment over the class counts, with
// remainder ties broken toward the larger class then the lower class id.
// When the total covers every class, each class keeps at least one slot.
inline QuotaTable target_size(int n, double s, bool class_balanced,
                              const std::vector<int>& labels) {
  if (n < 1) throw InputError("target_size: n must be >= 1");
  const int total = static_cast<int>(std::llround(s * n));
  if (total == 0) throw InputError("fraction too small for task size");
  QuotaTable table;
  table.total = total;
  table.balanced = class_balanced;
  if (!class_balanced) {
    table.per_class[-1] = total;
    return table;
  }
  std::map<int, int> counts;
  for (int y : labels) counts[y]++;
  const int k = static_cast<int>(counts.size());
  struct Share {
    int cls;
    int count;
    int base;
    double remainder;
  };
  std::vector<Share> shares;
  int assigned = 0;
  for (const auto& [cls, count] : counts) {
    const double raw = static_cast<double>(total) * count / n;
    Share sh{cls, count, static_cast<int>(std::floor(raw)), 0.0};
    sh.remainder = raw - sh.base;
    assigned += sh.base;
    shares.push_back(sh);
  }
  std::vector<int> order(shares.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (shares[a].remainder != shares[b].remainder)
      return shares[a].remainder > shares[b].remainder;
    if (shares[a].count != shares[b].count)
      return shares[a].count > shares[b].count;
    return shares[a].cls < shares[b].cls;
  });
  for (int i = 0; i < total - assigned; ++i) shares[order[i]].base++;
  for (const auto& sh : shares) table.per_class[sh.cls] = sh.base;
  if (total >= k) {
    // everyone gets at least one slot; donors are the largest quotas
    for (auto& [cls, q] : table.per_class) {
      while (q == 0) {
        auto donor = table.per_class.end();
        for (auto it = table.per_class.begin(); it != table.per_class.end();
             ++it) {
          if (donor == table.per_class.end() ||
              it->second > donor->second) {
            donor = it;
          }
        }
        donor->second--;
        q++;
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Selection internals
// ---------------------------------------------------------------------------

namespace detail {

// Groups samples for per-class (or global, when unbalanced) selection.
inline std::map<int, std::vector<int>> group_rows(
    const std::vector<int>& labels, bool balanced) {
  std::map<int, std::vector<int>> groups;
  if (balanced) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      groups[labels[i]].push_back(static_cast<int>(i));
    }
  } else {
    auto& all = groups[-1];
    all.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) all[i] = static_cast<int>(i);
  }
  return groups;
}

inline Coreset finish(std::vector<int> picked, SelectMethod method, double s,
                      const QuotaTable& quotas) {
  std::sort(picked.begin(), picked.end());
  Coreset out;
  out.indices = std::move(picked);
  out.method = method;
  out.fraction = s;
  out.quotas = quotas.per_class;
  return out;
}

// Greedy herding over the rows listed in `rows` (indices into emb):
// repeatedly add the candidate minimizing the distance between the subset
// mean and the full-group mean. Ties go to the lowest row index.
inline std::vector<int> herding_greedy(const Matrix& emb,
                                       const std::vector<int>& rows,
                                       int quota) {
  if (rows.empty()) throw ContractError("herding: empty candidate set");
  const int dim = emb.cols;
  std::vector<double> mu(dim, 0.0);
  for (int r : rows) {
    const double* e = emb.row(r);
    for (int d = 0; d < dim; ++d) mu[d] += e[d];
  }
  for (double& v : mu) v /= rows.size();

  std::vector<int> selected;
  std::vector<char> used(rows.size(), 0);
  std::vector<double> sum(dim, 0.0);
  for (int step = 0; step < quota; ++step) {
    int best = -1;
    double best_dist = 0.0;
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (used[c]) continue;
      const double* e = emb.row(rows[c]);
      double dist = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double diff = mu[d] - (sum[d] + e[d]) / (step + 1);
        dist += diff * diff;
      }
      if (best < 0 || dist < best_dist) {
        best = static_cast<int>(c);
        best_dist = dist;
      }
    }
    used[best] = 1;
    const double* e = emb.row(rows[best]);
    for (int d = 0; d < dim; ++d) sum[d] += e[d];
    selected.push_back(rows[best]);
  }
  return selected;
}

// Gaussian-kernel similarity with the median-distance bandwidth heuristic.
struct GraphcutInstance {
  Matrix w;  // symmetric similarity, unused diagonal
  double lambda = 1.0;
};

inline GraphcutInstance build_graphcut(const Matrix& emb,
                                       const std::vector<int>& rows,
                                       double lambda) {
  const int n = static_cast<int>(rows.size());
  GraphcutInstance inst;
  inst.lambda = lambda;
  inst.w = Matrix(n, n);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d2 =
          squared_distance(emb.row(rows[i]), emb.row(rows[j]), emb.cols);
      inst.w(i, j) = d2;  // stash squared distances, kernelized below
      dists.push_back(std::sqrt(d2));
    }
  }
  double sigma = 1.0;
  if (!dists.empty()) {
    auto mid = dists.begin() + dists.size() / 2;
    std::nth_element(dists.begin(), mid, dists.end());
    sigma = *mid > 0.0 ? *mid : 1.0;
  }
  const double denom = 2.0 * sigma * sigma;
  for (int i = 0; i < n; ++i) {
    inst.w(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double k = std::exp(-inst.w(i, j) / denom);
      inst.w(i, j) = k;
      inst.w(j, i) = k;
    }
  }
  return inst;
}

// F(S) = lambda * sum_{i not in S} sum_{j in S} w(i,j)
//        - sum_{j < j', both in S} w(j,j'), evaluated from scratch.
inline double graphcut_value(const GraphcutInstance& inst,
                             const std::vector<int>& subset) {
  const int n = inst.w.rows;
  std::vector<char> in_set(n, 0);
  for (int v : subset) in_set[v] = 1;
  double coverage = 0.0;
  double redundancy = 0.0;
  for (int i = 0; i < n; ++i) {
    if (in_set[i]) continue;
    for (int j : subset) coverage += inst.w(i, j);
  }
  for (std::size_t a = 0; a < subset.size(); ++a) {
    for (std::size_t b = a + 1; b < subset.size(); ++b) {
      redundancy += inst.w(subset[a], subset[b]);
    }
  }
  return inst.lambda * coverage - redundancy;
}

// Greedy maximization by best marginal gain; ties to the lowest index.
// Optionally records the gain taken at each step.
inline std::vector<int> graphcut_greedy(const GraphcutInstance& inst, int quota,
                                        std::vector<double>* gains = nullptr) {
  const int n = inst.w.rows;
  std::vector<double> total_w(n, 0.0);  // sum of w(v, .) over all others
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j != i) total_w[i] += inst.w(i, j);
    }
  }
  std::vector<double> sum_to_set(n, 0.0);  // sum of w(v, j) over j in S
  std::vector<char> used(n, 0);
  std::vector<int> selected;
  for (int step = 0; step < quota; ++step) {
    int best = -1;
    double best_gain = 0.0;
    for (int v = 0; v < n; ++v) {
      if (used[v]) continue;
      // Delta F = lambda * (cov_v - sum_to_set) - sum_to_set, where
      // cov_v = total_w - sum_to_set restricted to the remaining pool.
      const double gain =
          inst.lambda * (total_w[v] - 2.0 * sum_to_set[v]) - sum_to_set[v];
      if (best < 0 || gain > best_gain) {
        best = v;
        best_gain = gain;
      }
    }
    used[best] = 1;
    selected.push_back(best);
    if (gains) gains->push_back(best_gain);
    for (int v = 0; v < n; ++v) {
      if (!used[v]) sum_to_set[v] += inst.w(v, best);
    }
  }
  return selected;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Selectors
// ---------------------------------------------------------------------------

inline Coreset select_random(const std::vector<int>& labels,
                             const QuotaTable& quotas, std::uint64_t seed) {
  auto groups = detail::group_rows(labels, quotas.balanced);
  Rng rng(derive_seed(seed, 0x72616e64));
  std::vector<int> picked;
  for (const auto& [cls, quota] : quotas.per_class) {
    auto it = groups.find(cls);
    const int avail =
        it == groups.end() ? 0 : static_cast<int>(it->second.size());
    if (quota > avail) {
      throw InputError("random selection: quota " + std::to_string(quota) +
                       " exceeds class size " + std::to_string(avail));
    }
    if (quota == 0) continue;
    std::vector<int>& pool = it->second;
    for (int i = 0; i < quota; ++i) {
      std::swap(pool[i], pool[i + rng.uniform_int(static_cast<int>(pool.size()) - i)]);
      picked.push_back(pool[i]);
    }
  }
  return detail::finish(std::move(picked), SelectMethod::Random, 0.0, quotas);
}

inline Coreset select_herding(const WarmupStats& stats,
                              const QuotaTable& quotas) {
  if (stats.embeddings.rows != stats.size()) {
    throw ContractError("herding: embeddings missing or inconsistent");
  }
  auto groups = detail::group_rows(stats.labels, quotas.balanced);
  std::vector<int> picked;
  for (const auto& [cls, quota] : quotas.per_class) {
    if (quota == 0) continue;
    auto it = groups.find(cls);
    if (it == groups.end() || it->second.empty()) {
      throw ContractError("herding: class " + std::to_string(cls) +
                          " has no embeddings");
    }
    auto chosen = detail::herding_greedy(stats.embeddings, it->second, quota);
    picked.insert(picked.end(), chosen.begin(), chosen.end());
  }
  return detail::finish(std::move(picked), SelectMethod::Herding, 0.0, quotas);
}

inline Coreset select_uncertainty(const WarmupStats& stats,
                                  const QuotaTable& quotas,
                                  bool invert = false) {
  const std::vector<double> ent = entropy(stats.final_probs);
  auto groups = detail::group_rows(stats.labels, quotas.balanced);
  std::vector<int> picked;
  for (const auto& [cls, quota] : quotas.per_class) {
    auto& rows = groups[cls];
    std::sort(rows.begin(), rows.end(), [&](int a, int b) {
      if (ent[a] != ent[b]) return invert ? ent[a] < ent[b] : ent[a] > ent[b];
      return a < b;
    });
    for (int i = 0; i < quota && i < static_cast<int>(rows.size()); ++i) {
      picked.push_back(rows[i]);
    }
  }
  return detail::finish(std::move(picked), SelectMethod::Uncertainty, 0.0,
                        quotas);
}

// Number of correct->incorrect transitions across the warm-up epochs.
// Samples never classified correctly count as maximally forgettable
// (count = number of warm-up epochs).
inline std::vector<int> forgetting_counts(const WarmupStats& stats) {
  std::vector<int> counts(stats.size(), 0);
  for (int i = 0; i < stats.size(); ++i) {
    const auto& h = stats.correct[i];
    bool ever_correct = false;
    int events = 0;
    for (std::size_t e = 0; e < h.size(); ++e) {
      ever_correct = ever_correct || h[e];
      if (e > 0 && h[e - 1] && !h[e]) events++;
    }
    counts[i] = ever_correct ? events : static_cast<int>(h.size());
  }
  return counts;
}

inline Coreset select_forgetting(const WarmupStats& stats,
                                 const QuotaTable& quotas,
                                 bool invert = false) {
  if (stats.warmup_epochs() < 2) {
    throw InputError("forgetting selection needs >= 2 warm-up epochs");
  }
  const std::vector<int> counts = forgetting_counts(stats);
  auto groups = detail::group_rows(stats.labels, quotas.balanced);
  std::vector<int> picked;
  for (const auto& [cls, quota] : quotas.per_class) {
    auto& rows = groups[cls];
    std::sort(rows.begin(), rows.end(), [&](int a, int b) {
      if (counts[a] != counts[b]) {
        return invert ? counts[a] < counts[b] : counts[a] > counts[b];
      }
      const int wrong_a = stats.correct[a].back() ? 0 : 1;
      const int wrong_b = stats.correct[b].back() ? 0 : 1;
      if (wrong_a != wrong_b) return wrong_a > wrong_b;
      return a < b;
    });
    for (int i = 0; i < quota && i < static_cast<int>(rows.size()); ++i) {
      picked.push_back(rows[i]);
    }
  }
  return detail::finish(std::move(picked), SelectMethod::Forgetting, 0.0,
                        quotas);
}

inline Coreset select_graphcut(const WarmupStats& stats,
                               const QuotaTable& quotas, double lambda) {
  if (stats.embeddings.rows != stats.size()) {
    throw ContractError("graphcut: embeddings missing or inconsistent");
  }
  if (lambda <= 0.0) throw InputError("graphcut: lambda must be > 0");
  auto groups = detail::group_rows(stats.labels, quotas.balanced);
  std::vector<int> picked;
  for (const auto& [cls, quota] : quotas.per_class) {
    if (quota == 0) continue;
    auto it = groups.find(cls);
    const int avail =
        it == groups.end() ? 0 : static_cast<int>(it->second.size());
    if (avail < quota) {
      throw InputError("graphcut: class " + std::to_string(cls) + " has " +
                       std::to_string(avail) + " samples, quota is " +
                       std::to_string(quota));
    }
    auto inst = detail::build_graphcut(stats.embeddings, it->second, lambda);
    for (int local : detail::graphcut_greedy(inst, quota)) {
      picked.push_back(it->second[local]);
    }
  }
  return detail::finish(std::move(picked), SelectMethod::GraphCut, 0.0, quotas);
}

// Dispatcher used by the protocol: computes quotas then runs the selector.
inline Coreset select_coreset(const CoresetSpec& spec, const WarmupStats& stats,
                              std::uint64_t seed) {
  spec.validate();
  const QuotaTable quotas =
      target_size(stats.size(), spec.fraction, spec.class_balanced,
                  stats.labels);
  Coreset out;
  switch (spec.method) {
    case SelectMethod::Random:
      out = select_random(stats.labels, quotas, seed);
      break;
    case SelectMethod::Herding:
      out = select_herding(stats, quotas);
      break;
    case SelectMethod::Uncertainty:
      out = select_uncertainty(stats, quotas, spec.invert);
      break;
    case SelectMethod::Forgetting:
      out = select_forgetting(stats, quotas, spec.invert);
      break;
    case SelectMethod::GraphCut:
      out = select_graphcut(stats, quotas, spec.graphcut_lambda);
      break;
  }
  out.fraction = spec.fraction;
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

enum class BruteObjective { Herding, GraphCut };

struct BruteForceResult {
  std::vector<int> indices;  // rows of the embedding matrix, sorted
  double value = 0.0;        // herding: distance (min); graphcut: F (max)
};

// Exhaustive enumeration of all quota-sized subsets under the same objective
// and similarity definitions the greedy selectors use. Refuses n > 16.
inline BruteForceResult brute_force_select(BruteObjective objective,
                                           const Matrix& embeddings, int quota,
                                           double lambda = 1.0) {
  const int n = embeddings.rows;
  if (n > 16) {
    throw InputError("brute_force_select: refusing instance with n=" +
                     std::to_string(n) + " (> 16)");
  }
  if (quota < 1 || quota > n) {
    throw InputError("brute_force_select: quota out of range");
  }
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;

  std::vector<double> mu;
  detail::GraphcutInstance inst;
  if (objective == BruteObjective::Herding) {
    mu = column_means(embeddings);
  } else {
    inst = detail::build_graphcut(embeddings, rows, lambda);
  }

  auto evaluate = [&](const std::vector<int>& subset) {
    if (objective == BruteObjective::GraphCut) {
      return detail::graphcut_value(inst, subset);
    }
    std::vector<double> mean(embeddings.cols, 0.0);
    for (int r : subset) {
      const double* e = embeddings.row(r);
      for (int d = 0; d < embeddings.cols; ++d) mean[d] += e[d];
    }
    double dist = 0.0;
    for (int d = 0; d < embeddings.cols; ++d) {
      const double diff = mu[d] - mean[d] / subset.size();
      dist += diff * diff;
    }
    return std::sqrt(dist);
  };

  const bool maximize = objective == BruteObjective::GraphCut;
  BruteForceResult best;
  bool have_best = false;
  std::vector<int> subset(quota);
  // enumerate k-subsets in lexicographic order
  for (int i = 0; i < quota; ++i) subset[i] = i;
  while (true) {
    const double value = evaluate(subset);
    if (!have_best || (maximize ? value > best.value : value < best.value)) {
      best.value = value;
      best.indices = subset;
      have_best = true;
    }
    int i = quota - 1;
    while (i >= 0 && subset[i] == n - quota + i) --i;
    if (i < 0) break;
    subset[i]++;
    for (int j = i + 1; j < quota; ++j) subset[j] = subset[j - 1] + 1;
  }
  return best;
}

}  // namespace dietcl
