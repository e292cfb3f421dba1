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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>

#include "dietcl/coreset.hpp"
#include "test_support.hpp"

using namespace dietcl;

namespace {

// Stats with 1-D embeddings given per class; probes selectors in isolation.
WarmupStats stats_1d(const std::vector<double>& values,
                     const std::vector<int>& labels) {
  WarmupStats s;
  s.labels = labels;
  s.embeddings = Matrix(static_cast<int>(values.size()), 1);
  s.embeddings.data = values;
  return s;
}

WarmupStats random_stats(Rng& rng, int n, int classes, int dim) {
  WarmupStats s;
  s.embeddings = oracle::random_batch(rng, n, dim);
  for (int i = 0; i < n; ++i) s.labels.push_back(rng.uniform_int(classes));
  return s;
}

}  // namespace

TEST_CASE("target_size: totals and largest-remainder quotas") {
  std::vector<int> labels(5000, 0);
  auto t = target_size(5000, 0.1, false, labels);
  CHECK(t.total == 500);

  std::vector<int> two_class = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  auto balanced = target_size(10, 0.2, true, two_class);
  CHECK(balanced.total == 2);
  CHECK(balanced.per_class.at(0) == 1);
  CHECK(balanced.per_class.at(1) == 1);

  // classes sized (7,3), s=0.5: raw shares 3.5/1.5, tie toward the larger
  std::vector<int> skewed(7, 0);
  skewed.insert(skewed.end(), 3, 1);
  auto sk = target_size(10, 0.5, true, skewed);
  CHECK(sk.per_class.at(0) == 4);
  CHECK(sk.per_class.at(1) == 1);

  CHECK_THROWS_AS(target_size(10, 0.01, true, two_class), InputError);
}

TEST_CASE("target_size: apportionment fuzz against independent recompute") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int classes = 1 + rng.uniform_int(8);
    std::vector<int> labels;
    for (int c = 0; c < classes; ++c) {
      const int count = 1 + rng.uniform_int(40);
      labels.insert(labels.end(), count, c);
    }
    const int n = static_cast<int>(labels.size());
    const double s = rng.uniform(0.05, 0.95);
    const int total = static_cast<int>(std::llround(s * n));
    if (total == 0) continue;
    auto table = target_size(n, s, true, labels);
    // sum law
    int sum = 0;
    for (auto& [cls, q] : table.per_class) sum += q;
    CHECK(sum == total);
    // quota within class size and >= 1 when feasible
    std::map<int, int> counts;
    for (int y : labels) counts[y]++;
    for (auto& [cls, q] : table.per_class) {
      CHECK(q <= counts[cls]);
      if (total >= classes) CHECK(q >= 1);
      // never more than one above the floor share unless bumped for the
      // at-least-one rule
      const double raw = double(total) * counts[cls] / n;
      CHECK(q <= std::max(1, int(std::floor(raw)) + 1));
    }
  }
}

TEST_CASE("select_random: whole class, determinism, pair uniformity") {
  std::vector<int> labels(6, 0);
  QuotaTable q;
  q.total = 6;
  q.balanced = true;
  q.per_class[0] = 6;
  auto all = select_random(labels, q, 5);
  CHECK(all.indices == std::vector<int>{0, 1, 2, 3, 4, 5});

  q.per_class[0] = 3;
  q.total = 3;
  auto a = select_random(labels, q, 5);
  auto b = select_random(labels, q, 5);
  CHECK(a.indices == b.indices);
  CHECK(a.indices.size() == 3);

  q.per_class[0] = 7;
  CHECK_THROWS_AS(select_random(labels, q, 5), InputError);

  // 10 choose 2, 10k seeds: every pair within 3 sigma of uniform
  std::vector<int> ten(10, 0);
  QuotaTable q2;
  q2.total = 2;
  q2.balanced = true;
  q2.per_class[0] = 2;
  std::map<std::pair<int, int>, int> freq;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto cs = select_random(ten, q2, 1000 + t);
    freq[{cs.indices[0], cs.indices[1]}]++;
  }
  const double p = 1.0 / 45.0;
  const double mean = trials * p;
  const double sigma = std::sqrt(trials * p * (1 - p));
  CHECK(freq.size() == 45);
  for (auto& [pair, count] : freq) {
    CHECK(std::fabs(count - mean) <= 3.0 * sigma);
  }
}

TEST_CASE("herding: singleton pick, full class, per-step optimality") {
  auto stats = stats_1d({0, 1, 2, 9}, {0, 0, 0, 0});
  QuotaTable q;
  q.total = 1;
  q.balanced = true;
  q.per_class[0] = 1;
  auto cs = select_herding(stats, q);
  CHECK(cs.indices == std::vector<int>{2});  // closest to the mean 3

  q.per_class[0] = 4;
  q.total = 4;
  auto full = select_herding(stats, q);
  CHECK(full.indices == std::vector<int>{0, 1, 2, 3});

  // each greedy step achieves the per-step minimum over all remaining
  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + rng.uniform_int(30);
    WarmupStats st = random_stats(rng, n, 1, 3);
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    const int quota = 1 + rng.uniform_int(n);
    auto picked = detail::herding_greedy(st.embeddings, rows, quota);
    // replay greedily with an exhaustive per-step scan
    std::vector<double> mu = column_means(st.embeddings);
    std::vector<char> used(n, 0);
    std::vector<double> sum(st.embeddings.cols, 0.0);
    for (int step = 0; step < quota; ++step) {
      double best = -1;
      for (int v = 0; v < n; ++v) {
        if (used[v]) continue;
        double dist = 0;
        for (int d = 0; d < st.embeddings.cols; ++d) {
          const double diff =
              mu[d] - (sum[d] + st.embeddings(v, d)) / (step + 1);
          dist += diff * diff;
        }
        if (best < 0 || dist < best) best = dist;
      }
      // the chosen element achieves that minimum
      double got = 0;
      for (int d = 0; d < st.embeddings.cols; ++d) {
        const double diff =
            mu[d] - (sum[d] + st.embeddings(picked[step], d)) / (step + 1);
        got += diff * diff;
      }
      CHECK(got == doctest::Approx(best).epsilon(1e-12));
      used[picked[step]] = 1;
      for (int d = 0; d < st.embeddings.cols; ++d) {
        sum[d] += st.embeddings(picked[step], d);
      }
    }
  }
}

TEST_CASE("herding with quota == class size recovers the class mean") {
  Rng rng(33);
  WarmupStats st = random_stats(rng, 12, 1, 4);
  QuotaTable q;
  q.total = 12;
  q.balanced = true;
  q.per_class[0] = 12;
  auto cs = select_herding(st, q);
  CHECK(cs.indices.size() == 12);
  Matrix sel = gather_rows(st.embeddings, cs.indices);
  auto mean_sel = column_means(sel);
  auto mean_all = column_means(st.embeddings);
  for (int d = 0; d < 4; ++d) {
    CHECK(mean_sel[d] == doctest::Approx(mean_all[d]).epsilon(1e-12));
  }
}

TEST_CASE("uncertainty: picks maximal entropy, ties by id") {
  WarmupStats s;
  s.labels = {0, 0, 0};
  s.final_probs = Matrix(3, 4, 0.0);
  s.final_probs(0, 0) = 1.0;  // one-hot
  for (int j = 0; j < 4; ++j) s.final_probs(1, j) = 0.25;  // uniform
  s.final_probs(2, 1) = 0.97;
  s.final_probs(2, 0) = 0.01;
  s.final_probs(2, 2) = 0.01;
  s.final_probs(2, 3) = 0.01;
  QuotaTable q;
  q.total = 1;
  q.balanced = true;
  q.per_class[0] = 1;
  CHECK(select_uncertainty(s, q).indices == std::vector<int>{1});
  CHECK(select_uncertainty(s, q, /*invert=*/true).indices ==
        std::vector<int>{0});

  // all rows identical -> lowest ids win
  WarmupStats tie;
  tie.labels = {0, 0, 0, 0};
  tie.final_probs = Matrix(4, 2, 0.5);
  QuotaTable q2;
  q2.total = 2;
  q2.balanced = true;
  q2.per_class[0] = 2;
  CHECK(select_uncertainty(tie, q2).indices == std::vector<int>{0, 1});

  // ranking matches an independent extended-precision entropy recomputation
  Rng rng(34);
  WarmupStats rs;
  const int n = 40;
  rs.labels.assign(n, 0);
  Matrix logits = oracle::random_batch(rng, n, 5, 3.0);
  rs.final_probs = softmax(logits);
  QuotaTable q3;
  q3.total = 10;
  q3.balanced = true;
  q3.per_class[0] = 10;
  auto cs = select_uncertainty(rs, q3);
  std::vector<std::pair<long double, int>> ranked;
  for (int i = 0; i < n; ++i) {
    long double h = 0.0L;
    for (int j = 0; j < 5; ++j) {
      const long double p = rs.final_probs(i, j);
      if (p > 0) h -= p * std::log(p);
    }
    ranked.push_back({-h, i});  // descending entropy
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<int> want;
  for (int i = 0; i < 10; ++i) want.push_back(ranked[i].second);
  std::sort(want.begin(), want.end());
  CHECK(cs.indices == want);
}

TEST_CASE("forgetting: event counts and never-learned convention") {
  WarmupStats s;
  s.labels = {0, 0, 0};
  s.correct = {{1, 0, 1, 0}, {0, 0, 1, 1}, {0, 0, 0, 0}};
  auto counts = forgetting_counts(s);
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 0);
  CHECK(counts[2] == 4);  // never learned over 4 epochs

  WarmupStats s3;
  s3.labels = {0};
  s3.correct = {{0, 0, 0}};
  CHECK(forgetting_counts(s3)[0] == 3);

  // never-learned ranks above any (1,...)-prefixed history with <= 2 events
  WarmupStats rank;
  rank.labels = {0, 0};
  rank.correct = {{1, 0, 1, 0}, {0, 0, 0, 0}};
  QuotaTable q;
  q.total = 1;
  q.balanced = true;
  q.per_class[0] = 1;
  CHECK(select_forgetting(rank, q).indices == std::vector<int>{1});

  WarmupStats narrow;
  narrow.labels = {0};
  narrow.correct = {{1}};
  CHECK_THROWS_AS(select_forgetting(narrow, q), InputError);
}

TEST_CASE("forgetting tie-break: final-epoch incorrectness then id") {
  WarmupStats s;
  s.labels = {0, 0, 0};
  // all have exactly one forgetting event
  s.correct = {{1, 0, 1, 1}, {1, 1, 1, 0}, {1, 0, 1, 1}};
  QuotaTable q;
  q.total = 1;
  q.balanced = true;
  q.per_class[0] = 1;
  // sample 1 ends the warm-up misclassified, so it outranks 0 and 2
  CHECK(select_forgetting(s, q).indices == std::vector<int>{1});
}

TEST_CASE("graphcut: identical points tie to lowest id") {
  auto stats = stats_1d({1.0, 1.0}, {0, 0});
  QuotaTable q;
  q.total = 1;
  q.balanced = true;
  q.per_class[0] = 1;
  CHECK(select_graphcut(stats, q, 1.0).indices == std::vector<int>{0});

  q.per_class[0] = 3;
  CHECK_THROWS_AS(select_graphcut(stats, q, 1.0), InputError);
}

TEST_CASE("graphcut: greedy gains equal from-scratch F differences") {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + rng.uniform_int(9);  // up to 12
    Matrix emb = oracle::random_batch(rng, n, 3);
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    auto inst = detail::build_graphcut(emb, rows, 1.0);
    const int quota = 1 + rng.uniform_int(std::min(4, n));
    std::vector<double> gains;
    auto picked = detail::graphcut_greedy(inst, quota, &gains);
    std::vector<int> prefix;
    double prev = 0.0;
    for (int step = 0; step < quota; ++step) {
      prefix.push_back(picked[step]);
      const double now = detail::graphcut_value(inst, prefix);
      CHECK(std::fabs(gains[step] - (now - prev)) <= 1e-9);
      prev = now;
    }
  }
}

TEST_CASE("graphcut greedy is near the exhaustive optimum") {
  // Kept to quota <= n/3: past that the redundancy term dominates this
  // non-monotone objective and plain greedy loses its empirical margin.
  Rng rng(36);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 10 + rng.uniform_int(3);  // 10..12
    Matrix emb(n, 16);
    for (double& v : emb.data) v = rng.gaussian();
    const int quota = 1 + rng.uniform_int(4);
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    auto inst = detail::build_graphcut(emb, rows, 1.0);
    auto greedy = detail::graphcut_greedy(inst, quota);
    const double got = detail::graphcut_value(inst, greedy);
    auto best = brute_force_select(BruteObjective::GraphCut, emb, quota, 1.0);
    CHECK(got >= 0.9 * best.value);
    CHECK(got <= best.value + 1e-9);
  }
}

TEST_CASE("brute force: full set, herding hand case, refusal") {
  Matrix emb(4, 1);
  emb.data = {0, 1, 2, 9};
  auto full = brute_force_select(BruteObjective::Herding, emb, 4);
  CHECK(full.indices == std::vector<int>{0, 1, 2, 3});
  CHECK(full.value == doctest::Approx(0.0));

  auto one = brute_force_select(BruteObjective::Herding, emb, 1);
  CHECK(one.indices == std::vector<int>{2});
  CHECK(one.value == doctest::Approx(1.0));

  Matrix big(17, 1, 0.0);
  CHECK_THROWS_AS(brute_force_select(BruteObjective::Herding, big, 2),
                  InputError);
}

TEST_CASE("greedy herding matches brute force on singletons") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + rng.uniform_int(10);
    Matrix emb = oracle::random_batch(rng, n, 2);
    auto bf = brute_force_select(BruteObjective::Herding, emb, 1);
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    auto greedy = detail::herding_greedy(emb, rows, 1);
    CHECK(greedy[0] == bf.indices[0]);
  }
}

TEST_CASE("size and balance laws across all methods") {
  Rng rng(38);
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = 1 + rng.uniform_int(4);
    std::vector<int> labels;
    for (int c = 0; c < classes; ++c) {
      labels.insert(labels.end(), 2 + rng.uniform_int(20), c);
    }
    Rng sh(rng.next_u64());
    sh.shuffle(labels);
    const int n = static_cast<int>(labels.size());
    const double s = rng.uniform(0.1, 0.9);
    if (std::llround(s * n) == 0) continue;

    WarmupStats stats;
    stats.labels = labels;
    stats.embeddings = oracle::random_batch(rng, n, 3);
    Matrix logits = oracle::random_batch(rng, n, 4, 2.0);
    stats.final_probs = softmax(logits);
    stats.correct.resize(n);
    for (auto& h : stats.correct) {
      h.resize(3);
      for (auto& bit : h) bit = rng.uniform_int(2);
    }

    for (auto method :
         {SelectMethod::Random, SelectMethod::Herding, SelectMethod::Uncertainty,
          SelectMethod::Forgetting, SelectMethod::GraphCut}) {
      CoresetSpec spec;
      spec.method = method;
      spec.fraction = s;
      spec.class_balanced = true;
      Coreset cs = select_coreset(spec, stats, trial);
      const auto table = target_size(n, s, true, labels);
      CHECK(static_cast<int>(cs.indices.size()) == table.total);
      // unique, in range
      std::set<int> uniq(cs.indices.begin(), cs.indices.end());
      CHECK(uniq.size() == cs.indices.size());
      CHECK(*uniq.begin() >= 0);
      CHECK(*uniq.rbegin() < n);
      // per-class counts match the quota table exactly
      std::map<int, int> got;
      for (int i : cs.indices) got[labels[i]]++;
      for (auto& [cls, quota] : table.per_class) {
        CHECK(got[cls] == quota);
      }
    }
  }
}

TEST_CASE("selectors are pure functions of stats, quotas, seed") {
  Rng rng(39);
  WarmupStats stats = random_stats(rng, 30, 3, 4);
  Matrix logits = oracle::random_batch(rng, 30, 4, 2.0);
  stats.final_probs = softmax(logits);
  stats.correct.assign(30, std::vector<std::uint8_t>(4, 0));
  for (auto& h : stats.correct) {
    for (auto& b : h) b = rng.uniform_int(2);
  }
  for (auto method :
       {SelectMethod::Random, SelectMethod::Herding, SelectMethod::Uncertainty,
        SelectMethod::Forgetting, SelectMethod::GraphCut}) {
    CoresetSpec spec;
    spec.method = method;
    spec.fraction = 0.3;
    auto a = select_coreset(spec, stats, 77);
    auto b = select_coreset(spec, stats, 77);
    CHECK(a.indices == b.indices);
  }
}
