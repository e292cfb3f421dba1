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

// Results persistence and the library-level implementations behind the CLI
// subcommands: run, grid, oracle, export. record.json, matrix.csv and
// coreset.json are byte-deterministic for a given config+seed; wall-clock
// timings go to a separate timing.csv.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dietcl/checkpoint.hpp"
#include "dietcl/config.hpp"
#include "dietcl/protocol.hpp"

namespace dietcl {

inline std::string method_label(const CoresetSpec& spec) {
  return spec.full_data ? "full" : to_string(spec.method);
}

inline std::string output_root(const RunConfig& cfg) {
  if (const char* env = std::getenv("DIETCL_OUT")) {
    if (*env) return env;
  }
  return cfg.out_dir;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("short write to " + path);
}

inline nlohmann::json coreset_json(const Coreset& cs, int task_index,
                                   const RunConfig& cfg) {
  nlohmann::json j;
  j["task"] = task_index;
  j["method"] = cfg.coreset.full_data ? "full" : to_string(cs.method);
  j["fraction"] = cs.fraction;
  j["graphcut_lambda"] = cfg.coreset.graphcut_lambda;
  j["size"] = cs.indices.size();
  nlohmann::json quotas = nlohmann::json::object();
  for (const auto& [cls, q] : cs.quotas) {
    quotas[std::to_string(cls)] = q;
  }
  j["quotas"] = quotas;
  j["indices"] = cs.indices;
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// record.json
// ---------------------------------------------------------------------------

inline std::string record_to_json(const RunRecord& record,
                                  const RunConfig& cfg) {
  nlohmann::json j;
  j["schema"] = "dietcl-record-v1";
  j["run_id"] = record.run_id;
  j["complete"] = record.complete;
  if (!record.error.empty()) j["error"] = record.error;
  j["config"] = config_key_values(cfg);
  j["matrix"] = record.matrix.rows;
  if (record.complete) {
    j["acc"] = record.acc_value;
    if (record.bwt_value) j["bwt"] = *record.bwt_value;
  }
  j["weight_deltas"] = record.weight_deltas;
  nlohmann::json coresets = nlohmann::json::array();
  for (std::size_t t = 0; t < record.coresets.size(); ++t) {
    coresets.push_back(detail::coreset_json(record.coresets[t],
                                            static_cast<int>(t) + 1, cfg));
  }
  j["coresets"] = coresets;
  return j.dump(2) + "\n";
}

inline std::string matrix_to_csv(const AccuracyMatrix& m) {
  const int T = m.tasks();
  std::string out = "after_task";
  for (int i = 1; i <= T; ++i) out += ",task_" + std::to_string(i);
  out += "\n";
  for (int t = 0; t < T; ++t) {
    out += std::to_string(t + 1);
    for (int i = 0; i < T; ++i) {
      out += ",";
      if (i < static_cast<int>(m.rows[t].size())) {
        out += detail::fmt_double(m.rows[t][i]);
      }
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunPaths {
  std::string dir;
  std::string record_json;
  std::string matrix_csv;
  std::string coreset_json;
  std::string checkpoint;
  std::string timing_csv;
};

inline RunPaths cmd_run(const RunConfig& cfg, const RunHooks& hooks = {}) {
  cfg.validate();
  const TaskStream stream = build_stream(cfg.stream);
  RunOutput out = run_stream(stream, cfg, hooks);
  out.record.run_id = run_id_for(cfg);

  namespace fs = std::filesystem;
  RunPaths paths;
  paths.dir = (fs::path(output_root(cfg)) / out.record.run_id).string();
  fs::create_directories(paths.dir);
  paths.record_json = (fs::path(paths.dir) / "record.json").string();
  paths.matrix_csv = (fs::path(paths.dir) / "matrix.csv").string();
  paths.coreset_json = (fs::path(paths.dir) / "coreset.json").string();
  paths.checkpoint = (fs::path(paths.dir) / "checkpoint.bin").string();
  paths.timing_csv = (fs::path(paths.dir) / "timing.csv").string();

  detail::write_file(paths.record_json, record_to_json(out.record, cfg));
  detail::write_file(paths.matrix_csv, matrix_to_csv(out.record.matrix));
  {
    nlohmann::json j;
    nlohmann::json tasks = nlohmann::json::array();
    for (std::size_t t = 0; t < out.record.coresets.size(); ++t) {
      tasks.push_back(detail::coreset_json(out.record.coresets[t],
                                           static_cast<int>(t) + 1, cfg));
    }
    j["tasks"] = tasks;
    detail::write_file(paths.coreset_json, j.dump(2) + "\n");
  }
  {
    std::string timing = "task,seconds\n";
    for (std::size_t t = 0; t < out.record.task_seconds.size(); ++t) {
      timing += std::to_string(t + 1) + "," +
                detail::fmt_double(out.record.task_seconds[t]) + "\n";
    }
    detail::write_file(paths.timing_csv, timing);
  }
  if (out.record.complete) {
    save_checkpoint(*out.learner, paths.checkpoint);
  }
  if (!out.record.complete) {
    throw TrainingError("run " + out.record.run_id +
                        " aborted: " + out.record.error +
                        " (partial record written to " + paths.record_json +
                        ")");
  }
  return paths;
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

struct GridRow {
  std::string learner;
  std::string selector;
  std::string fraction;  // decimal string or "full"
  std::uint64_t seed = 0;
  double acc = 0.0;
  std::optional<double> bwt;
  double seconds = 0.0;
  bool ok = false;
  std::string error;
};

struct GridPaths {
  std::string dir;
  std::string results_csv;
  std::string summary_csv;
  std::vector<GridRow> rows;
  int failed_cells = 0;
};

inline RunConfig grid_cell_config(const RunConfig& base, LearnerKind learner,
                                  std::optional<SelectMethod> method,
                                  const std::string& fraction,
                                  std::uint64_t seed) {
  RunConfig cfg = base;
  cfg.learner = learner;
  cfg.learner_params = default_params(learner);
  cfg.seed = seed;
  if (fraction == "full") {
    cfg.coreset.full_data = true;
  } else {
    cfg.coreset.full_data = false;
    cfg.coreset.fraction = std::stod(fraction);
    cfg.coreset.method = *method;
  }
  return cfg;
}

inline std::string results_table_csv(const std::vector<GridRow>& rows) {
  std::string out = "learner,selector,fraction,seed,acc,bwt,seconds,status\n";
  for (const auto& r : rows) {
    out += r.learner + "," + r.selector + "," + r.fraction + "," +
           std::to_string(r.seed) + ",";
    if (r.ok) out += detail::fmt_double(r.acc);
    out += ",";
    if (r.ok && r.bwt) out += detail::fmt_double(*r.bwt);
    out += "," + detail::fmt_double(r.seconds) + ",";
    out += r.ok ? "ok" : ("failed:" + r.error);
    out += "\n";
  }
  return out;
}

// Wide table in the familiar accuracy-per-fraction layout, one row per
// (learner, selector), cells "mean +- std" in percent over the seeds.
inline std::string summary_table_csv(const std::vector<GridRow>& rows,
                                     const GridSpec& grid) {
  std::vector<std::string> fractions = grid.fractions;
  std::stable_partition(fractions.begin(), fractions.end(),
                        [](const std::string& f) { return f != "full"; });
  auto cell = [&](const std::string& learner, const std::string& selector,
                  const std::string& fraction) -> std::string {
    std::vector<double> accs;
    const std::string want_selector = fraction == "full" ? "full" : selector;
    for (const auto& r : rows) {
      if (r.ok && r.learner == learner && r.selector == want_selector &&
          r.fraction == fraction) {
        accs.push_back(r.acc);
      }
    }
    if (accs.empty()) return "";
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= accs.size();
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double std_dev =
        accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f +- %.2f", 100.0 * mean,
                  100.0 * std_dev);
    return buf;
  };

  std::string out = "learner,selector";
  for (const auto& f : fractions) out += "," + f;
  out += "\n";
  for (LearnerKind learner : grid.learners) {
    for (SelectMethod method : grid.methods) {
      out += to_string(learner) + "," + to_string(method);
      for (const auto& f : fractions) {
        out += "," + cell(to_string(learner), to_string(method), f);
      }
      out += "\n";
    }
  }
  return out;
}

// Runs every cell of the sweep in a bounded worker pool; individual cell
// failures are recorded and the grid continues.
inline GridPaths cmd_grid(const RunConfig& base, const GridSpec& grid,
                          bool write_per_run_dirs = false) {
  grid.validate();
  base.validate();

  struct Cell {
    LearnerKind learner;
    std::optional<SelectMethod> method;
    std::string fraction;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (LearnerKind learner : grid.learners) {
    for (const auto& fraction : grid.fractions) {
      if (fraction == "full") continue;
      for (SelectMethod method : grid.methods) {
        for (std::uint64_t seed : grid.seeds) {
          cells.push_back({learner, method, fraction, seed});
        }
      }
    }
    // the no-selection baseline runs once per (learner, seed)
    if (std::find(grid.fractions.begin(), grid.fractions.end(), "full") !=
        grid.fractions.end()) {
      for (std::uint64_t seed : grid.seeds) {
        cells.push_back({learner, std::nullopt, "full", seed});
      }
    }
  }

  std::vector<GridRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int workers =
      std::max(1, std::min<int>(grid.workers > 0 ? grid.workers : hw,
                                static_cast<int>(cells.size())));
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      GridRow& row = rows[i];
      row.learner = to_string(cell.learner);
      row.selector = cell.fraction == "full" ? "full" : to_string(*cell.method);
      row.fraction = cell.fraction;
      row.seed = cell.seed;
      const auto started = std::chrono::steady_clock::now();
      try {
        const RunConfig cfg = grid_cell_config(base, cell.learner, cell.method,
                                               cell.fraction, cell.seed);
        const TaskStream stream = build_stream(cfg.stream);
        RunOutput out = run_stream(stream, cfg);
        if (!out.record.complete) throw TrainingError(out.record.error);
        row.acc = out.record.acc_value;
        row.bwt = out.record.bwt_value;
        row.ok = true;
      } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
      }
      row.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - started)
                        .count();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();

  // deterministic order before writing
  std::sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    return std::tie(a.learner, a.selector, a.fraction, a.seed) <
           std::tie(b.learner, b.selector, b.fraction, b.seed);
  });

  namespace fs = std::filesystem;
  GridPaths paths;
  RunConfig stamp = base;
  const std::string grid_id = run_id_for(stamp);
  paths.dir = (fs::path(output_root(base)) / ("grid-" + grid_id)).string();
  fs::create_directories(paths.dir);
  paths.results_csv = (fs::path(paths.dir) / "results.csv").string();
  paths.summary_csv = (fs::path(paths.dir) / "summary.csv").string();
  detail::write_file(paths.results_csv, results_table_csv(rows));
  detail::write_file(paths.summary_csv, summary_table_csv(rows, grid));
  detail::write_file((fs::path(paths.dir) / "config.txt").string(),
                     serialize_config(base));
  for (const auto& r : rows) {
    if (!r.ok) ++paths.failed_cells;
  }
  paths.rows = std::move(rows);
  (void)write_per_run_dirs;
  return paths;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

struct OracleReport {
  std::string objective;
  int n = 0;
  int quota = 0;
  double lambda = 1.0;
  std::vector<int> greedy;
  double greedy_value = 0.0;
  std::vector<int> optimal;
  double optimal_value = 0.0;
};

// Instance file: `objective herding|graphcut`, `quota K`, optional
// `lambda X`, then one `point v1 v2 ...` per line.
inline OracleReport cmd_oracle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open instance file: " + path);
  OracleReport report;
  std::vector<std::vector<double>> points;
  std::string line;
  int line_no = 0;
  int quota = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::stringstream ss(line);
    std::string head;
    if (!(ss >> head)) continue;
    auto bad = [&](const std::string& why) {
      return ParseError(path + ": line " + std::to_string(line_no) + ": " +
                        why);
    };
    if (head == "objective") {
      if (!(ss >> report.objective) ||
          (report.objective != "herding" && report.objective != "graphcut")) {
        throw bad("objective must be 'herding' or 'graphcut'");
      }
    } else if (head == "quota") {
      if (!(ss >> quota) || quota < 1) throw bad("quota must be >= 1");
    } else if (head == "lambda") {
      if (!(ss >> report.lambda) || report.lambda <= 0.0) {
        throw bad("lambda must be > 0");
      }
    } else if (head == "point") {
      std::vector<double> p;
      double v;
      while (ss >> v) p.push_back(v);
      if (p.empty()) throw bad("point needs at least one coordinate");
      if (!points.empty() && points[0].size() != p.size()) {
        throw bad("inconsistent point dimension");
      }
      points.push_back(std::move(p));
    } else {
      throw bad("unknown directive '" + head + "'");
    }
  }
  if (report.objective.empty()) {
    throw ParseError(path + ": missing 'objective' line");
  }
  if (quota < 1) throw ParseError(path + ": missing 'quota' line");
  if (points.empty()) throw ParseError(path + ": no points");
  report.n = static_cast<int>(points.size());
  report.quota = quota;
  if (quota > report.n) {
    throw InputError(path + ": quota exceeds the number of points");
  }

  Matrix emb(report.n, static_cast<int>(points[0].size()));
  for (int i = 0; i < report.n; ++i) {
    std::copy(points[i].begin(), points[i].end(), emb.row(i));
  }
  std::vector<int> rows(report.n);
  for (int i = 0; i < report.n; ++i) rows[i] = i;

  if (report.objective == "herding") {
    report.greedy = detail::herding_greedy(emb, rows, quota);
    std::sort(report.greedy.begin(), report.greedy.end());
    const auto mu = column_means(emb);
    Matrix sel = gather_rows(emb, report.greedy);
    const auto mean_sel = column_means(sel);
    double dist = 0.0;
    for (int d = 0; d < emb.cols; ++d) {
      const double diff = mu[d] - mean_sel[d];
      dist += diff * diff;
    }
    report.greedy_value = std::sqrt(dist);
    auto best = brute_force_select(BruteObjective::Herding, emb, quota);
    report.optimal = best.indices;
    report.optimal_value = best.value;
  } else {
    auto inst = detail::build_graphcut(emb, rows, report.lambda);
    report.greedy = detail::graphcut_greedy(inst, quota);
    report.greedy_value = detail::graphcut_value(inst, report.greedy);
    std::sort(report.greedy.begin(), report.greedy.end());
    auto best =
        brute_force_select(BruteObjective::GraphCut, emb, quota, report.lambda);
    report.optimal = best.indices;
    report.optimal_value = best.value;
  }
  return report;
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

// Long-format, plot-ready CSV derived purely from the run directory.
inline std::string cmd_export(const std::string& run_dir,
                              const std::string& kind) {
  namespace fs = std::filesystem;
  const fs::path dir(run_dir);
  const fs::path record_path = dir / "record.json";
  if (!fs::exists(record_path)) {
    throw IoError("missing artifact: " + record_path.string());
  }
  nlohmann::json record;
  {
    std::ifstream in(record_path);
    try {
      in >> record;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(record_path.string() + ": " + e.what());
    }
  }
  const fs::path out_path = dir / ("export_" + kind + ".csv");
  std::string csv;

  if (kind == "accuracy-heatmap") {
    csv = "after_task,task,accuracy\n";
    const auto& matrix = record.at("matrix");
    for (std::size_t t = 0; t < matrix.size(); ++t) {
      for (std::size_t i = 0; i < matrix[t].size(); ++i) {
        csv += std::to_string(t + 1) + "," + std::to_string(i + 1) + "," +
               detail::fmt_double(matrix[t][i].get<double>()) + "\n";
      }
    }
  } else if (kind == "weight-deltas") {
    csv = "from_task,to_task,delta\n";
    const auto& deltas = record.at("weight_deltas");
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      csv += std::to_string(i + 1) + "," + std::to_string(i + 2) + "," +
             detail::fmt_double(deltas[i].get<double>()) + "\n";
    }
  } else if (kind == "saliency" || kind == "pca") {
    const fs::path ckpt = dir / "checkpoint.bin";
    if (!fs::exists(ckpt)) {
      throw IoError("missing artifact: " + ckpt.string());
    }
    // the echoed config regenerates the exact stream the run saw
    std::string cfg_text;
    for (const auto& [key, value] :
         record.at("config").get<std::map<std::string, std::string>>()) {
      cfg_text += key + " = " + value + "\n";
    }
    const ParsedConfig parsed = parse_config_text(cfg_text);
    const TaskStream stream = build_stream(parsed.run.stream);
    auto learner = load_checkpoint(ckpt.string());

    if (kind == "saliency") {
      // the first encountered task, probed after all learning sessions
      csv = "sample_id,label,feature,saliency\n";
      for (const Sample& s : stream.tasks.front().test) {
        const auto sal = learner->saliency(s.features, s.label);
        for (std::size_t f = 0; f < sal.size(); ++f) {
          csv += std::to_string(s.id) + "," + std::to_string(s.label) + "," +
                 std::to_string(f) + "," + detail::fmt_double(sal[f]) + "\n";
        }
      }
    } else {
      std::vector<const Sample*> samples;
      std::vector<int> task_of;
      for (const Task& task : stream.tasks) {
        for (const Sample& s : task.test) {
          samples.push_back(&s);
          task_of.push_back(task.index);
        }
      }
      Matrix feats(static_cast<int>(samples.size()), stream.feature_dim);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        std::copy(samples[i]->features.begin(), samples[i]->features.end(),
                  feats.row(static_cast<int>(i)));
      }
      const Matrix emb = learner->embed_analysis(feats);
      const PcaResult pca = pca_projection(emb, 2);
      csv = "x,y,class,task\n";
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const double x = pca.coords(static_cast<int>(i), 0);
        const double y =
            pca.components > 1 ? pca.coords(static_cast<int>(i), 1) : 0.0;
        csv += detail::fmt_double(x) + "," + detail::fmt_double(y) + "," +
               std::to_string(samples[i]->label) + "," +
               std::to_string(task_of[i]) + "\n";
      }
    }
  } else {
    throw InputError("unknown export kind '" + kind +
                     "' (accepted: accuracy-heatmap, weight-deltas, saliency, "
                     "pca)");
  }
  detail::write_file(out_path.string(), csv);
  return out_path.string();
}

}  // namespace dietcl
