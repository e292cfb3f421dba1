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

#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "dietcl/dietcl.hpp"

namespace {

int do_run(const std::string& config_path) {
  const dietcl::ParsedConfig parsed = dietcl::parse_config(config_path);
  if (parsed.grid) {
    std::fprintf(stderr,
                 "config %s defines a grid; use `dietcl grid -c %s`\n",
                 config_path.c_str(), config_path.c_str());
    return 2;
  }
  const dietcl::RunPaths paths = dietcl::cmd_run(parsed.run);
  std::printf("run complete: %s\n", paths.dir.c_str());
  std::printf("  record:     %s\n", paths.record_json.c_str());
  std::printf("  matrix:     %s\n", paths.matrix_csv.c_str());
  std::printf("  coresets:   %s\n", paths.coreset_json.c_str());
  std::printf("  checkpoint: %s\n", paths.checkpoint.c_str());
  return 0;
}

int do_grid(const std::string& config_path) {
  const dietcl::ParsedConfig parsed = dietcl::parse_config(config_path);
  if (!parsed.grid) {
    std::fprintf(stderr, "config %s has no grid.* keys\n",
                 config_path.c_str());
    return 2;
  }
  const dietcl::GridPaths paths = dietcl::cmd_grid(parsed.run, *parsed.grid);
  std::printf("grid complete: %zu cells, %d failed\n", paths.rows.size(),
              paths.failed_cells);
  std::printf("  results: %s\n", paths.results_csv.c_str());
  std::printf("  summary: %s\n", paths.summary_csv.c_str());
  return paths.failed_cells == 0 ? 0 : 1;
}

int do_oracle(const std::string& instance_path) {
  const dietcl::OracleReport report = dietcl::cmd_oracle(instance_path);
  auto print_set = [](const char* tag, const std::vector<int>& s, double v) {
    std::printf("%s value %.9f, subset {", tag, v);
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::printf("%s%d", i ? ", " : "", s[i]);
    }
    std::printf("}\n");
  };
  std::printf("objective %s, n=%d, quota=%d\n", report.objective.c_str(),
              report.n, report.quota);
  print_set("greedy    ", report.greedy, report.greedy_value);
  print_set("exhaustive", report.optimal, report.optimal_value);
  if (report.objective == "graphcut") {
    std::printf("greedy/optimal ratio: %.6f\n",
                report.optimal_value != 0.0
                    ? report.greedy_value / report.optimal_value
                    : 1.0);
  } else {
    std::printf("distance gap (greedy - optimal): %.9f\n",
                report.greedy_value - report.optimal_value);
  }
  return 0;
}

int do_export(const std::string& run_dir, const std::string& kind) {
  const std::string path = dietcl::cmd_export(run_dir, kind);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dietcl: class-incremental learning on selected-sample diets"};
  app.require_subcommand(1);

  std::string config_path, instance_path, run_dir, kind;

  CLI::App* run = app.add_subcommand("run", "execute one configured run");
  run->add_option("-c,--config", config_path, "run config file")->required();

  CLI::App* grid = app.add_subcommand("grid", "execute a sweep grid");
  grid->add_option("-c,--config", config_path, "grid config file")->required();

  CLI::App* oracle = app.add_subcommand(
      "oracle", "compare greedy selection against exhaustive enumeration");
  oracle->add_option("-i,--instance", instance_path, "instance file")
      ->required();

  CLI::App* exp = app.add_subcommand("export", "emit plot-ready CSVs");
  exp->add_option("-r,--run", run_dir, "run directory")->required();
  exp->add_option("-k,--kind", kind,
                  "accuracy-heatmap | weight-deltas | saliency | pca")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(config_path);
    if (grid->parsed()) return do_grid(config_path);
    if (oracle->parsed()) return do_oracle(instance_path);
    if (exp->parsed()) return do_export(run_dir, kind);
  } catch (const dietcl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
